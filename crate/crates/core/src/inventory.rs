//! Single-item inventory control instances.
//!
//! Stock `x` in `0..=M`, order `a` in `0..=M-x`, stock after ordering
//! `y = x + a`, next stock `max(y - D, 0)` with geometric demand `D`. Costs are
//! expectations over the day's demand, so they depend on `(x, a)` only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CostSpec, InstanceParts, ModelError, RiskCmdpInstance, Sense};

/// Which geometric law the demand parameter `p` describes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandConvention {
    /// `P(D = k) = (1 - p) p^k` on `{0, 1, ...}`; mean `p / (1 - p)`.
    Continuation,
    /// `P(D = k) = p (1 - p)^k` on `{0, 1, ...}`; mean `(1 - p) / p`.
    Success,
    /// `P(D = k) = p (1 - p)^(k-1)` on `{1, 2, ...}`; mean `1 / p`.
    #[default]
    Trials,
}

/// Geometric demand `P(D = k) = (1 - rho) rho^(k - start)` for `k >= start`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemandModel {
    ratio: f64,
    start: u32,
}

impl DemandModel {
    pub fn new(p: f64, convention: DemandConvention) -> Result<Self, InventoryError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(InventoryError::DemandParameter(p));
        }
        Ok(match convention {
            DemandConvention::Continuation => Self { ratio: p, start: 0 },
            DemandConvention::Success => Self { ratio: 1.0 - p, start: 0 },
            DemandConvention::Trials => Self { ratio: 1.0 - p, start: 1 },
        })
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match (k as i64) - self.start as i64 {
            j if j < 0 => 0.0,
            j => (1.0 - self.ratio) * self.ratio.powi(j as i32),
        }
    }

    /// `P(D >= k)`.
    pub fn tail(&self, k: usize) -> f64 {
        let j = (k as i64 - self.start as i64).max(0);
        self.ratio.powi(j as i32)
    }

    pub fn mean(&self) -> f64 {
        self.start as f64 + self.ratio / (1.0 - self.ratio)
    }
}

/// `E[(y - D)^+]`.
pub fn expected_holdover(y: usize, demand: &DemandModel) -> f64 {
    if y == 0 {
        return 0.0;
    }
    y as f64 - demand.mean() + expected_shortfall(y, demand)
}

/// `E[(D - y)^+] = sum_{k > y} P(D >= k)`.
pub fn expected_shortfall(y: usize, demand: &DemandModel) -> f64 {
    demand.tail(y + 1) / (1.0 - demand.ratio)
}

/// Distribution of the next stock level over `0..=capacity`.
pub fn inventory_transition(
    x: usize,
    a: usize,
    capacity: usize,
    demand: &DemandModel,
) -> Result<Vec<f64>, InventoryError> {
    if x > capacity || a > capacity - x {
        return Err(InventoryError::Order { stock: x, order: a, capacity });
    }
    let y = x + a;
    let mut row = vec![0.0; capacity + 1];
    row[0] = demand.tail(y);
    for (j, p) in row.iter_mut().enumerate().take(y + 1).skip(1) {
        *p = demand.pmf(y - j);
    }
    Ok(row)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InventoryExample {
    /// Ordering plus holding cost, bounded shortage cost.
    RunningCost,
    /// Ordering, holding and shortage cost, bounded order volume.
    OrderCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryParams {
    pub example: InventoryExample,
    pub capacity: usize,
    pub fixed_order_cost: f64,
    pub unit_order_cost: f64,
    pub holding_cost: f64,
    pub shortage_cost: f64,
    pub demand_p: f64,
    #[serde(default)]
    pub demand_convention: DemandConvention,
    pub gamma: f64,
    /// Constraint risk factor; alternatively give `gamma_c_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    /// `gamma_c = gamma_c_ratio * gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c_ratio: Option<f64>,
    pub beta: f64,
    pub beta_c: f64,
    /// Bound on the constraint value; alternatively give `normalized_bound`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::config::optional_bound")]
    pub bound: Option<f64>,
    /// `B = exp(gamma_c * normalized_bound)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_bound: Option<f64>,
    pub horizon: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InventoryError {
    #[error("demand parameter must lie in (0, 1), got {0}")]
    DemandParameter(f64),
    #[error("order {order} at stock {stock} exceeds capacity {capacity}")]
    Order { stock: usize, order: usize, capacity: usize },
    #[error("capacity must be at least 1")]
    Capacity,
    #[error("{0} must be nonnegative and finite")]
    Cost(&'static str),
    #[error("give exactly one of {0}")]
    Ambiguous(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl InventoryParams {
    /// First parameter set: `M = 5`, `p = 0.7`, `beta = 0.8`, `gamma = 0.5`,
    /// `gamma_c = 0.1 gamma`, normalized bound 0.6, `T = 30`.
    pub fn running_cost_defaults() -> Self {
        Self {
            example: InventoryExample::RunningCost,
            capacity: 5,
            fixed_order_cost: 0.2,
            unit_order_cost: 0.4,
            holding_cost: 0.1,
            shortage_cost: 1.0,
            demand_p: 0.7,
            demand_convention: DemandConvention::default(),
            gamma: 0.5,
            gamma_c: None,
            gamma_c_ratio: Some(0.1),
            beta: 0.8,
            beta_c: 0.8,
            bound: None,
            normalized_bound: Some(0.6),
            horizon: 30,
        }
    }

    /// Second parameter set: `O_u = 0.2`, `C_s = 6`, `p = 0.6`,
    /// `beta = 0.7`, `gamma_c = gamma`, the rest as in the first.
    pub fn order_count_defaults(gamma: f64, normalized_bound: f64, horizon: usize) -> Self {
        Self {
            example: InventoryExample::OrderCount,
            unit_order_cost: 0.2,
            shortage_cost: 6.0,
            demand_p: 0.6,
            gamma,
            gamma_c: None,
            gamma_c_ratio: Some(1.0),
            beta: 0.7,
            beta_c: 0.7,
            normalized_bound: Some(normalized_bound),
            horizon,
            ..Self::running_cost_defaults()
        }
    }

    pub fn resolved_gamma_c(&self) -> Result<f64, InventoryError> {
        match (self.gamma_c, self.gamma_c_ratio) {
            (Some(g), None) => Ok(g),
            (None, Some(r)) => Ok(r * self.gamma),
            _ => Err(InventoryError::Ambiguous("gamma_c, gamma_c_ratio")),
        }
    }

    pub fn resolved_bound(&self) -> Result<f64, InventoryError> {
        match (self.bound, self.normalized_bound) {
            (Some(b), None) => Ok(b),
            (None, Some(v)) => Ok((self.resolved_gamma_c()? * v).exp()),
            _ => Err(InventoryError::Ambiguous("bound, normalized_bound")),
        }
    }

    pub fn demand(&self) -> Result<DemandModel, InventoryError> {
        DemandModel::new(self.demand_p, self.demand_convention)
    }

    fn validate(&self) -> Result<(), InventoryError> {
        if self.capacity == 0 {
            return Err(InventoryError::Capacity);
        }
        for (name, v) in [
            ("fixed_order_cost", self.fixed_order_cost),
            ("unit_order_cost", self.unit_order_cost),
            ("holding_cost", self.holding_cost),
            ("shortage_cost", self.shortage_cost),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(InventoryError::Cost(name));
            }
        }
        Ok(())
    }

    /// Build the instance selected by `example`.
    pub fn build(&self) -> Result<RiskCmdpInstance, InventoryError> {
        match self.example {
            InventoryExample::RunningCost => build_inventory_example1(self),
            InventoryExample::OrderCount => build_inventory_example2(self),
        }
    }
}

fn ordering_cost(p: &InventoryParams, a: usize) -> f64 {
    if a > 0 {
        p.fixed_order_cost + a as f64 * p.unit_order_cost
    } else {
        0.0
    }
}

/// `alpha(x) = (M - x + 1) / sum_s (M - s + 1)`.
pub fn initial_distribution(capacity: usize) -> Vec<f64> {
    let total = ((capacity + 1) * (capacity + 2) / 2) as f64;
    (0..=capacity).map(|x| (capacity - x + 1) as f64 / total).collect()
}

fn assemble(
    params: &InventoryParams,
    reward: impl Fn(usize, usize) -> f64,
    constraint: impl Fn(usize, usize) -> f64,
) -> Result<RiskCmdpInstance, InventoryError> {
    params.validate()?;
    let demand = params.demand()?;
    let m = params.capacity;
    let n = m + 1;
    let horizon = params.horizon;
    if horizon < 2 {
        return Err(ModelError::HorizonTooShort(horizon).into());
    }
    let labels: Vec<String> = (0..n).map(|x| x.to_string()).collect();
    let actions: Vec<usize> = (0..n).map(|x| m - x + 1).collect();
    let kernel_epoch = (0..n)
        .map(|x| (0..m - x + 1).map(|a| inventory_transition(x, a, m, &demand)).collect())
        .collect::<Result<Vec<Vec<_>>, _>>()?;
    // (x, a) costs, replicated over x'.
    let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
        (0..n)
            .map(|x| (0..m - x + 1).map(|a| vec![f(x, a); n]).collect())
            .collect()
    };
    let alpha = initial_distribution(m);
    let reward = CostSpec {
        running: vec![table(&reward); horizon - 1],
        terminal: vec![0.0; n],
        gamma: params.gamma,
        beta: params.beta,
        alpha: alpha.clone(),
    };
    let constraint = CostSpec {
        running: vec![table(&constraint); horizon - 1],
        terminal: vec![0.0; n],
        gamma: params.resolved_gamma_c()?,
        beta: params.beta_c,
        alpha,
    };
    Ok(RiskCmdpInstance::new(InstanceParts {
        horizon,
        states: vec![labels; horizon],
        actions: vec![actions; horizon - 1],
        kernel: vec![kernel_epoch; horizon - 1],
        reward,
        constraint,
        bound: params.resolved_bound()?,
        sense: Sense::Minimize,
    })?)
}

/// Minimize ordering plus holding cost subject to a bound on the shortage cost.
pub fn build_inventory_example1(params: &InventoryParams) -> Result<RiskCmdpInstance, InventoryError> {
    let demand = params.demand()?;
    assemble(
        params,
        |x, a| ordering_cost(params, a) + params.holding_cost * expected_holdover(x + a, &demand),
        |x, a| params.shortage_cost * expected_shortfall(x + a, &demand),
    )
}

/// Minimize ordering, holding and shortage cost subject to a bound on the
/// quantity ordered.
pub fn build_inventory_example2(params: &InventoryParams) -> Result<RiskCmdpInstance, InventoryError> {
    let demand = params.demand()?;
    assemble(
        params,
        |x, a| {
            ordering_cost(params, a)
                + params.holding_cost * expected_holdover(x + a, &demand)
                + params.shortage_cost * expected_shortfall(x + a, &demand)
        },
        |_, a| a as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostKind;

    fn continuation(p: f64) -> DemandModel {
        DemandModel::new(p, DemandConvention::Continuation).unwrap()
    }

    fn direct(y: usize, d: &DemandModel) -> (f64, f64) {
        (0..=200).fold((0.0, 0.0), |(h, s), k| {
            let pk = d.pmf(k);
            (h + pk * (y as f64 - k as f64).max(0.0), s + pk * (k as f64 - y as f64).max(0.0))
        })
    }

    #[test]
    fn closed_forms_match_summation() {
        for convention in [DemandConvention::Continuation, DemandConvention::Success, DemandConvention::Trials] {
            for p in [0.5, 0.6, 0.7] {
                let d = DemandModel::new(p, convention).unwrap();
                for y in 0..=5 {
                    let (h, s) = direct(y, &d);
                    assert!((expected_holdover(y, &d) - h).abs() < 1e-12, "{convention:?} {p} {y}");
                    assert!((expected_shortfall(y, &d) - s).abs() < 1e-12, "{convention:?} {p} {y}");
                }
            }
        }
    }

    #[test]
    fn continuation_values() {
        assert_eq!(expected_holdover(0, &continuation(0.5)), 0.0);
        assert!((expected_holdover(2, &continuation(0.5)) - 1.25).abs() < 1e-15);
        let d = continuation(0.7);
        assert!((expected_holdover(5, &d) - (5.0 - 7.0 / 3.0 + 0.7f64.powi(6) / 0.3)).abs() < 1e-12);
        assert!((expected_holdover(5, &d) - 3.058830).abs() < 1e-6);
        assert!((expected_shortfall(0, &continuation(0.5)) - 1.0).abs() < 1e-15);
        assert!((expected_shortfall(5, &d) - 0.392163).abs() < 1e-6);
        for y in 0..=5 {
            let lhs = expected_holdover(y, &d) - expected_shortfall(y, &d);
            assert!((lhs - (y as f64 - d.mean())).abs() < 1e-12);
        }
    }

    #[test]
    fn other_conventions_have_their_means() {
        let s = DemandModel::new(0.7, DemandConvention::Success).unwrap();
        assert!((s.mean() - 0.3 / 0.7).abs() < 1e-15);
        let t = DemandModel::new(0.7, DemandConvention::Trials).unwrap();
        assert!((t.mean() - 1.0 / 0.7).abs() < 1e-15);
        assert_eq!(t.pmf(0), 0.0);
        assert_eq!(t.tail(1), 1.0);
        assert!(DemandModel::new(1.0, DemandConvention::Trials).is_err());
    }

    #[test]
    fn transition_rows() {
        assert_eq!(inventory_transition(0, 0, 5, &continuation(0.5)).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let row = inventory_transition(1, 1, 5, &continuation(0.5)).unwrap();
        assert_eq!(&row[..3], &[0.25, 0.25, 0.5]);
        for convention in [DemandConvention::Continuation, DemandConvention::Success, DemandConvention::Trials] {
            let d = DemandModel::new(0.7, convention).unwrap();
            for x in 0..=5 {
                for a in 0..=5 - x {
                    let row = inventory_transition(x, a, 5, &d).unwrap();
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                    assert!(row[x + a + 1..].iter().all(|&p| p == 0.0));
                }
            }
        }
        assert!(inventory_transition(2, 4, 5, &continuation(0.5)).is_err());
    }

    #[test]
    fn example1_defaults() {
        let params = InventoryParams {
            demand_convention: DemandConvention::Continuation,
            ..InventoryParams::running_cost_defaults()
        };
        let inst = build_inventory_example1(&params).unwrap();
        assert_eq!(inst.sense(), Sense::Minimize);
        assert!((inst.alpha(CostKind::Reward)[0] - 6.0 / 21.0).abs() < 1e-15);
        assert!((inst.bound() - 0.03f64.exp()).abs() < 1e-15);
        assert!((inst.cost_spec(CostKind::Constraint).gamma - 0.05).abs() < 1e-15);
        let r = &inst.cost_spec(CostKind::Reward).running[0];
        assert_eq!(r[0][0][0], 0.0);
        let c = &inst.cost_spec(CostKind::Constraint).running[3];
        assert!((c[5][0][2] - 0.7f64.powi(6) / 0.3).abs() < 1e-15);
        assert_eq!(
            inst.action_counts()[0],
            vec![6, 5, 4, 3, 2, 1]
        );
    }

    #[test]
    fn example2_costs() {
        let params = InventoryParams {
            demand_convention: DemandConvention::Continuation,
            ..InventoryParams::order_count_defaults(2.0, 6.0, 10)
        };
        let inst = build_inventory_example2(&params).unwrap();
        let c = &inst.cost_spec(CostKind::Constraint).running[0];
        assert!((0..6).all(|x| c[x][0][0] == 0.0));
        assert_eq!(c[1][3][0], 3.0);
        let d = continuation(0.6);
        let expected = 0.2 + 5.0 * 0.2 + 0.1 * expected_holdover(5, &d) + 6.0 * expected_shortfall(5, &d);
        assert!((inst.cost_spec(CostKind::Reward).running[0][0][5][1] - expected).abs() < 1e-15);
        assert!((inst.bound() - 12.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn ambiguous_bound_rejected() {
        let params = InventoryParams {
            bound: Some(2.0),
            ..InventoryParams::running_cost_defaults()
        };
        assert!(matches!(params.build(), Err(InventoryError::Ambiguous(_))));
    }

    #[test]
    fn params_json_roundtrip() {
        let params = InventoryParams::running_cost_defaults();
        let text = serde_json::to_string(&params).unwrap();
        assert_eq!(serde_json::from_str::<InventoryParams>(&text).unwrap(), params);
    }
}
