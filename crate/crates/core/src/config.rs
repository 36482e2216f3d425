//! JSON configuration documents.
//!
//! A document either describes an instance explicitly or holds an
//! `inventory` block. Both may carry a `solver` block with [`GrcConfig`]
//! fields. Shared tables (one state space, one kernel, costs without the
//! successor index) are expanded to per-epoch form on load.
//!
//! ```json
//! {
//!   "horizon": 3,
//!   "states": 2,
//!   "actions": [2, 1],
//!   "kernel": [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0]]],
//!   "reward": {"running": {"expected": [[0, 1], [2]]}, "gamma": 1, "beta": 0.9},
//!   "constraint": {"running": {"expected": [[0, 1], [0]]}, "gamma": 0.5, "beta": 0.9},
//!   "bound": "inf",
//!   "sense": "maximize"
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grc::GrcConfig;
use crate::inventory::{InventoryError, InventoryParams};
use crate::model::{CostKind, CostSpec, InstanceParts, ModelError, RiskCmdpInstance, Sense};

/// Serialize an `f64` bound with `+inf` written as the string `"inf"`.
pub mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "+inf" | "infinity") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bound must be a number or \"inf\", got {t:?}"))),
        }
    }
}

/// [`bound`] for optional fields.
pub mod optional_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::bound::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::bound")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatesConfig {
    Count(usize),
    Labels(Vec<String>),
    PerEpoch(Vec<Vec<String>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionsConfig {
    Uniform(usize),
    PerState(Vec<usize>),
    PerEpoch(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelConfig {
    Shared(Vec<Vec<Vec<f64>>>),
    PerEpoch(Vec<Vec<Vec<Vec<f64>>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunningConfig {
    /// `[x][a]`, the same at every epoch and for every successor.
    Expected(Vec<Vec<f64>>),
    /// `[t][x][a]`.
    ExpectedPerEpoch(Vec<Vec<Vec<f64>>>),
    /// `[x][a][x']`, the same at every epoch.
    Full(Vec<Vec<Vec<f64>>>),
    /// `[t][x][a][x']`.
    FullPerEpoch(Vec<Vec<Vec<Vec<f64>>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub running: RunningConfig,
    /// Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
    pub gamma: f64,
    pub beta: f64,
    /// Uniform over the first state space when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub horizon: usize,
    pub states: StatesConfig,
    pub actions: ActionsConfig,
    pub kernel: KernelConfig,
    pub reward: CostConfig,
    /// Required unless the bound is infinite; all-zero costs otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<CostConfig>,
    #[serde(default = "infinite", with = "bound")]
    pub bound: f64,
    pub sense: Sense,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<GrcConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryConfig {
    pub inventory: InventoryParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<GrcConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigDocument {
    Explicit(InstanceConfig),
    Inventory(InventoryConfig),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        let message = e.to_string();
        // serde_json appends the position to its message; keep it separate.
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        if probe.get("inventory").is_some() {
            Ok(Self::Inventory(serde_json::from_str(text)?))
        } else {
            Ok(Self::Explicit(serde_json::from_str(text)?))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn solver(&self) -> GrcConfig {
        match self {
            Self::Explicit(c) => c.solver.clone(),
            Self::Inventory(c) => c.solver.clone(),
        }
        .unwrap_or_default()
    }

    pub fn build(&self) -> Result<RiskCmdpInstance, ConfigError> {
        match self {
            Self::Explicit(c) => build_instance(c),
            Self::Inventory(c) => Ok(c.inventory.build()?),
        }
    }

    /// The same problem with another horizon. Explicit documents must use
    /// shared (per-epoch free) tables.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self, ConfigError> {
        match self {
            Self::Inventory(c) => {
                let mut c = c.clone();
                c.inventory.horizon = horizon;
                Ok(Self::Inventory(c))
            }
            Self::Explicit(c) => {
                let explicit = |what: &str| ConfigError::Shape(format!("cannot change the horizon of an instance with per-epoch {what}"));
                if matches!(c.states, StatesConfig::PerEpoch(_)) {
                    return Err(explicit("states"));
                }
                if matches!(c.actions, ActionsConfig::PerEpoch(_)) {
                    return Err(explicit("actions"));
                }
                if matches!(c.kernel, KernelConfig::PerEpoch(_)) {
                    return Err(explicit("kernel"));
                }
                let per_epoch_costs = |cost: &CostConfig| {
                    matches!(cost.running, RunningConfig::ExpectedPerEpoch(_) | RunningConfig::FullPerEpoch(_))
                };
                if per_epoch_costs(&c.reward) || c.constraint.as_ref().is_some_and(per_epoch_costs) {
                    return Err(explicit("costs"));
                }
                Ok(Self::Explicit(InstanceConfig { horizon, ..c.clone() }))
            }
        }
    }

    /// Set the reward risk factor. For inventory documents with
    /// `gamma_c_ratio` or `normalized_bound` the constraint follows.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        match self {
            Self::Inventory(c) => {
                let mut c = c.clone();
                c.inventory.gamma = gamma;
                Self::Inventory(c)
            }
            Self::Explicit(c) => {
                let mut c = c.clone();
                c.reward.gamma = gamma;
                Self::Explicit(c)
            }
        }
    }
}

fn shape(msg: String) -> ConfigError {
    ConfigError::Shape(msg)
}

fn expand_states(c: &InstanceConfig) -> Result<Vec<Vec<String>>, ConfigError> {
    let h = c.horizon;
    Ok(match &c.states {
        StatesConfig::Count(n) => vec![(0..*n).map(|i| i.to_string()).collect(); h],
        StatesConfig::Labels(l) => vec![l.clone(); h],
        StatesConfig::PerEpoch(v) => {
            if v.len() != h {
                return Err(shape(format!("states: expected {h} epochs, got {}", v.len())));
            }
            v.clone()
        }
    })
}

fn expand_actions(c: &InstanceConfig, states: &[Vec<String>]) -> Result<Vec<Vec<usize>>, ConfigError> {
    let d = c.horizon.saturating_sub(1);
    Ok(match &c.actions {
        ActionsConfig::Uniform(n) => (0..d).map(|t| vec![*n; states[t].len()]).collect(),
        ActionsConfig::PerState(v) => vec![v.clone(); d],
        ActionsConfig::PerEpoch(v) => {
            if v.len() != d {
                return Err(shape(format!("actions: expected {d} decision epochs, got {}", v.len())));
            }
            v.clone()
        }
    })
}

fn expand_running(
    kind: CostKind,
    running: &RunningConfig,
    states: &[Vec<String>],
    actions: &[Vec<usize>],
) -> Result<Vec<Vec<Vec<Vec<f64>>>>, ConfigError> {
    let d = actions.len();
    let spread = |t: usize, table: &[Vec<f64>]| -> Vec<Vec<Vec<f64>>> {
        table
            .iter()
            .map(|row| row.iter().map(|&v| vec![v; states[t + 1].len()]).collect())
            .collect()
    };
    let per_epoch = |len: usize| -> Result<(), ConfigError> {
        if len == d {
            Ok(())
        } else {
            Err(shape(format!("{kind} running costs: expected {d} decision epochs, got {len}")))
        }
    };
    Ok(match running {
        RunningConfig::Expected(table) => (0..d).map(|t| spread(t, table)).collect(),
        RunningConfig::ExpectedPerEpoch(tables) => {
            per_epoch(tables.len())?;
            tables.iter().enumerate().map(|(t, table)| spread(t, table)).collect()
        }
        RunningConfig::Full(table) => vec![table.clone(); d],
        RunningConfig::FullPerEpoch(tables) => {
            per_epoch(tables.len())?;
            tables.clone()
        }
    })
}

fn expand_cost(
    kind: CostKind,
    cost: &CostConfig,
    states: &[Vec<String>],
    actions: &[Vec<usize>],
) -> Result<CostSpec, ConfigError> {
    let first = states[0].len();
    let last = states[states.len() - 1].len();
    Ok(CostSpec {
        running: expand_running(kind, &cost.running, states, actions)?,
        terminal: cost.terminal.clone().unwrap_or_else(|| vec![0.0; last]),
        gamma: cost.gamma,
        beta: cost.beta,
        alpha: cost.alpha.clone().unwrap_or_else(|| vec![1.0 / first as f64; first]),
    })
}

/// Expand an explicit configuration and validate the instance.
pub fn build_instance(c: &InstanceConfig) -> Result<RiskCmdpInstance, ConfigError> {
    if c.horizon < 2 {
        return Err(ModelError::HorizonTooShort(c.horizon).into());
    }
    let states = expand_states(c)?;
    if let Some(epoch) = states.iter().position(|s| s.is_empty()) {
        return Err(ModelError::EmptyStateSpace { epoch }.into());
    }
    let actions = expand_actions(c, &states)?;
    let kernel = match &c.kernel {
        KernelConfig::Shared(k) => vec![k.clone(); c.horizon - 1],
        KernelConfig::PerEpoch(k) => k.clone(),
    };
    let reward = expand_cost(CostKind::Reward, &c.reward, &states, &actions)?;
    let constraint = match &c.constraint {
        Some(cost) => expand_cost(CostKind::Constraint, cost, &states, &actions)?,
        None if c.bound.is_infinite() => CostSpec {
            running: reward
                .running
                .iter()
                .map(|e| e.iter().map(|s| s.iter().map(|r| vec![0.0; r.len()]).collect()).collect())
                .collect(),
            terminal: vec![0.0; reward.terminal.len()],
            gamma: 1.0,
            beta: 1.0,
            alpha: reward.alpha.clone(),
        },
        None => return Err(shape("a finite bound needs a constraint block".into())),
    };
    Ok(RiskCmdpInstance::new(InstanceParts {
        horizon: c.horizon,
        states,
        actions,
        kernel,
        reward,
        constraint,
        bound: c.bound,
        sense: c.sense,
    })?)
}

fn cost_config(spec: &CostSpec) -> CostConfig {
    CostConfig {
        running: RunningConfig::FullPerEpoch(spec.running.clone()),
        terminal: Some(spec.terminal.clone()),
        gamma: spec.gamma,
        beta: spec.beta,
        alpha: Some(spec.alpha.clone()),
    }
}

/// Fully expanded configuration of `instance`; [`build_instance`] inverts it.
pub fn to_config(instance: &RiskCmdpInstance) -> InstanceConfig {
    let p = instance.parts();
    InstanceConfig {
        horizon: p.horizon,
        states: StatesConfig::PerEpoch(p.states.clone()),
        actions: ActionsConfig::PerEpoch(p.actions.clone()),
        kernel: KernelConfig::PerEpoch(p.kernel.clone()),
        reward: cost_config(&p.reward),
        constraint: Some(cost_config(&p.constraint)),
        bound: p.bound,
        sense: p.sense,
        solver: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, toy, RandomInstanceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MODULE_EXAMPLE: &str = r#"{
      "horizon": 3,
      "states": 2,
      "actions": [2, 1],
      "kernel": [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0]]],
      "reward": {"running": {"expected": [[0, 1], [2]]}, "gamma": 1, "beta": 0.9},
      "constraint": {"running": {"expected": [[0, 1], [0]]}, "gamma": 0.5, "beta": 0.9},
      "bound": "inf",
      "sense": "maximize"
    }"#;

    #[test]
    fn module_example_builds() {
        let inst = ConfigDocument::parse(MODULE_EXAMPLE).unwrap().build().unwrap();
        assert_eq!(inst.horizon(), 3);
        assert!(!inst.is_constrained());
        assert_eq!(inst.cost_spec(CostKind::Reward).running[1][1][0], vec![2.0, 2.0]);
        assert_eq!(inst.alpha(CostKind::Reward), &[0.5, 0.5]);
    }

    #[test]
    fn roundtrip_through_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bound in [f64::INFINITY, 2.5] {
            let spec = RandomInstanceSpec { bound, ..RandomInstanceSpec::default() };
            let inst = random_instance(&spec, &mut rng);
            let text = serde_json::to_string_pretty(&to_config(&inst)).unwrap();
            let back = ConfigDocument::parse(&text).unwrap().build().unwrap();
            assert_eq!(back, inst);
        }
        let text = serde_json::to_string(&to_config(&toy(0.5f64.exp()))).unwrap();
        assert!(!text.contains("\"inf\""));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let broken = MODULE_EXAMPLE.replace("\"sense\": \"maximize\"", "\"sense\": \"sideways\"");
        match ConfigDocument::parse(&broken) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_kernel_row_reported() {
        let broken = MODULE_EXAMPLE.replace("[[0.5, 0.5], [1.0, 0.0]]", "[[0.5, 0.4], [1.0, 0.0]]");
        let err = ConfigDocument::parse(&broken).unwrap().build().unwrap_err();
        assert!(matches!(err, ConfigError::Model(ModelError::KernelRow { epoch: 0, state: 0, action: 0, .. })));
    }

    #[test]
    fn finite_bound_needs_constraint() {
        let text = r#"{"horizon": 2, "states": 1, "actions": 1, "kernel": [[[1.0]]],
            "reward": {"running": {"expected": [[0]]}, "gamma": 1, "beta": 1},
            "bound": 2, "sense": "minimize"}"#;
        assert!(matches!(ConfigDocument::parse(text).unwrap().build(), Err(ConfigError::Shape(_))));
    }

    #[test]
    fn inventory_block() {
        let text = r#"{"inventory": {"example": "running_cost", "capacity": 5,
            "fixed_order_cost": 0.2, "unit_order_cost": 0.4, "holding_cost": 0.1,
            "shortage_cost": 1, "demand_p": 0.7, "gamma": 0.5, "gamma_c_ratio": 0.1,
            "beta": 0.8, "beta_c": 0.8, "normalized_bound": 0.6, "horizon": 4},
            "solver": {"max_iters": 7}}"#;
        let doc = ConfigDocument::parse(text).unwrap();
        assert_eq!(doc.solver().max_iters, 7);
        let inst = doc.build().unwrap();
        assert_eq!(inst.horizon(), 4);
        assert_eq!(inst.sense(), Sense::Minimize);
        assert_eq!(doc.with_horizon(9).unwrap().build().unwrap().horizon(), 9);
    }

    #[test]
    fn horizon_change_on_shared_tables() {
        let doc = ConfigDocument::parse(MODULE_EXAMPLE).unwrap();
        assert_eq!(doc.with_horizon(6).unwrap().build().unwrap().horizon(), 6);
        let full = ConfigDocument::Explicit(to_config(&doc.build().unwrap()));
        assert!(full.with_horizon(6).is_err());
    }
}
