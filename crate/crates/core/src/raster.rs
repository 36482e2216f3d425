//! Compact policy plots and stationarity detection.
//!
//! The rule of state `x` is drawn in the band `[3(x+1), 3(x+1)+1]`: a
//! probability `q` of action `a` at epoch `t` becomes the point
//! `(t, 3(x+1)+q)` labelled with `a`.

use serde::{Deserialize, Serialize};

use crate::model::Policy;

/// Probabilities at or below this are not drawn.
pub const RASTER_CUTOFF: f64 = 1e-6;
/// Default tolerance for [`stationarity_onset`].
pub const STATIONARITY_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterPoint {
    /// Decision epoch, counted from 1.
    pub t: usize,
    pub y: f64,
    pub action: usize,
    pub q: f64,
}

pub fn raster_points(policy: &Policy) -> Vec<RasterPoint> {
    let mut out = Vec::new();
    for (t, epoch) in policy.rules().iter().enumerate() {
        for (x, rule) in epoch.iter().enumerate() {
            for (action, &q) in rule.iter().enumerate() {
                if q > RASTER_CUTOFF {
                    out.push(RasterPoint {
                        t: t + 1,
                        y: 3.0 * (x as f64 + 1.0) + q,
                        action,
                        q,
                    });
                }
            }
        }
    }
    out
}

/// Smallest epoch `t0` (counted from 1) such that all rules from `t0` on
/// agree componentwise within `tol`. The last epoch always qualifies.
pub fn stationarity_onset(policy: &Policy, tol: f64) -> usize {
    let rules = policy.rules();
    let last = rules.len() - 1;
    let mut lo = rules[last].clone();
    let mut hi = rules[last].clone();
    let mut onset = last;
    for t in (0..last).rev() {
        let same_shape = rules[t].len() == lo.len() && rules[t].iter().zip(&lo).all(|(a, b)| a.len() == b.len());
        if !same_shape {
            break;
        }
        let fits = rules[t].iter().zip(lo.iter().zip(&hi)).all(|(rule, (l, h))| {
            rule.iter()
                .zip(l.iter().zip(h))
                .all(|(&v, (&l, &h))| v.max(h) - v.min(l) <= tol)
        });
        if !fits {
            break;
        }
        for (x, rule) in rules[t].iter().enumerate() {
            for (a, &v) in rule.iter().enumerate() {
                lo[x][a] = lo[x][a].min(v);
                hi[x][a] = hi[x][a].max(v);
            }
        }
        onset = t;
    }
    onset + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(rules: Vec<Vec<Vec<f64>>>) -> Policy {
        Policy::from_rules(rules).unwrap()
    }

    #[test]
    fn stationary_deterministic() {
        let p = policy(vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 4]);
        assert_eq!(stationarity_onset(&p, STATIONARITY_TOL), 1);
        let pts = raster_points(&p);
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|r| r.q == 1.0));
        assert_eq!(pts[1], RasterPoint { t: 1, y: 7.0, action: 1, q: 1.0 });
    }

    #[test]
    fn randomized_rule_encoding() {
        let p = policy(vec![vec![vec![0.4, 0.6]]]);
        let pts = raster_points(&p);
        assert_eq!(pts.len(), 2);
        assert!((pts[0].y - 3.4).abs() < 1e-15 && pts[0].action == 0);
        assert!((pts[1].y - 3.6).abs() < 1e-15 && pts[1].action == 1);
    }

    #[test]
    fn onset_after_transient() {
        let mut rules = vec![vec![vec![0.0, 1.0]]; 3];
        rules.extend(vec![vec![vec![1.0, 0.0]]; 5]);
        rules[5][0] = vec![0.9995, 0.0005];
        assert_eq!(stationarity_onset(&policy(rules.clone()), STATIONARITY_TOL), 4);
        rules[7][0] = vec![0.998, 0.002];
        // 0.002 vs 0.0 exceeds the tolerance, so only the last epoch qualifies.
        assert_eq!(stationarity_onset(&policy(rules), STATIONARITY_TOL), 8);
    }

    #[test]
    fn drift_counts_against_the_range() {
        // Neighbours differ by 6e-4 but the first and third by 1.2e-3.
        let rules = vec![
            vec![vec![0.5, 0.5]],
            vec![vec![0.5006, 0.4994]],
            vec![vec![0.5012, 0.4988]],
        ];
        assert_eq!(stationarity_onset(&policy(rules), STATIONARITY_TOL), 2);
    }
}
