//! Runtime checks of the analytical machinery behind the consensus result:
//! the per-step dissent drop, δ-triviality of components, the spectral
//! bounds on algebraic connectivity, and tail oscillation of trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentStates, DynamicsError, WorldState};
use crate::graph::{DynamicGraph, CHEEGER_MAX_N};

/// Relative slack for the dissent-drop inequality.
pub const DROP_RELATIVE_TOLERANCE: f64 = 1e-9;
/// Absolute slack for the Cheeger sandwich.
pub const SANDWICH_TOLERANCE: f64 = 1e-8;
/// Absolute slack for the `2/n^3` connectivity floor.
pub const CONNECTIVITY_FLOOR_TOLERANCE: f64 = 1e-12;

pub const CHECK_DROP: &str = "dissent_drop";
pub const CHECK_CHEEGER_UPPER: &str = "cheeger_upper";
pub const CHECK_CHEEGER_LOWER: &str = "cheeger_lower";
pub const CHECK_CONNECTIVITY_FLOOR: &str = "lambda2_floor";

/// Outcome of a single inequality check. `margin` is the signed slack
/// (positive when satisfied); `holds` is `margin >= -tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub holds: bool,
    pub applicable: bool,
    pub margin: f64,
    pub tolerance: f64,
    pub context: String,
}

impl CheckResult {
    pub fn evaluate(name: &str, margin: f64, tolerance: f64, context: String) -> Self {
        Self {
            name: name.to_owned(),
            holds: margin >= -tolerance,
            applicable: true,
            margin,
            tolerance,
            context,
        }
    }

    pub fn not_applicable(name: &str, context: String) -> Self {
        Self {
            name: name.to_owned(),
            holds: true,
            applicable: false,
            margin: 0.0,
            tolerance: 0.0,
            context,
        }
    }
}

/// Sampled diagnostics of one run. Series entries are `(t, value)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub z: Vec<(u64, f64)>,
    pub diameter: Vec<(u64, f64)>,
    pub drop_violations: Vec<CheckResult>,
    pub drop_violation_count: usize,
    /// Largest intra-component diameter at each sample (verify mode only).
    pub component_delta: Option<Vec<(u64, f64)>>,
}

fn check_sizes(states: &AgentStates, g: &DynamicGraph) -> Result<(), DynamicsError> {
    if states.len() == g.n() {
        Ok(())
    } else {
        Err(DynamicsError::SizeMismatch {
            states: states.len(),
            graph: g.n(),
        })
    }
}

/// Dissent `Z = Σ_{i,j} (x_i - x_j)^2 1{(i,j) ∈ E}` over ordered pairs,
/// computed as twice the sum over undirected edges.
pub fn dissent_z(states: &AgentStates, g: &DynamicGraph) -> Result<f64, DynamicsError> {
    check_sizes(states, g)?;
    let x = states.values();
    let edge_sum: f64 = g
        .edges()
        .map(|(u, v)| {
            let d = x[u] - x[v];
            d * d
        })
        .sum();
    Ok(2.0 * edge_sum)
}

/// Drop inequality `Z_t - Z_{t+1} >= 2 Σ_i (Δx_i)^2` from precomputed parts.
/// `twice_sq_change` is `2 Σ_i (Δx_i)^2`.
pub fn supermartingale_check(
    z_before: f64,
    z_after: f64,
    twice_sq_change: f64,
    context: String,
) -> CheckResult {
    let margin = (z_before - z_after) - twice_sq_change;
    let tolerance = DROP_RELATIVE_TOLERANCE * z_before.max(1.0);
    CheckResult::evaluate(CHECK_DROP, margin, tolerance, context)
}

/// Drop inequality between a world and its successor.
pub fn check_supermartingale_step(before: &WorldState, after: &WorldState) -> CheckResult {
    let z_before = dissent_z(&before.states, &before.graph).unwrap_or(f64::NAN);
    let z_after = dissent_z(&after.states, &after.graph).unwrap_or(f64::NAN);
    let sq: f64 = before
        .states
        .values()
        .iter()
        .zip(after.states.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    supermartingale_check(
        z_before,
        z_after,
        2.0 * sq,
        format!("t={} -> t={}", before.t, after.t),
    )
}

/// Largest pairwise state difference inside each connected component,
/// in component-id order.
pub fn component_deltas(states: &AgentStates, g: &DynamicGraph) -> Result<Vec<f64>, DynamicsError> {
    check_sizes(states, g)?;
    let parts = g.components();
    let mut lo = vec![f64::INFINITY; parts.count];
    let mut hi = vec![f64::NEG_INFINITY; parts.count];
    for (v, &c) in parts.assignments.iter().enumerate() {
        lo[c] = lo[c].min(states[v]);
        hi[c] = hi[c].max(states[v]);
    }
    Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).collect())
}

/// Cheeger sandwich `2 i(G) >= λ2 >= i(G)^2 / (2 Δ(G))` (for `n <= 16`) and
/// the connectivity floor `λ2 >= 2 / n^3` (for connected graphs).
pub fn check_spectral_bounds(g: &DynamicGraph) -> Vec<CheckResult> {
    let n = g.n();
    let ctx = format!("n={n} edges={} max_degree={}", g.edge_count(), g.max_degree());
    if n < 2 {
        return [CHECK_CHEEGER_UPPER, CHECK_CHEEGER_LOWER, CHECK_CONNECTIVITY_FLOOR]
            .iter()
            .map(|name| CheckResult::not_applicable(name, format!("{ctx}: fewer than 2 vertices")))
            .collect();
    }
    let lambda2 = g.lambda2().expect("n >= 2");
    let mut out = Vec::with_capacity(3);

    if n <= CHEEGER_MAX_N {
        let i = g.cheeger_constant().expect("n within exhaustive range");
        let delta = g.max_degree() as f64;
        let lower = if delta > 0.0 { i * i / (2.0 * delta) } else { 0.0 };
        let ctx = format!("{ctx} i={i} lambda2={lambda2}");
        out.push(CheckResult::evaluate(
            CHECK_CHEEGER_UPPER,
            2.0 * i - lambda2,
            SANDWICH_TOLERANCE,
            ctx.clone(),
        ));
        out.push(CheckResult::evaluate(
            CHECK_CHEEGER_LOWER,
            lambda2 - lower,
            SANDWICH_TOLERANCE,
            ctx,
        ));
    } else {
        for name in [CHECK_CHEEGER_UPPER, CHECK_CHEEGER_LOWER] {
            out.push(CheckResult::not_applicable(
                name,
                format!("{ctx}: exhaustive Cheeger constant limited to n <= {CHEEGER_MAX_N}"),
            ));
        }
    }

    if g.is_connected() {
        let floor = 2.0 / (n as f64).powi(3);
        out.push(CheckResult::evaluate(
            CHECK_CONNECTIVITY_FLOOR,
            lambda2 - floor,
            CONNECTIVITY_FLOOR_TOLERANCE,
            format!("{ctx} lambda2={lambda2} floor={floor}"),
        ));
    } else {
        out.push(CheckResult::not_applicable(
            CHECK_CONNECTIVITY_FLOOR,
            format!("{ctx}: graph is disconnected"),
        ));
    }
    out
}

/// Per-agent `max - min` over the last `window` sampled state vectors.
pub fn convergence_tail(trajectory: &[Vec<f64>], window: usize) -> Result<Vec<f64>, DynamicsError> {
    if window == 0 || window > trajectory.len() {
        return Err(DynamicsError::InvalidParam {
            name: "window",
            reason: format!("{window} not in 1..={}", trajectory.len()),
        });
    }
    let tail = &trajectory[trajectory.len() - window..];
    let n = tail[0].len();
    if tail.iter().any(|s| s.len() != n) {
        return Err(DynamicsError::InvalidParam {
            name: "trajectory",
            reason: "samples have differing lengths".into(),
        });
    }
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s[i]), hi.max(s[i]))
            });
            hi - lo
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_with_agent, SimParams, StepStreams};
    use crate::rng::RngStream;

    fn states(v: &[f64]) -> AgentStates {
        AgentStates::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dissent_examples() {
        let k2 = DynamicGraph::complete(2).unwrap();
        assert_eq!(dissent_z(&states(&[0.0, 1.0]), &k2).unwrap(), 2.0);

        let k5 = DynamicGraph::complete(5).unwrap();
        assert_eq!(dissent_z(&states(&[0.7; 5]), &k5).unwrap(), 0.0);

        let p3 = DynamicGraph::path(3).unwrap();
        assert_eq!(dissent_z(&states(&[0.0, 1.0, 3.0]), &p3).unwrap(), 10.0);

        assert!(dissent_z(&states(&[0.0]), &p3).is_err());
    }

    #[test]
    fn isolated_selection_has_zero_margin() {
        let params = SimParams::new(3, 0.5, 0.0, 0.0, 1e-3, 10).unwrap();
        let g = DynamicGraph::from_edges(3, &[(0, 1)]).unwrap();
        let before = WorldState::new(g, states(&[0.1, 0.5, 0.9])).unwrap();
        let mut after = before.clone();
        let mut s = StepStreams::from_root(&RngStream::new(0)).unwrap();
        step_with_agent(&mut after, &params, 2, &mut s).unwrap();
        let r = check_supermartingale_step(&before, &after);
        assert!(r.holds);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn flip_addition_violates_drop() {
        // Agent 1 averages over {1, 2} with equal states (no change), then
        // the flip mechanism adds {3, 4} joining differing opinions.
        let g = DynamicGraph::from_edges(4, &[(0, 1)]).unwrap();
        let before = WorldState::new(g, states(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        let mut after = before.clone();
        after.graph.insert_edge(2, 3);
        after.t += 1;
        let r = check_supermartingale_step(&before, &after);
        assert_eq!(r.margin, -2.0);
        assert!(!r.holds);
        assert_eq!(r.name, CHECK_DROP);
    }

    #[test]
    fn component_delta_examples() {
        let k3 = DynamicGraph::complete(3).unwrap();
        let d = component_deltas(&states(&[0.1, 0.4, 0.2]), &k3).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - 0.3).abs() < 1e-15);

        let empty = DynamicGraph::empty(3).unwrap();
        assert_eq!(
            component_deltas(&states(&[0.1, 0.4, 0.2]), &empty).unwrap(),
            vec![0.0; 3]
        );

        let g = DynamicGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(
            component_deltas(&states(&[0.0, 1.0, 5.0]), &g).unwrap(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn spectral_bounds_k4() {
        let results = check_spectral_bounds(&DynamicGraph::complete(4).unwrap());
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|r| r.holds && r.applicable));
        let upper = &results[0];
        assert!(upper.margin.abs() < 1e-12, "2i - λ2 = {}", upper.margin);
        let lower = &results[1];
        assert!((lower.margin - (4.0 - 4.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn spectral_bounds_disconnected() {
        let g = DynamicGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let results = check_spectral_bounds(&g);
        assert_eq!(g.lambda2().unwrap(), 0.0);
        let floor = results.iter().find(|r| r.name == CHECK_CONNECTIVITY_FLOOR).unwrap();
        assert!(!floor.applicable);
        assert!(floor.holds);
        assert!(results.iter().all(|r| r.holds));
    }

    #[test]
    fn spectral_bounds_large_graph_skips_sandwich() {
        let mut rng = RngStream::new(10);
        let g = crate::graph::er_connected(100, 0.05, &mut rng, 1000).unwrap();
        let results = check_spectral_bounds(&g);
        assert!(!results[0].applicable && !results[1].applicable);
        assert!(results[2].applicable && results[2].holds);
        assert!(results[2].margin > 0.0);
    }

    #[test]
    fn tail_examples() {
        let constant = vec![vec![0.4, 0.6]; 5];
        assert_eq!(convergence_tail(&constant, 3).unwrap(), vec![0.0, 0.0]);

        let two = vec![vec![0.2], vec![0.5]];
        let tail = convergence_tail(&two, 2).unwrap();
        assert!((tail[0] - 0.3).abs() < 1e-15);

        assert!(convergence_tail(&two, 3).is_err());
        assert!(convergence_tail(&two, 0).is_err());
    }
}
