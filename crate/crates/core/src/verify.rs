//! Built-in property suite behind `consensus-sim verify`.

use serde::Serialize;

use crate::diagnostics::{self, CheckResult};
use crate::dynamics::{self, Mode, RunOptions, SimParams};
use crate::graph::{self, DynamicGraph};
use crate::rng::RngStream;

pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-8;

/// One line of the verify table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Smallest slack seen among applicable checks.
    pub worst_margin: Option<f64>,
    pub detail: String,
}

impl VerifyRow {
    fn from_checks(name: &str, cases: usize, checks: &[CheckResult], detail: String) -> Self {
        let applicable: Vec<&CheckResult> = checks.iter().filter(|c| c.applicable).collect();
        let failures = applicable.iter().filter(|c| !c.holds).count();
        let worst_margin = applicable.iter().map(|c| c.margin).reduce(f64::min);
        let detail = match applicable.iter().find(|c| !c.holds) {
            Some(first) => format!("{detail}; first violation: {} ({})", first.name, first.context),
            None => detail,
        };
        Self {
            name: name.to_owned(),
            passed: failures == 0,
            cases,
            failures,
            worst_margin,
            detail,
        }
    }
}

/// Every connected labelled graph on `n` vertices (`n <= 6`).
pub fn connected_graphs(n: usize) -> Vec<DynamicGraph> {
    assert!((1..=6).contains(&n), "enumeration limited to n <= 6");
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            let g = DynamicGraph::from_edges(n, &edges).expect("valid edges");
            g.is_connected().then_some(g)
        })
        .collect()
}

/// Connected ER sample with a density drawn uniformly between the
/// connectivity threshold and a dense regime.
pub fn random_connected(n: usize, rng: &mut RngStream) -> DynamicGraph {
    let threshold = ((n as f64).ln() / n as f64).min(1.0);
    let p = threshold + rng.uniform() * (1.0 - threshold) * 0.6;
    graph::er_connected(n, p.min(1.0), rng, graph::DEFAULT_ER_ATTEMPTS)
        .expect("density above the connectivity threshold")
}

fn stream(seed: u64, label: &str) -> RngStream {
    RngStream::new(seed).split("verify").and_then(|s| s.split(label)).expect("nonempty labels")
}

pub fn check_cheeger_sandwich(seed: u64, random_samples: usize) -> VerifyRow {
    let mut checks = Vec::new();
    let mut cases = 0;
    for n in 2..=5 {
        for g in connected_graphs(n) {
            checks.extend(sandwich_only(&g));
            cases += 1;
        }
    }
    let mut rng = stream(seed, "sandwich");
    for k in 0..random_samples {
        let g = random_connected(6 + k % 3, &mut rng);
        checks.extend(sandwich_only(&g));
        cases += 1;
    }
    VerifyRow::from_checks(
        "cheeger_sandwich",
        cases,
        &checks,
        format!("all connected graphs n=2..5 plus {random_samples} random n=6..8"),
    )
}

fn sandwich_only(g: &DynamicGraph) -> Vec<CheckResult> {
    diagnostics::check_spectral_bounds(g)
        .into_iter()
        .filter(|c| c.name != diagnostics::CHECK_CONNECTIVITY_FLOOR)
        .collect()
}

pub fn check_connectivity_floor(seed: u64, per_size: usize) -> VerifyRow {
    let mut rng = stream(seed, "floor");
    let mut checks = Vec::new();
    for n in [20, 50, 100] {
        for _ in 0..per_size {
            let g = random_connected(n, &mut rng);
            checks.extend(
                diagnostics::check_spectral_bounds(&g)
                    .into_iter()
                    .filter(|c| c.name == diagnostics::CHECK_CONNECTIVITY_FLOOR),
            );
        }
    }
    VerifyRow::from_checks(
        "lambda2_floor",
        checks.len(),
        &checks,
        format!("{per_size} random connected graphs each for n in {{20, 50, 100}}"),
    )
}

/// Contraction-only runs (no flips) checked at every step.
pub fn check_dissent_drop(seed: u64, runs: usize, steps: u64) -> VerifyRow {
    let mut checks = Vec::new();
    let mut total_steps = 0;
    let mut first_error = None;
    for k in 0..runs {
        let n = [5, 20, 50][k % 3];
        let q_shrink = [0.0, 1e-3, 0.1][(k / 3) % 3];
        let params = SimParams::new(n, 0.5, q_shrink, 0.0, 1e-300, steps).expect("valid params");
        let options = RunOptions {
            sample_stride: steps.max(1),
            mode: Mode::Verify,
        };
        match dynamics::run(&params, seed.wrapping_add(k as u64), options) {
            Ok(record) => {
                total_steps += record.samples.last().map_or(0, |(t, _)| *t);
                checks.extend(record.diagnostics.drop_violations);
            }
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    let mut row = VerifyRow::from_checks(
        "dissent_drop",
        total_steps as usize,
        &checks,
        format!("{runs} contraction-only runs of {steps} steps, every step checked"),
    );
    if let Some(e) = first_error {
        row.passed = false;
        row.detail = format!("{}; run failed: {e}", row.detail);
    }
    row
}

/// Zero-eigenvalue multiplicity equals the component count.
pub fn check_kernel_dimension(seed: u64, samples: usize) -> VerifyRow {
    let mut rng = stream(seed, "kernel");
    let mut failures = 0;
    let mut detail = format!("{samples} random graphs n=2..30, sparse to dense");
    for _ in 0..samples {
        let n = 2 + (rng.uniform() * 29.0) as usize;
        let p = rng.uniform() * 3.0 / n as f64;
        let g = graph::er_sample(n, p.min(1.0), &mut rng).expect("valid probability");
        let zeros = g
            .laplacian_spectrum()
            .iter()
            .filter(|l| l.abs() <= ZERO_EIGENVALUE_THRESHOLD)
            .count();
        let count = g.components().count;
        if zeros != count {
            if failures == 0 {
                detail = format!("{detail}; n={n}: {zeros} zero eigenvalues vs {count} components");
            }
            failures += 1;
        }
    }
    VerifyRow {
        name: "kernel_dimension".into(),
        passed: failures == 0,
        cases: samples,
        failures,
        worst_margin: None,
        detail,
    }
}

/// Two executions of the same run produce identical output bytes.
pub fn check_determinism(seed: u64) -> VerifyRow {
    let params = SimParams::new(40, 0.15, 0.01, 1e-3, 1e-3, 3000).expect("valid params");
    let options = RunOptions {
        sample_stride: 7,
        mode: Mode::Verify,
    };
    let render = || {
        dynamics::run(&params, seed, options).map(|r| {
            (
                serde_json::to_string(&r.to_json()).expect("serializable"),
                r.trajectory_csv(),
            )
        })
    };
    let (passed, detail) = match (render(), render()) {
        (Ok(a), Ok(b)) if a == b => (true, "replayed run is byte-identical".to_owned()),
        (Ok(_), Ok(_)) => (false, "replayed run differs".to_owned()),
        (Err(e), _) | (_, Err(e)) => (false, format!("run failed: {e}")),
    };
    VerifyRow {
        name: "determinism_replay".into(),
        passed,
        cases: 1,
        failures: usize::from(!passed),
        worst_margin: None,
        detail,
    }
}

/// The full suite at its default sizes.
pub fn run_suite(seed: u64) -> Vec<VerifyRow> {
    vec![
        check_cheeger_sandwich(seed, 200),
        check_dissent_drop(seed, 18, 1000),
        check_connectivity_floor(seed, 20),
        check_kernel_dimension(seed, 200),
        check_determinism(seed),
    ]
}

/// Plain-text table, one line per check.
pub fn format_table(rows: &[VerifyRow]) -> String {
    let mut out = format!("{:<20} {:<6} {:>8} {:>8}  {}\n", "check", "result", "cases", "failed", "detail");
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:<6} {:>8} {:>8}  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.cases,
            r.failures,
            r.detail
        ));
    }
    out
}
