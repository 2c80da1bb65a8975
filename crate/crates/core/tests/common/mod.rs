//! Test-only oracles, independent of the library's computation paths.
#![allow(dead_code)]

use consensus_core::{AgentStates, DynamicGraph};

/// Dissent as the literal double sum over ordered pairs `(i, j)`.
pub fn dissent_ordered_pairs(states: &AgentStates, g: &DynamicGraph) -> f64 {
    let x = states.values();
    let mut z = 0.0;
    for i in 0..g.n() {
        for j in 0..g.n() {
            if i != j && g.has_edge(i, j) {
                z += (x[i] - x[j]).powi(2);
            }
        }
    }
    z
}

/// Isoperimetric number by listing subsets explicitly as vertex vectors.
pub fn cheeger_by_subsets(g: &DynamicGraph) -> f64 {
    let n = g.n();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        if subset.len() > n / 2 {
            continue;
        }
        let boundary = subset
            .iter()
            .flat_map(|&u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| mask >> v & 1 == 0 && g.has_edge(u, v))
            .count();
        best = best.min(boundary as f64 / subset.len() as f64);
    }
    best
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Laplacian built directly from `has_edge`, as nested vectors.
pub fn laplacian_rows(g: &DynamicGraph) -> Vec<Vec<f64>> {
    let n = g.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        (0..n).filter(|&k| k != i && g.has_edge(i, k)).count() as f64
                    } else if g.has_edge(i, j) {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Checks the simple-graph invariants from the public query surface.
pub fn assert_simple(g: &DynamicGraph) {
    let n = g.n();
    let mut degree_sum = 0;
    for u in 0..n {
        assert!(!g.has_edge(u, u), "self-loop at {u}");
        let nbrs: Vec<usize> = g.neighbors(u).collect();
        assert!(nbrs.windows(2).all(|w| w[0] < w[1]), "neighbors of {u} not strictly sorted");
        assert!(nbrs.iter().all(|&v| v < n && v != u));
        for &v in &nbrs {
            assert!(g.has_edge(v, u), "asymmetric edge {u}-{v}");
        }
        assert_eq!(nbrs.len(), g.degree(u));
        degree_sum += nbrs.len();
    }
    assert_eq!(degree_sum, 2 * g.edge_count());
    assert_eq!(g.edges().count(), g.edge_count());
}

/// Two-sample chi-square homogeneity test on count histograms with equal
/// totals. Sparse tail bins are pooled until each combined bin has at least
/// `min_combined` observations. Returns `(statistic, degrees_of_freedom)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_combined: u64) -> (f64, usize) {
    let len = a.len().max(b.len());
    let get = |h: &[u64], k: usize| h.get(k).copied().unwrap_or(0);
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut acc = (0u64, 0u64);
    for k in 0..len {
        acc.0 += get(a, k);
        acc.1 += get(b, k);
        if acc.0 + acc.1 >= min_combined {
            bins.push(acc);
            acc = (0, 0);
        }
    }
    if acc.0 + acc.1 > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    let stat = bins
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            (x - y).powi(2) / (x + y)
        })
        .sum();
    (stat, bins.len().saturating_sub(1))
}
