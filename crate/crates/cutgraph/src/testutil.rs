//! Shared graph builders for unit tests.

use crate::dag::{build_dag, Dag, NodeKind};
use crate::inference::discrete::DiscreteModel;

/// The measurement-error regression example used throughout the crate's
/// tests: a main study of `m` units observing outcome `Y_i`, confounders
/// `C_i` and a surrogate exposure `Z_i`, supplemented by an external
/// validation study (units `m+1..=n`) that also records the true exposure
/// `W_i` but no outcome.
///
/// Global parameters: `beta` (outcome model), `pi` (exposure model),
/// `lambda` (surrogate model). Exposures `W_i` are latent for main-study
/// units and observed for validation units.
pub fn figure1_dag(m: usize, n: usize) -> Dag {
    assert!(m >= 1 && n > m, "need 1 <= m < n");
    let mut nodes = vec![
        ("beta".to_string(), NodeKind::Parameter),
        ("pi".to_string(), NodeKind::Parameter),
        ("lambda".to_string(), NodeKind::Parameter),
    ];
    let mut edges = Vec::new();
    for i in 1..=n {
        let (w, c, z) = (format!("W_{i}"), format!("C_{i}"), format!("Z_{i}"));
        let w_kind = if i <= m {
            NodeKind::Parameter
        } else {
            NodeKind::Observable
        };
        nodes.push((w.clone(), w_kind));
        nodes.push((c.clone(), NodeKind::Observable));
        nodes.push((z.clone(), NodeKind::Observable));
        edges.push(("pi".to_string(), w.clone()));
        edges.push((c.clone(), w.clone()));
        edges.push(("lambda".to_string(), z.clone()));
        edges.push((w.clone(), z.clone()));
        if i <= m {
            let y = format!("Y_{i}");
            nodes.push((y.clone(), NodeKind::Observable));
            edges.push(("beta".to_string(), y.clone()));
            edges.push((w, y.clone()));
            edges.push((c, y));
        }
    }
    build_dag(nodes, edges).expect("example graph is valid")
}

/// The minimal two-module surrogate graph: `phi` feeds both a direct
/// measurement `Z` and an outcome `Y` that also depends on `theta`.
pub fn surrogate_dag() -> Dag {
    build_dag(
        [
            ("phi", NodeKind::Parameter),
            ("theta", NodeKind::Parameter),
            ("Z", NodeKind::Observable),
            ("Y", NodeKind::Observable),
        ],
        [("phi", "Z"), ("phi", "Y"), ("theta", "Y")],
    )
    .expect("surrogate graph is valid")
}

/// Binary tables for [`surrogate_dag`], chosen so the two posteriors a
/// cut is meant to distinguish are far apart: with data `Z = 0, Y = 1`
/// the module-A posterior has `p(phi = 1 | Z = 0) = 0.1` while the full
/// posterior has `p(phi = 1 | Y = 1, Z = 0) = 0.5`.
pub fn surrogate_model() -> DiscreteModel {
    DiscreteModel::new(
        surrogate_dag(),
        [
            ("phi", 2, vec![0.5, 0.5]),
            ("theta", 2, vec![0.5, 0.5]),
            ("Z", 2, vec![0.9, 0.1, 0.1, 0.9]),
            // Parent order (phi, theta), phi varying slowest.
            (
                "Y",
                2,
                vec![0.95, 0.05, 0.85, 0.15, 0.15, 0.85, 0.05, 0.95],
            ),
        ],
    )
    .expect("surrogate tables are valid")
}
