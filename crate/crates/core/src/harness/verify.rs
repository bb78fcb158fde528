//! Self-checks run by `psi verify`: gradient checks, oracle equivalences
//! and the conditional-GD bound.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, ParameterStore};
use crate::error::Result;
use crate::graph::{bfs_khop_oracle, khop_neighbors, GlobalGraph, SubgraphRecord};
use crate::infomax::{
    gd_loss_value, infonce_loss_value, khop_loss_value, random_cgd_instance, verify_cgd_bound,
};
use crate::models::{BatchContext, BatchItem, ModelConfig, PsiModel};
use crate::nn::EmbeddingTable;

pub const MODEL_KINDS: [&str; 8] = [
    "baseline",
    "ps-dgi",
    "ps-infograph",
    "ps-mvgrl",
    "ps-graphcl",
    "khop",
    "khop+ps-dgi",
    "khop+ps-infograph",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn gradient_check() -> Result<(bool, String)> {
    let edges = [
        (0, 1),
        (1, 2),
        (2, 0),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 3),
        (1, 4),
    ];
    let graph = GlobalGraph::new(6, edges, true)?;
    let records = vec![
        SubgraphRecord::induced(&graph, vec![0, 1, 2], 0),
        SubgraphRecord::induced(&graph, vec![3, 4, 5], 1),
    ];
    let items = vec![
        BatchItem {
            record_index: 0,
            observed: vec![0, 2],
        },
        BatchItem {
            record_index: 1,
            observed: vec![4, 3],
        },
    ];
    let ctx = BatchContext {
        graph: &graph,
        records: &records,
    };
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for kind in MODEL_KINDS {
        let mut cfg = ModelConfig::for_kind(kind.parse()?);
        cfg.hidden_dim = 3;
        cfg.dropout = 0.0;
        cfg.pool_ratio = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        let table = EmbeddingTable::random(&mut store, 6, 2, &mut rng)?;
        let model = PsiModel::new(&mut store, cfg, table, 2, None, &mut rng)?;
        let err = finite_diff_check(
            &mut store,
            |tape, s| {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let f = model.forward(tape, s, &ctx, &items, &mut rng)?;
                Ok(f.total.expect("training tape"))
            },
            1e-5,
        )?;
        worst = worst.max(err);
        detail.push(format!("{kind}={err:.1e}"));
    }
    Ok((worst < 1e-4, detail.join(" ")))
}

fn analytic_losses() -> Result<(bool, String)> {
    let ln2 = std::f64::consts::LN_2;
    let gd = gd_loss_value(&[0.0; 4], &[0.0; 4])?;
    let nce = infonce_loss_value(&[0.3], &[vec![0.3; 5]])?;
    let khop = khop_loss_value(&[0.0; 3], &[0.0; 3])?;
    let errs = [
        (gd - 2.0 * ln2).abs(),
        (nce - 6f64.ln()).abs(),
        (khop - ln2).abs(),
    ];
    let ok = errs.iter().all(|&e| e < 1e-9);
    Ok((ok, format!("gd {gd:.12} infonce {nce:.12} khop {khop:.12}")))
}

fn khop_oracle() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let p = rng.random_range(0.0..(8.0 / n as f64).min(1.0));
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let graph = GlobalGraph::new(n, edges, rng.random_bool(0.5))?;
        let m = rng.random_range(1..=n.min(5));
        let observed: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
        let k = rng.random_range(1..=3);
        let got = khop_neighbors(&graph, &observed, k, None, 0.0, &mut rng)?;
        let want: Vec<usize> = bfs_khop_oracle(&graph, &observed, k).into_iter().collect();
        if got.neighbors != want {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} mismatches over 100 graphs"),
    ))
}

fn cgd_bound() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let nx = rng.random_range(1..=8);
        let ny = rng.random_range(2..=8);
        let (f, p) = random_cgd_instance(nx, ny, 3.0, &mut rng);
        let r = verify_cgd_bound(&f, &p)?;
        worst_gap = worst_gap.max(r.i_cgd - r.i_gd);
        if !r.holds {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations; max I_CGD - I_GD = {worst_gap:.3e}"),
    ))
}

/// Runs every check; never panics on a failing check.
pub fn run_verify() -> Vec<CheckResult> {
    vec![
        timed("gradient-check", gradient_check),
        timed("analytic-losses", analytic_losses),
        timed("khop-oracle", khop_oracle),
        timed("cgd-bound", cgd_bound),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_verify() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
