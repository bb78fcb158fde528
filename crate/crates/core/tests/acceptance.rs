//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS / FAIL / SKIP line per criterion; exits non-zero on any failure.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use psi_core::autodiff::{finite_diff_check, Matrix, ParameterStore, Segment, Tape, Var};
use psi_core::data::{
    expected_stats, load_dataset, sample_observed, DatasetBundle, LoadOptions, ObservationProtocol,
    Stage, SyntheticSpec,
};
use psi_core::graph::{khop_neighbors, GlobalGraph, SubgraphRecord};
use psi_core::harness::{
    read_rows_csv, sweep_lambda, sweep_observed, train_on, welch_t_test, DataSource, MetricsRecord,
    RunConfig, SweepTable, ROW_COLUMNS,
};
use psi_core::infomax::{gd_loss, infonce_loss, khop_loss, random_cgd_instance, verify_cgd_bound};
use psi_core::models::{
    attention_pool, top_k_indices, BatchContext, BatchItem, ModelConfig, PsiModel,
};
use psi_core::nn::{uniform_init, Discriminator, EmbeddingTable, Mlp2, PreMixerKind, Readout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DUMP_ENV: &str = "PSI_ACCEPTANCE_DUMP_FROZEN";

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<Status, String>;

fn pass_if(ok: bool, detail: String) -> Check {
    Ok(if ok {
        Status::Pass(detail)
    } else {
        Status::Fail(detail)
    })
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

/// Gradient check of `f` over fresh parameters `p0`, `p1`, ... of the given
/// shapes; the output is contracted with a fixed random probe.
fn op_error(
    shapes: &[(usize, usize)],
    seed: u64,
    f: impl Fn(&mut Tape, &[Var]) -> psi_core::Result<Var>,
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        store
            .add(format!("p{i}"), uniform_init(r, c, 1, &mut rng))
            .map_err(err)?;
    }
    let probe_seed = seed + 1000;
    finite_diff_check(
        &mut store,
        |t, s| {
            let vars: Vec<Var> = s.ids().map(|id| t.param(s, id)).collect();
            let out = f(t, &vars)?;
            let (r, c) = t.shape(out);
            let mut prng = ChaCha8Rng::seed_from_u64(probe_seed);
            let probe = t.constant(uniform_init(r, c, 1, &mut prng));
            let prod = t.mul(out, probe)?;
            Ok(t.sum_all(prod))
        },
        1e-5,
    )
    .map_err(err)
}

fn toy() -> (GlobalGraph, Vec<SubgraphRecord>, Vec<BatchItem>) {
    let edges = [
        (0, 1),
        (1, 2),
        (2, 0),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 4),
        (6, 7),
        (7, 8),
        (8, 9),
        (9, 7),
        (1, 5),
        (3, 8),
        (9, 10),
        (10, 11),
    ];
    let graph = GlobalGraph::new(12, edges, true).unwrap();
    let records = vec![
        SubgraphRecord::induced(&graph, vec![0, 1, 2, 3], 0),
        SubgraphRecord::induced(&graph, vec![4, 5, 6], 1),
        SubgraphRecord::induced(&graph, vec![7, 8, 9, 10], 0),
    ];
    let items = vec![
        BatchItem {
            record_index: 0,
            observed: vec![0, 2],
        },
        BatchItem {
            record_index: 1,
            observed: vec![5, 4],
        },
        BatchItem {
            record_index: 2,
            observed: vec![9, 7, 10],
        },
    ];
    (graph, records, items)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let mut record = |name: &str, e: f64| {
        worst = worst.max(e);
        if !(e < 1e-4) {
            failures.push(format!("{name}={e:.2e}"));
        }
    };
    type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> psi_core::Result<Var>>;
    let ops: Vec<(&str, Vec<(usize, usize)>, OpFn)> = vec![
        (
            "matmul",
            vec![(3, 4), (4, 2)],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        ),
        (
            "add",
            vec![(3, 4), (3, 4)],
            Box::new(|t, v| t.add(v[0], v[1])),
        ),
        (
            "add_row",
            vec![(3, 4), (1, 4)],
            Box::new(|t, v| t.add_row(v[0], v[1])),
        ),
        (
            "sub",
            vec![(3, 4), (3, 4)],
            Box::new(|t, v| t.sub(v[0], v[1])),
        ),
        (
            "mul",
            vec![(3, 4), (3, 4)],
            Box::new(|t, v| t.mul(v[0], v[1])),
        ),
        (
            "scale",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.scale(v[0], -1.7))),
        ),
        ("relu", vec![(3, 4)], Box::new(|t, v| Ok(t.relu(v[0])))),
        (
            "sigmoid",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.sigmoid(v[0]))),
        ),
        (
            "softplus",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.softplus(v[0]))),
        ),
        ("exp", vec![(3, 4)], Box::new(|t, v| Ok(t.exp(v[0])))),
        (
            "log",
            vec![(3, 4)],
            Box::new(|t, v| {
                let e = t.exp(v[0]);
                Ok(t.log(e))
            }),
        ),
        (
            "softmax_rows",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.softmax_rows(v[0]))),
        ),
        (
            "log_softmax_rows",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.log_softmax_rows(v[0]))),
        ),
        (
            "mean_rows",
            vec![(3, 4)],
            Box::new(|t, v| t.mean_rows(v[0])),
        ),
        (
            "sum_rows",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.sum_rows(v[0]))),
        ),
        (
            "sum_all",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.sum_all(v[0]))),
        ),
        ("mean_all", vec![(3, 4)], Box::new(|t, v| t.mean_all(v[0]))),
        (
            "concat_cols",
            vec![(3, 2), (3, 3)],
            Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]])),
        ),
        (
            "concat_rows",
            vec![(2, 3), (1, 3)],
            Box::new(|t, v| t.concat_rows(&[v[0], v[1], v[0]])),
        ),
        (
            "gather_rows",
            vec![(4, 3)],
            Box::new(|t, v| t.gather_rows(v[0], &[3, 0, 0, 2])),
        ),
        (
            "transpose",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.transpose(v[0]))),
        ),
        (
            "normalize_rows",
            vec![(3, 4)],
            Box::new(|t, v| Ok(t.normalize_rows(v[0]))),
        ),
        (
            "segment_mean",
            vec![(5, 3)],
            Box::new(|t, v| {
                let segs: Vec<Segment> = vec![
                    vec![(0, 1.0), (3, 2.0)],
                    vec![],
                    vec![(4, 0.5), (1, 1.0), (2, 1.0)],
                ];
                t.segment_mean(v[0], segs)
            }),
        ),
        (
            "dropout",
            vec![(4, 5)],
            Box::new(|t, v| {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                t.dropout(v[0], 0.3, &mut rng)
            }),
        ),
        (
            "gd_loss",
            vec![(4, 1), (4, 1)],
            Box::new(|t, v| gd_loss(t, v[0], v[1])),
        ),
        (
            "infonce_loss",
            vec![(3, 1), (3, 4)],
            Box::new(|t, v| infonce_loss(t, v[0], v[1])),
        ),
        (
            "khop_loss",
            vec![(3, 1), (5, 1)],
            Box::new(|t, v| khop_loss(t, Some(v[0]), Some(v[1]))),
        ),
    ];
    for (i, (name, shapes, f)) in ops.iter().enumerate() {
        record(name, op_error(shapes, i as u64, f)?);
    }

    let (graph, records, items) = toy();
    let ctx = BatchContext {
        graph: &graph,
        records: &records,
    };
    let kinds = [
        "ps-dgi",
        "ps-infograph",
        "ps-mvgrl",
        "ps-graphcl",
        "khop",
        "khop+ps-dgi",
        "khop+ps-infograph",
    ];
    for kind in kinds {
        for bidirectional in [false, true] {
            let mut cfg = ModelConfig::for_kind(kind.parse().map_err(err)?);
            cfg.hidden_dim = 4;
            cfg.dropout = 0.2;
            cfg.pool_ratio = 0.5;
            cfg.bidirectional = bidirectional;
            cfg.use_positional_encoding = kind.starts_with("khop");
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut store = ParameterStore::new();
            let table = EmbeddingTable::random(&mut store, 12, 3, &mut rng).map_err(err)?;
            let model = PsiModel::new(&mut store, cfg, table, 2, None, &mut rng).map_err(err)?;
            let e = finite_diff_check(
                &mut store,
                |tape, s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(4);
                    let f = model.forward(tape, s, &ctx, &items, &mut rng)?;
                    Ok(f.total.expect("training tape"))
                },
                1e-5,
            )
            .map_err(err)?;
            record(&format!("{kind}/bi={bidirectional}"), e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 60.0;
    pass_if(
        ok,
        format!(
            "{} ops + 14 model configs, max rel err {worst:.2e}, {secs:.1}s{}",
            ops.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; over tolerance: {}", failures.join(", "))
            }
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Check {
    let mut t = Tape::new(false);
    let zeros = t.constant(Matrix::zeros(5, 1));
    let gd = gd_loss(&mut t, zeros, zeros).map_err(err)?;
    let gd = t.scalar(gd).map_err(err)?;
    let mut worst: f64 = (gd - 2.0 * LN_2).abs();
    let mut detail = format!("gd(0) = {gd:.12}");
    for k in [1usize, 3, 7] {
        let pos = t.constant(Matrix::filled(4, 1, 0.37));
        let neg = t.constant(Matrix::filled(4, k, 0.37));
        let l = infonce_loss(&mut t, pos, neg).map_err(err)?;
        let l = t.scalar(l).map_err(err)?;
        worst = worst.max((l - ((k + 1) as f64).ln()).abs());
        detail += &format!(", infonce(K={k}) = {l:.12}");
    }
    let pos = t.constant(Matrix::zeros(6, 1));
    let neg = t.constant(Matrix::zeros(6, 1));
    let kl = khop_loss(&mut t, Some(pos), Some(neg)).map_err(err)?;
    let kl = t.scalar(kl).map_err(err)?;
    worst = worst.max((kl - LN_2).abs());
    detail += &format!(", khop balanced = {kl:.12}");
    pass_if(worst < 1e-9, format!("{detail}; max dev {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

/// Multi-source hop distances by repeated relaxation over the raw edge list.
fn hop_distances(n: usize, edges: &[(usize, usize)], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; n];
    for &s in sources {
        dist[s] = 0;
    }
    loop {
        let mut changed = false;
        for &(u, v) in edges {
            for (a, b) in [(u, v), (v, u)] {
                if dist[a] != usize::MAX && dist[a] + 1 < dist[b] {
                    dist[b] = dist[a] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mismatches = 0;
    for g in 0..100 {
        let n = rng.random_range(1..=200);
        let density = [0.002, 0.01, 0.03, 0.1, 0.3][g % 5];
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(density / 2.0) {
                    edges.push((u, v));
                }
            }
        }
        let graph = GlobalGraph::new(n, edges.clone(), g % 2 == 0).map_err(err)?;
        let m = rng.random_range(1..=n.min(6));
        let observed = rand::seq::index::sample(&mut rng, n, m).into_vec();
        let k = rng.random_range(1..=4);
        let got = khop_neighbors(&graph, &observed, k, None, 0.0, &mut rng).map_err(err)?;
        let dist = hop_distances(n, &edges, &observed);
        let want: Vec<usize> = (0..n).filter(|&v| dist[v] >= 1 && dist[v] <= k).collect();
        if got.neighbors != want {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass_if(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches}/100 mismatches vs relaxation oracle, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 4

/// Direct evaluation of both estimators with plain sigmoid/log arithmetic.
fn cgd_oracle(f: &Matrix, p: &Matrix) -> (f64, f64) {
    let (nx, ny) = f.shape();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let px: Vec<f64> = (0..nx)
        .map(|x| (0..ny).map(|y| p.get(x, y)).sum())
        .collect();
    let py: Vec<f64> = (0..ny)
        .map(|y| (0..nx).map(|x| p.get(x, y)).sum())
        .collect();
    let (mut pos, mut neg_p, mut neg_q) = (0.0, 0.0, 0.0);
    for x in 0..nx {
        let mean_exp: f64 = (0..ny).map(|y| py[y] * f.get(x, y).exp()).sum();
        let yc: Vec<usize> = (0..ny)
            .filter(|&y| f.get(x, y).exp() >= mean_exp * (1.0 - 1e-12))
            .collect();
        let z: f64 = yc.iter().map(|&y| py[y]).sum();
        for y in 0..ny {
            pos += p.get(x, y) * sig(f.get(x, y)).ln();
            neg_p += px[x] * py[y] * (1.0 - sig(f.get(x, y))).ln();
        }
        for &y in &yc {
            neg_q += px[x] * py[y] / z * (1.0 - sig(f.get(x, y))).ln();
        }
    }
    (pos + neg_p, pos + neg_q)
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut violations, mut disagreements) = (0, 0);
    let mut max_gap = f64::NEG_INFINITY;
    let trials = 2000;
    for _ in 0..trials {
        let nx = rng.random_range(1..=8);
        let ny = rng.random_range(1..=8);
        let scale = [0.1, 1.0, 3.0, 8.0][rng.random_range(0..4)];
        let (f, p) = random_cgd_instance(nx, ny, scale, &mut rng);
        let r = verify_cgd_bound(&f, &p).map_err(err)?;
        let (gd, cgd) = cgd_oracle(&f, &p);
        if (gd - r.i_gd).abs() > 1e-9 || (cgd - r.i_cgd).abs() > 1e-9 {
            disagreements += 1;
        }
        max_gap = max_gap.max(r.i_cgd - r.i_gd);
        if !(r.i_cgd <= r.i_gd + 1e-12) || !r.holds {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass_if(
        violations == 0 && disagreements == 0 && secs < 30.0,
        format!("{trials} instances, {violations} violations, {disagreements} oracle disagreements, max I_CGD - I_GD = {max_gap:.2e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mlp = Mlp2::new(&mut store, "pool", 2, &mut rng).map_err(err)?;
    for lin in [&mlp.first, &mlp.second] {
        *store.value_mut(lin.weight) = Matrix::identity(2);
        *store.value_mut(lin.bias.expect("mlp layers have biases")) = Matrix::zeros(1, 2);
    }
    let scores = [2.0, 1.0, -0.5];
    let idx = top_k_indices(&scores, &[7, 8, 9], &[0, 1, 2], 0.6);
    let mut t = Tape::new(false);
    let d = t.constant(Matrix::column_vector(&scores));
    let h = t.constant(
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]]).map_err(err)?,
    );
    let s = attention_pool(&mut t, &store, &mlp, d, h, &idx).map_err(err)?;
    let got = t.value(s).row(0).to_vec();
    let hand_ok =
        idx == vec![0, 1] && (got[0] - 0.73106).abs() < 1e-5 && (got[1] - 0.26894).abs() < 1e-5;

    let ties = [0.5; 6];
    let ids = [40, 3, 17, 5, 99, 1];
    let first = top_k_indices(&ties, &ids, &[0, 1, 2, 3, 4, 5], 0.5);
    let reversed: Vec<usize> = (0..6).rev().collect();
    let again = top_k_indices(&ties, &ids, &reversed, 0.5);
    let tie_ok = first == vec![5, 1, 3] && again == first;
    pass_if(
        hand_ok && tie_ok,
        format!("pooled {got:?} from top-k {idx:?}; tie order by node id {first:?}"),
    )
}

// ---------------------------------------------------------------- 6

fn frozen_bundle() -> DatasetBundle {
    psi_core::data::generate_synthetic(&SyntheticSpec::default()).expect("default spec is valid")
}

fn frozen_protocol() -> ObservationProtocol {
    ObservationProtocol {
        n_obs: 4,
        ..ObservationProtocol::default()
    }
}

fn frozen_sets(bundle: &DatasetBundle) -> Vec<(usize, Vec<usize>)> {
    let p = frozen_protocol();
    let mut out = bundle.frozen_observations(&p, Stage::Val).unwrap();
    out.extend(bundle.frozen_observations(&p, Stage::Test).unwrap());
    out
}

fn dump_frozen() {
    let sets = frozen_sets(&frozen_bundle());
    println!("{}", serde_json::to_string(&sets).unwrap());
}

fn criterion_6() -> Check {
    let bundle = frozen_bundle();
    let protocol = frozen_protocol();
    let reference = frozen_sets(&bundle);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut stable = true;
    for _epoch in 0..3 {
        for i in bundle.indices(Stage::Train) {
            sample_observed(&bundle.records[i], i, &protocol, Stage::Train, &mut rng)
                .map_err(err)?;
        }
        stable &= frozen_sets(&bundle) == reference;
    }
    let exe = std::env::current_exe().map_err(err)?;
    let child = Command::new(exe).env(DUMP_ENV, "1").output().map_err(err)?;
    let child_sets: Vec<(usize, Vec<usize>)> =
        serde_json::from_slice(&child.stdout).map_err(|e| format!("child output: {e}"))?;
    let cross_process = child_sets == reference;

    let record = SubgraphRecord {
        node_ids: (0..20).collect(),
        edges: vec![],
        label: 0,
        subgraph_feature: None,
        observation_order: Some((0..20).map(|i| (i * 7) % 20).collect()),
    };
    let order = record.observation_order.clone().unwrap();
    let ordered = ObservationProtocol {
        n_obs: 8,
        ordered: true,
        ..ObservationProtocol::default()
    };
    let mut prefix_ok = true;
    let mut sizes = BTreeSet::new();
    let mut in_range = true;
    for draw in 0..1000 {
        let stage = [Stage::Train, Stage::Val, Stage::Test][draw % 3];
        let obs = sample_observed(&record, draw, &ordered, stage, &mut rng).map_err(err)?;
        prefix_ok &= obs[..] == order[..obs.len()];
        let train = sample_observed(
            &record,
            draw,
            &ObservationProtocol {
                ordered: false,
                ..ordered
            },
            Stage::Train,
            &mut rng,
        )
        .map_err(err)?;
        in_range &= (6..=10).contains(&train.len());
        sizes.insert(train.len());
    }
    let all_sizes = sizes.len() == 5;
    pass_if(
        stable && cross_process && prefix_ok && in_range && all_sizes,
        format!(
            "{} frozen sets stable over 3 epochs: {stable}, across processes: {cross_process}; ordered prefix: {prefix_ok}; jitter sizes {sizes:?}",
            reference.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn synthetic_run(model: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.set("model", model).unwrap();
    cfg.protocol.n_obs = 4;
    if model.starts_with("khop") {
        cfg.model.pool_ratio = 0.3;
    }
    cfg
}

fn halves(m: &MetricsRecord) -> usize {
    m.seeds
        .iter()
        .filter(|s| {
            let (Some(first), Some(last)) = (s.traces.first(), s.traces.last()) else {
                return false;
            };
            let graph = last.loss_graph <= 0.5 * first.loss_graph;
            let infomax = match (first.infomax_component(), last.infomax_component()) {
                (Some(a), Some(b)) => b <= 0.5 * a,
                _ => false,
            };
            graph && infomax
        })
        .count()
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let bundle = frozen_bundle();
    let infograph = train_on(&synthetic_run("ps-infograph"), &bundle).map_err(err)?;
    let khop = train_on(&synthetic_run("khop+ps-infograph"), &bundle).map_err(err)?;
    let baseline = train_on(&synthetic_run("baseline"), &bundle).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let majority = bundle.majority_rate(Stage::Test);
    let halved = halves(&infograph);
    let test = welch_t_test(&khop.accuracies(), &baseline.accuracies()).map_err(err)?;
    let ok = infograph.accuracies().len() == 5
        && infograph.mean >= majority + 0.25
        && halved >= 4
        && khop.mean >= baseline.mean
        && secs < 300.0;
    pass_if(
        ok,
        format!(
            "ps-infograph {:.3}±{:.3} vs majority {majority:.3}; loss halved on {halved}/5 seeds; khop+ps-infograph {:.3}±{:.3} vs baseline {:.3}±{:.3} (Welch p = {:.3}); {secs:.0}s",
            infograph.mean, infograph.std, khop.mean, khop.std, baseline.mean, baseline.std, test.p_value
        ),
    )
}

// ---------------------------------------------------------------- 8

fn readout_value(r: &Readout, store: &ParameterStore, h: &Matrix) -> Vec<f64> {
    let mut t = Tape::new(false);
    let v = t.constant(h.clone());
    let s = r.forward(&mut t, store, v, None).unwrap();
    t.value(s).as_slice().to_vec()
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParameterStore::new();
    let dim = 6;
    let mut readouts = vec![(
        "mean-mlp",
        Readout::mean_mlp(&mut store, "m", dim, &mut rng).map_err(err)?,
    )];
    for (name, kind) in [
        ("attn-identity", PreMixerKind::Identity),
        ("attn-mlp", PreMixerKind::Mlp),
        ("attn-self", PreMixerKind::SelfAttention),
    ] {
        readouts.push((
            name,
            Readout::attention(&mut store, name, dim, kind, None, &mut rng).map_err(err)?,
        ));
    }
    let mut worst_perm = 0.0_f64;
    for trial in 0..20 {
        let n = 2 + trial % 9;
        let h = uniform_init(n, dim, 1, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| h.row(i).to_vec()).collect();
        let hp = Matrix::from_rows(&rows).map_err(err)?;
        for (_, r) in &readouts {
            let (a, b) = (readout_value(r, &store, &h), readout_value(r, &store, &hp));
            for (x, y) in a.iter().zip(&b) {
                worst_perm = worst_perm.max((x - y).abs());
            }
        }
    }

    let disc = Discriminator::bilinear(&mut store, "d", dim, &mut rng).map_err(err)?;
    let score = |h: &Matrix, s: &Matrix| -> Vec<f64> {
        let mut t = Tape::new(false);
        let (hv, sv) = (t.constant(h.clone()), t.constant(s.clone()));
        let out = disc.score(&mut t, &store, hv, sv).unwrap();
        t.value(out).as_slice().to_vec()
    };
    let combine = |a: f64, x: &Matrix, b: f64, y: &Matrix| x.zip_map(y, |p, q| a * p + b * q);
    let mut worst_lin = 0.0_f64;
    for _ in 0..20 {
        let (h1, h2) = (
            uniform_init(4, dim, 1, &mut rng),
            uniform_init(4, dim, 1, &mut rng),
        );
        let (s1, s2) = (
            uniform_init(1, dim, 1, &mut rng),
            uniform_init(1, dim, 1, &mut rng),
        );
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let lhs_h = score(&combine(a, &h1, b, &h2), &s1);
        let (p1, p2) = (score(&h1, &s1), score(&h2, &s1));
        let lhs_s = score(&h1, &combine(a, &s1, b, &s2));
        let q2 = score(&h1, &s2);
        for i in 0..4 {
            worst_lin = worst_lin.max((lhs_h[i] - (a * p1[i] + b * p2[i])).abs());
            worst_lin = worst_lin.max((lhs_s[i] - (a * p1[i] + b * q2[i])).abs());
        }
    }
    pass_if(
        worst_perm < 1e-12 && worst_lin < 1e-12,
        format!("max readout change under permutation {worst_perm:.1e}; max bilinearity defect {worst_lin:.1e}"),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let sources = [
        ("hpo-metab", "PSI_HPO_METAB_DIR"),
        ("em-user", "PSI_EM_USER_DIR"),
        ("fntn", "PSI_FNTN_DIR"),
    ];
    let mut checked = Vec::new();
    let mut failures = Vec::new();
    for (name, var) in sources {
        let Some(dir) = std::env::var_os(var).map(PathBuf::from) else {
            continue;
        };
        let bundle = load_dataset(&LoadOptions::subgnn_dir(name, &dir)).map_err(err)?;
        let stats = bundle.stats();
        let expected =
            expected_stats(name).ok_or_else(|| format!("no reference statistics for {name}"))?;
        match expected.check(&stats) {
            Ok(()) => checked.push(format!("{name} ok")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    if checked.is_empty() && failures.is_empty() {
        return Ok(Status::Skip(
            "no dataset directories set (PSI_HPO_METAB_DIR, PSI_EM_USER_DIR, PSI_FNTN_DIR)".into(),
        ));
    }
    pass_if(failures.is_empty(), [checked, failures].concat().join("; "))
}

// ---------------------------------------------------------------- 10

fn schema_ok(
    table: &SweepTable,
    dir: &std::path::Path,
    expected_rows: usize,
    cells: usize,
) -> Result<bool, String> {
    let path = dir.join("rows.csv");
    table.write_rows_csv(&path).map_err(err)?;
    table
        .write_summary_csv(&dir.join("summary.csv"))
        .map_err(err)?;
    let mut reader = csv::Reader::from_path(&path).map_err(err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(err)?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = read_rows_csv(&path).map_err(err)?;
    Ok(header == ROW_COLUMNS
        && rows == table.rows
        && rows.len() == expected_rows
        && table.summary.len() == cells
        && rows
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.accuracy) && r.split == "test"))
}

fn criterion_10() -> Check {
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    let mut cfg = RunConfig {
        data: DataSource::Synthetic(spec),
        epochs: 3,
        seeds: vec![0, 1],
        ..RunConfig::default()
    };
    cfg.set("model", "khop+ps-infograph").map_err(err)?;
    cfg.model.pool_ratio = 0.3;
    cfg.protocol.n_obs = 4;
    let bundle = cfg.load_data().map_err(err)?;
    let grid = [1.0, 2.0, 3.0];
    let lam_a = sweep_lambda(&cfg, &bundle, &grid, &grid).map_err(err)?;
    let lam_b = sweep_lambda(&cfg, &bundle, &grid, &grid).map_err(err)?;
    let obs_a = sweep_observed(&cfg, &bundle, &[4, 8]).map_err(err)?;
    let obs_b = sweep_observed(&cfg, &bundle, &[4, 8]).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let (lam_dir, obs_dir) = (dir.path().join("lambda"), dir.path().join("observed"));
    let lam_schema = schema_ok(&lam_a, &lam_dir, 18, 9)?;
    let obs_schema = schema_ok(&obs_a, &obs_dir, 8, 4)?;
    let mut pairs: Vec<(f64, f64)> = lam_a
        .summary
        .iter()
        .map(|s| (s.lambda_khop, s.lambda_second))
        .collect();
    pairs.dedup();
    let cells: Vec<(usize, usize)> = obs_a
        .summary
        .iter()
        .map(|s| (s.n_obs_train, s.n_obs_test))
        .collect();
    let complete = pairs.len() == 9 && cells == vec![(4, 4), (4, 8), (8, 4), (8, 8)];
    let secs = start.elapsed().as_secs_f64();
    pass_if(
        lam_a == lam_b && obs_a == obs_b && lam_schema && obs_schema && complete && secs < 180.0,
        format!(
            "lambda grid {} cells / {} rows, observed grid {} cells / {} rows, deterministic: {}, schema: {}, {secs:.1}s",
            lam_a.summary.len(),
            lam_a.rows.len(),
            obs_a.summary.len(),
            obs_a.rows.len(),
            lam_a == lam_b && obs_a == obs_b,
            lam_schema && obs_schema
        ),
    )
}

fn main() -> ExitCode {
    if std::env::var_os(DUMP_ENV).is_some() {
        dump_frozen();
        return ExitCode::SUCCESS;
    }
    // Ignore libtest flags such as --nocapture passed by `cargo test`.
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient oracle", criterion_1),
        ("analytic loss values", criterion_2),
        ("k-hop oracle equivalence", criterion_3),
        ("conditional GD bound", criterion_4),
        ("top-k pooling", criterion_5),
        ("protocol invariants", criterion_6),
        ("synthetic end-to-end", criterion_7),
        ("permutation invariance and bilinearity", criterion_8),
        ("dataset statistics", criterion_9),
        ("sweep harnesses", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let (tag, detail) = match check() {
            Ok(Status::Pass(d)) => ("PASS", d),
            Ok(Status::Skip(d)) => ("SKIP", d),
            Ok(Status::Fail(d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("[{tag}] criterion {id:>2} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
