use psi_core::autodiff::{
    finite_diff_check, relative_error, AdamConfig, Matrix, ParameterStore, Tape,
};
use psi_core::nn::uniform_init;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn store_with(shapes: &[(&str, usize, usize)], seed: u64) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for &(name, r, c) in shapes {
        store.add(name, uniform_init(r, c, 1, &mut rng)).unwrap();
    }
    store
}

#[test]
fn elementwise_and_reduction_ops() {
    let mut store = store_with(&[("a", 3, 4), ("b", 3, 4), ("r", 1, 4)], 1);
    let err = finite_diff_check(
        &mut store,
        |t, s| {
            let a = t.param(s, s.id("a").unwrap());
            let b = t.param(s, s.id("b").unwrap());
            let r = t.param(s, s.id("r").unwrap());
            let x = t.mul(a, b)?;
            let x = t.add_row(x, r)?;
            let y = t.sigmoid(x);
            let z = t.softplus(a);
            let w = t.sub(y, z)?;
            let e = t.exp(b);
            let e = t.scale(e, 0.5);
            let lg = t.log(e);
            let w = t.add(w, lg)?;
            let m = t.mean_rows(w)?;
            let s1 = t.sum_rows(w);
            let s1 = t.mean_all(s1)?;
            let m = t.sum_all(m);
            t.add(m, s1)
        },
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn matrix_ops() {
    let mut store = store_with(&[("a", 3, 4), ("b", 4, 2), ("c", 2, 2)], 2);
    let err = finite_diff_check(
        &mut store,
        |t, s| {
            let a = t.param(s, s.id("a").unwrap());
            let b = t.param(s, s.id("b").unwrap());
            let c = t.param(s, s.id("c").unwrap());
            let ab = t.matmul(a, b)?;
            let ab = t.relu(ab);
            let both = t.concat_cols(&[ab, ab])?;
            let stacked = t.concat_rows(&[ab, c])?;
            let g = t.gather_rows(stacked, &[4, 0, 0, 2])?;
            let gt = t.transpose(g);
            let prod = t.matmul(gt, g)?;
            let ls = t.log_softmax_rows(both);
            let sm = t.softmax_rows(prod);
            let n = t.normalize_rows(stacked);
            let seg = t.segment_mean(n, vec![vec![(0, 1.0), (3, 2.0)], vec![], vec![(4, 0.5)]])?;
            let parts = [t.sum_all(ls), t.sum_all(sm), t.sum_all(seg)];
            let x = t.add(parts[0], parts[1])?;
            let x = t.add(x, parts[2])?;
            let sq = t.mul(seg, seg)?;
            let sq = t.sum_all(sq);
            t.add(x, sq)
        },
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn detach_and_frozen_block_gradients() {
    let mut store = ParameterStore::new();
    let a = store.add("a", Matrix::row_vector(&[1.0, 2.0])).unwrap();
    let f = store
        .add_frozen("f", Matrix::row_vector(&[3.0, 4.0]))
        .unwrap();
    let mut t = Tape::new(false);
    let av = t.param(&store, a);
    let fv = t.param(&store, f);
    let d = t.detach(av);
    let x = t.mul(d, fv).unwrap();
    let y = t.mul(av, av).unwrap();
    let x = t.add(x, y).unwrap();
    let loss = t.sum_all(x);
    t.backward_into(loss, &mut store).unwrap();
    assert_eq!(store.grad(a).unwrap().as_slice(), &[2.0, 4.0]);
    assert!(store.grad(f).is_none());
}

#[test]
fn backward_requires_scalar() {
    let mut t = Tape::new(false);
    let v = t.var(Matrix::zeros(2, 2));
    assert!(t.backward(v).is_err());
}

#[test]
fn dropout_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut eval = Tape::new(false);
    let v = eval.var(Matrix::filled(10, 10, 1.0));
    assert_eq!(eval.dropout(v, 0.5, &mut rng).unwrap(), v);
    let mut train = Tape::new(true);
    let v = train.var(Matrix::filled(100, 100, 1.0));
    let d = train.dropout(v, 0.2, &mut rng).unwrap();
    let vals = train.value(d).as_slice();
    assert!(vals.iter().all(|&x| x == 0.0 || (x - 1.25).abs() < 1e-12));
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!((mean - 1.0).abs() < 0.05);
    assert!(train.dropout(v, 1.0, &mut rng).is_err());
}

#[test]
fn adam_first_step_matches_hand_computation() {
    let mut store = ParameterStore::new();
    let w = store.add("w", Matrix::row_vector(&[1.0, -2.0])).unwrap();
    store.accumulate_grad(w, &Matrix::row_vector(&[0.5, -3.0]));
    let cfg = AdamConfig {
        learning_rate: 0.1,
        ..AdamConfig::default()
    };
    psi_core::autodiff::adam_step(&mut store, &cfg).unwrap();
    // First bias-corrected step moves each weight by lr * g / (|g| + eps').
    let expected = [
        1.0 - 0.1 * 0.5 / (0.5 + 1e-8),
        -2.0 + 0.1 * 3.0 / (3.0 + 1e-8),
    ];
    for (got, want) in store.value(w).as_slice().iter().zip(expected) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(store.grad(w).is_none());
    assert_eq!(store.step_count(w), 1);
}

#[test]
fn adam_minimises_quadratic() {
    let mut store = ParameterStore::new();
    let w = store
        .add("w", Matrix::row_vector(&[3.0, -1.5, 0.7]))
        .unwrap();
    let cfg = AdamConfig {
        learning_rate: 0.05,
        ..AdamConfig::default()
    };
    for _ in 0..2000 {
        let mut t = Tape::new(true);
        let v = t.param(&store, w);
        let sq = t.mul(v, v).unwrap();
        let loss = t.sum_all(sq);
        t.backward_into(loss, &mut store).unwrap();
        psi_core::autodiff::adam_step(&mut store, &cfg).unwrap();
    }
    assert!(store.value(w).max_abs() < 1e-2);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut store = store_with(&[("enc.w", 4, 3), ("head.b", 1, 5)], 7);
    let json = store.to_json().unwrap();
    let mut other = store_with(&[("enc.w", 4, 3), ("head.b", 1, 5)], 8);
    other.load_json(&json).unwrap();
    for id in store.ids() {
        assert_eq!(store.value(id), other.value(id));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    store.save(&path).unwrap();
    let mut third = store_with(&[("enc.w", 4, 3), ("head.b", 1, 5)], 9);
    third.load(&path).unwrap();
    let id = third.id("enc.w").unwrap();
    assert_eq!(third.value(id), store.value(id));

    let mut wrong = store_with(&[("enc.w", 3, 3)], 1);
    assert!(wrong.load_json(&json).is_err());
    assert!(store.add("enc.w", Matrix::zeros(1, 1)).is_err());
}

#[test]
fn relative_error_definition() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1.0, 1.1) - 0.1 / 2.1).abs() < 1e-15);
}
