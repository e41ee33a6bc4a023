use cbid_core::data::{mine_triplets_image, Dataset, Label, Mode, Triplet, TripletSet};
use cbid_core::hashfn::HashFunction;
use cbid_core::loss::Penalty;
use cbid_core::qn::QnOptions;
use cbid_core::trainer::{
    learn_hash, solve_primal, update_duals, weak_gradient, weak_objective, BitFeatures, DualState,
    LossKind, MarginLayout, PrimalSettings, TrainConfig, TripletProblem, WeightMatrix,
};
use cbid_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_d(points: &[f64], labels: &[Label]) -> Dataset {
    let k = *labels.iter().max().unwrap() as usize;
    Dataset::new(Matrix::new(points.len(), 1, points.to_vec()).unwrap(), labels.to_vec(), k).unwrap()
}

fn single_triple(ds: &Dataset, t: Triplet) -> TripletSet {
    TripletSet::new(vec![t], Mode::Image, ds.labels()).unwrap()
}

fn duals(values: Vec<f64>) -> DualState {
    DualState { mode: Mode::Image, values }
}

#[test]
fn weak_objective_single_triple() {
    // anchor and hit below the threshold, miss above: a = 2
    let ds = one_d(&[0.0, 0.1, 1.0], &[1, 1, 2]);
    let ts = single_triple(&ds, Triplet { anchor: 0, hit: 1, miss: 2, miss_class: 2 });
    let p = TripletProblem::image(&ds, &ts).unwrap();
    let h = HashFunction::new(vec![1.0], -0.5).unwrap();
    let u = duals(vec![0.2]);
    assert!((weak_objective(&p, &h, &u, 2).unwrap() + 0.4).abs() < 1e-15);
    assert!((weak_objective(&p, &h, &u, 1).unwrap() - 0.4).abs() < 1e-15);
}

#[test]
fn constant_hash_scores_zero() {
    let ds = one_d(&[0.0, 0.1, 0.2, 1.0, 1.1, 1.2], &[1, 1, 1, 2, 2, 2]);
    let ts = mine_triplets_image(&ds, 2, 2).unwrap();
    let p = TripletProblem::image(&ds, &ts).unwrap();
    let h = HashFunction::new(vec![1.0], 10.0).unwrap();
    let u = p.initial_duals();
    for r in 1..=2 {
        assert_eq!(weak_objective(&p, &h, &u, r).unwrap(), 0.0);
    }
}

#[test]
fn gradient_vanishes_on_identical_points_and_zero_duals() {
    let ds = Dataset::new(
        Matrix::from_rows(&[[0.3, -0.2], [0.3, -0.2], [0.3, -0.2]], 2).unwrap(),
        vec![1, 1, 2],
        2,
    )
    .unwrap();
    let ts = single_triple(&ds, Triplet { anchor: 0, hit: 1, miss: 2, miss_class: 2 });
    let p = TripletProblem::image(&ds, &ts).unwrap();
    let h = HashFunction::new(vec![0.7, 1.3], 0.1).unwrap();
    let (g, b) = weak_gradient(&p, &h, &duals(vec![0.4]), 1).unwrap();
    assert!(g.iter().all(|&v| v == 0.0) && b == 0.0);

    let ds2 = one_d(&[0.0, 0.5, 2.0], &[1, 1, 2]);
    let ts2 = single_triple(&ds2, Triplet { anchor: 0, hit: 1, miss: 2, miss_class: 2 });
    let p2 = TripletProblem::image(&ds2, &ts2).unwrap();
    let h2 = HashFunction::new(vec![1.0], -1.0).unwrap();
    for r in 1..=2 {
        let (g, b) = weak_gradient(&p2, &h2, &duals(vec![0.0]), r).unwrap();
        assert!(g.iter().all(|&v| v == 0.0) && b == 0.0);
    }
}

fn sign(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Straight-line sign-evaluated score of a 1-D threshold function.
fn threshold_score(ds: &Dataset, ts: &TripletSet, u: &[f64], beta: f64, bias: f64, r: Label) -> f64 {
    let h = |i: usize| sign(beta * ds.features().get(i, 0) + bias);
    let mut total = 0.0;
    for (t, &ut) in ts.triples().iter().zip(u) {
        let a = (h(t.anchor) - h(t.miss)).abs() - (h(t.anchor) - h(t.hit)).abs();
        let y = ds.labels()[t.anchor];
        let omega = ut * (f64::from(u8::from(r == y)) - f64::from(u8::from(r == t.miss_class)));
        total += omega * a;
    }
    total
}

#[test]
fn learn_hash_matches_threshold_sweep_on_1d() {
    let xs = [0.0, 0.15, 0.3, 0.45, 0.6, 1.5, 1.65, 1.8, 1.95, 2.1];
    let labels = [1, 1, 1, 1, 1, 2, 2, 2, 2, 2];
    let ds = one_d(&xs, &labels);
    let ts = mine_triplets_image(&ds, 2, 2).unwrap();
    let p = TripletProblem::image(&ds, &ts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u: Vec<f64> = (0..ts.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    let state = duals(u.clone());

    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts = vec![sorted[0] - 1.0, sorted[sorted.len() - 1] + 1.0];
    cuts.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let mut best = f64::NEG_INFINITY;
    for &c in &cuts {
        for beta in [1.0, -1.0] {
            for r in 1..=2 {
                best = best.max(threshold_score(&ds, &ts, &u, beta, -beta * c, r));
            }
        }
    }

    let cfg = TrainConfig { restarts: 50, ..Default::default() };
    let learner = learn_hash(&p, &state, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let h = &learner.function;
    let own = threshold_score(&ds, &ts, &u, h.beta()[0], h.bias(), learner.class);
    assert!((own - learner.score).abs() < 1e-12);
    assert!((learner.score - best).abs() < 1e-12, "{} vs {best}", learner.score);
    assert!(learner.score > 0.0);

    let again = learn_hash(&p, &state, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(again, learner);
}

#[test]
fn zero_duals_give_zero_score() {
    let ds = one_d(&[0.0, 0.1, 0.2, 1.0, 1.1, 1.2], &[1, 1, 1, 2, 2, 2]);
    let ts = mine_triplets_image(&ds, 2, 2).unwrap();
    let p = TripletProblem::image(&ds, &ts).unwrap();
    let cfg = TrainConfig { restarts: 5, ..Default::default() };
    let l = learn_hash(&p, &duals(vec![0.0; ts.len()]), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(l.score, 0.0);
}

fn settings(nu: f64) -> PrimalSettings {
    PrimalSettings {
        nu,
        penalty: Penalty::L1,
        loss: LossKind::Logistic,
        qn: QnOptions { tolerance: 1e-10, max_iterations: 5000, ..Default::default() },
    }
}

fn grid_objective(w: &[f64], a: &[[f64; 2]; 4], rows: &[(usize, usize); 4], nu: f64) -> f64 {
    let mut v = nu * w.iter().sum::<f64>();
    for (e, &(p, n)) in rows.iter().enumerate() {
        let mut rho = 0.0;
        for s in 0..2 {
            rho += a[e][s] * (w[s * 2 + p] - w[s * 2 + n]);
        }
        v += (1.0 + (-rho).exp()).ln();
    }
    v
}

/// Minimum over a grid of step `h` on `center +- span`, clipped to `[0, 3]`.
fn grid_min(center: &[f64; 4], span: f64, h: f64, f: &dyn Fn(&[f64]) -> f64) -> (f64, [f64; 4]) {
    let steps = (span / h).round() as i64;
    let mut best = (f64::INFINITY, [0.0; 4]);
    let axis = |c: f64| -> Vec<f64> {
        (-steps..=steps)
            .map(|i| c + i as f64 * h)
            .filter(|v| (-1e-9..=3.0 + 1e-9).contains(v))
            .collect()
    };
    let axes: Vec<Vec<f64>> = center.iter().map(|&c| axis(c)).collect();
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                for &d in &axes[3] {
                    let w = [a, b, c, d];
                    let v = f(&w);
                    if v < best.0 {
                        best = (v, w);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn primal_matches_grid_search() {
    // 2 bits, 2 classes, 4 triples
    let a = [[2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [-2.0, 2.0]];
    let rows = [(0, 1), (0, 1), (1, 0), (1, 0)];
    let nu = 0.3;
    let features = BitFeatures::from_columns(
        4,
        vec![a.iter().map(|r| r[0]).collect(), a.iter().map(|r| r[1]).collect()],
    )
    .unwrap();
    let layout = MarginLayout::new(2, rows.iter().map(|&(p, n)| (p, Some(n))).collect());
    let sol = solve_primal(&features, &layout, &settings(nu), None).unwrap();
    assert!(sol.weights.as_slice().iter().all(|&v| v <= 3.0));

    let f = |w: &[f64]| grid_objective(w, &a, &rows, nu);
    let (coarse, at) = grid_min(&[1.5; 4], 1.5, 0.05, &f);
    let (fine, _) = grid_min(&at, 0.1, 0.01, &f);
    assert!(fine <= coarse);
    assert!(sol.objective <= fine + 1e-12);
    assert!(fine - sol.objective <= 1e-3, "{} vs {fine}", sol.objective);
    assert!((f(sol.weights.as_slice()) - sol.objective).abs() < 1e-12);
}

#[test]
fn duals_follow_margins() {
    let features = BitFeatures::from_columns(1, vec![vec![2.0]]).unwrap();
    let layout = MarginLayout::new(2, vec![(0, Some(1))]);
    let w = WeightMatrix::from_rows(1, 2, vec![0.5 * 3f64.ln(), 0.0]).unwrap();
    let u = update_duals(&w, &features, &layout, &LossKind::Logistic, Mode::Image);
    assert!((u.values[0] - 0.25).abs() < 1e-15);
    let zero = update_duals(&WeightMatrix::zeros(1, 2), &features, &layout, &LossKind::Logistic, Mode::Image);
    assert_eq!(zero.values, vec![0.5]);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<(usize, Option<usize>)> = (0..30)
        .map(|_| {
            let p = rng.random_range(0..3);
            (p, Some((p + rng.random_range(1..3)) % 3))
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..30).map(|_| [-2.0, 0.0, 2.0][rng.random_range(0..3)]).collect())
        .collect();
    let features = BitFeatures::from_columns(30, cols.clone()).unwrap();
    let layout = MarginLayout::new(3, rows.clone());
    let raw: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..2.0)).collect();
    let w = WeightMatrix::from_rows(4, 3, raw.clone()).unwrap();
    let u = update_duals(&w, &features, &layout, &LossKind::Logistic, Mode::Image);
    for (e, &(p, n)) in rows.iter().enumerate() {
        let n = n.unwrap();
        let rho: f64 = (0..4).map(|s| cols[s][e] * (raw[s * 3 + p] - raw[s * 3 + n])).sum();
        // -L'(rho) for log(1 + exp(-rho))
        let expected = 1.0 / (1.0 + rho.exp());
        assert!((u.values[e] - expected).abs() < 1e-14);
        assert!(u.values[e] > 0.0 && u.values[e] < 1.0);
    }
}
