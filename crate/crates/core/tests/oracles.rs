mod support;

use std::sync::Arc;

use gda_hin::align::{domain_adversarial_loss, nda_loss, Discriminator};
use gda_hin::autograd::Tape;
use gda_hin::completion::{assemble_block_matrix, laplacian_quadratic, nuclear_norm};
use gda_hin::extractor::topo_da_loss;
use gda_hin::hin::{Laplacian, LaplacianBlock};
use gda_hin::params::{gaussian, ParamStore};
use gda_hin::trainer::{accuracy, select_pseudo_labels};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn random_matrix(rng: &mut ChaCha8Rng, max_r: usize, max_c: usize) -> Matrix {
    let r = rng.random_range(1..=max_r);
    let c = rng.random_range(1..=max_c);
    gaussian(rng, (r, c), 1.0)
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                e.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    e
}

#[test]
fn nuclear_norm_matches_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let m = random_matrix(&mut rng, 30, 20);
        let ours = nuclear_norm(&m).unwrap();
        let oracle = nuclear_norm_eigen(&m);
        assert!(
            (ours - oracle).abs() < 1e-8 * oracle.max(1.0),
            "{ours} vs {oracle}"
        );
    }
}

#[test]
fn nuclear_norm_small_cases() {
    assert_eq!(nuclear_norm(&Matrix::zeros((3, 2))).unwrap(), 0.0);
    let d = ndarray::array![[3.0, 0.0], [0.0, 4.0]];
    assert!((nuclear_norm(&d).unwrap() - 7.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = gaussian(&mut rng, (6, 4), 1.0);
    assert!((nuclear_norm(&m).unwrap() - nuclear_norm_eigen(&m)).abs() < 1e-8);
    assert!(nuclear_norm(&ndarray::array![[f64::NAN]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nuclear_norm_is_a_norm(seed in 0u64..10_000, c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(1..=12);
        let k = rng.random_range(1..=9);
        let a = gaussian(&mut rng, (r, k), 1.0);
        let b = gaussian(&mut rng, (r, k), 1.0);
        let na = nuclear_norm(&a).unwrap();
        let nb = nuclear_norm(&b).unwrap();
        prop_assert!((nuclear_norm(&(&a * c)).unwrap() - c.abs() * na).abs() < 1e-8 * (1.0 + na));
        prop_assert!(nuclear_norm(&(&a + &b)).unwrap() <= na + nb + 1e-9);
        prop_assert!(na + 1e-9 >= spectral_norm_eigen(&a));
    }

    #[test]
    fn laplacian_quadratic_invariant_under_component_shift(seed in 0u64..10_000, shift in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=20);
        let edges = random_graph(&mut rng, n, 0.3);
        let lap = Laplacian::from_edges(n, edges.iter().copied());
        let block = LaplacianBlock::new(lap, Laplacian::zeros(3));
        let h = gaussian(&mut rng, (n + 3, 2), 1.0);
        // connected component of node 0 by flood fill
        let mut comp = vec![false; n];
        comp[0] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for &(i, j, _) in &edges {
                if comp[i] != comp[j] {
                    comp[i] = true;
                    comp[j] = true;
                    changed = true;
                }
            }
        }
        let mut shifted = h.clone();
        for i in 0..n {
            if comp[i] {
                shifted.row_mut(i).mapv_inplace(|x| x + shift);
            }
        }
        let a = laplacian_quadratic(&h, &block).unwrap();
        let b = laplacian_quadratic(&shifted, &block).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
        prop_assert!(a >= -1e-12);
    }
}

#[test]
fn laplacian_quadratic_matches_edge_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let ns = rng.random_range(1..=25);
        let nt = rng.random_range(1..=25);
        let es = random_graph(&mut rng, ns, 0.2);
        let et = random_graph(&mut rng, nt, 0.2);
        let block = LaplacianBlock::new(
            Laplacian::from_edges(ns, es.iter().copied()),
            Laplacian::from_edges(nt, et.iter().copied()),
        );
        let d = rng.random_range(1..=5);
        let h = gaussian(&mut rng, (ns + nt, d), 1.0);
        let mut all = es.clone();
        all.extend(et.iter().map(|&(i, j, w)| (i + ns, j + ns, w)));
        let oracle = edge_sum(&all, &h);
        let ours = laplacian_quadratic(&h, &block).unwrap();
        assert!(
            (ours - oracle).abs() < 1e-9 * (1.0 + oracle),
            "{ours} vs {oracle}"
        );
    }
}

#[test]
fn laplacian_null_space_is_componentwise_constant() {
    let edges = vec![(0, 1, 1.0), (1, 2, 2.0), (3, 4, 1.0)];
    let block = LaplacianBlock::new(Laplacian::from_edges(5, edges), Laplacian::zeros(0));
    let h = ndarray::array![
        [1.0, -2.0],
        [1.0, -2.0],
        [1.0, -2.0],
        [7.0, 0.5],
        [7.0, 0.5]
    ];
    assert_eq!(laplacian_quadratic(&h, &block).unwrap(), 0.0);
    let unit = LaplacianBlock::new(Laplacian::from_edges(2, [(0, 1, 1.0)]), Laplacian::zeros(0));
    assert_eq!(
        laplacian_quadratic(&ndarray::array![[1.0], [0.0]], &unit).unwrap(),
        1.0
    );
}

#[test]
fn grl_reverses_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..20 {
        let lambda = if case == 0 {
            0.0
        } else {
            rng.random_range(0.0..3.0)
        };
        let x = gaussian(&mut rng, (3, 4), 1.0);
        let w = gaussian(&mut rng, (4, 2), 1.0);
        let mut t = Tape::new();
        let xv = t.constant(x);
        let g = t.grl(xv, lambda);
        let wv = t.constant(w);
        let y = t.matmul(g, wv);
        let y = t.tanh(y);
        let target = Arc::new(Matrix::zeros((3, 2)));
        let l = t.sum_squared_diff(y, target);
        let grads = t.backward(l);
        let up = grads.wrt(xv).unwrap();
        let down = grads.wrt(g).unwrap();
        for (u, d) in up.iter().zip(down) {
            assert!((u + lambda * d).abs() <= 1e-12, "case {case}");
            if lambda == 0.0 {
                assert_eq!(*u, 0.0);
            }
        }
    }
}

#[test]
fn adversarial_losses_match_scalar_bce() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let disc = Discriminator::new(&mut store, &mut rng, "d", 6, 5);
    for _ in 0..10 {
        let hs = gaussian(&mut rng, (8, 6), 1.5);
        let ht = gaussian(&mut rng, (8, 6), 1.5);
        let ps = disc.probabilities(&store, &hs).column(0).to_vec();
        let pt = disc.probabilities(&store, &ht).column(0).to_vec();
        let oracle = scalar_bce(&ps, &pt);
        assert!((nda_loss(&store, &hs, &ht, &disc).unwrap() - oracle).abs() < 1e-10);
        assert!((topo_da_loss(&store, &hs, &ht, &disc).unwrap() - oracle).abs() < 1e-10);
    }
    let empty = Matrix::zeros((0, 6));
    let one = Matrix::zeros((1, 6));
    assert!(topo_da_loss(&store, &empty, &one, &disc).is_err());
}

#[test]
fn discriminator_step_lowers_loss_and_encoder_gradient_is_reversed() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let disc = Discriminator::new(&mut store, &mut rng, "d", 3, 4);
    let enc = store.insert("enc", gaussian(&mut rng, (3, 3), 0.5));
    let xs = gaussian(&mut rng, (10, 3), 1.0);
    let xt = gaussian(&mut rng, (10, 3), 1.0) + 1.0;
    let grads_at = |store: &ParamStore, lambda: f64| {
        let mut t = Tape::new();
        let w = t.param(store, enc);
        let a = t.constant(xs.clone());
        let b = t.constant(xt.clone());
        let hs = t.matmul(a, w);
        let ht = t.matmul(b, w);
        let l = domain_adversarial_loss(&mut t, store, &disc, hs, ht, lambda).unwrap();
        let value = t.scalar(l);
        (value, t.backward(l).params(&t))
    };
    let (before, with_grl) = grads_at(&store, 1.0);
    let (_, plain) = grads_at(&store, -1.0);
    for ((id, g1), (_, g2)) in with_grl.iter().zip(&plain) {
        if *id == enc {
            assert!(g1.iter().zip(g2).all(|(a, b)| (a + b).abs() < 1e-12));
        } else {
            assert!(g1.iter().zip(g2).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
    let mut moved = store.clone();
    for (id, g) in &with_grl {
        if *id != enc {
            *moved.value_mut(*id) -= &(g * 0.05);
        }
    }
    assert!(grads_at(&moved, 1.0).0 < before);
}

#[test]
fn pseudo_labels_match_sort_filter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let logits = gaussian(&mut rng, (100, 4), 3.0);
    let probs = gda_hin::autograd::softmax_rows(&logits);
    let ours = select_pseudo_labels(&probs, 0.8, 0.1).unwrap();
    let got: Vec<(usize, usize)> = ours.labels.iter().map(|l| (l.node, l.class)).collect();
    assert_eq!(got, pseudo_oracle(&probs, 0.8, 0.1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_label_invariants(seed in 0u64..10_000, tau in 0.3f64..1.0, frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..60);
        let c = rng.random_range(2..6);
        let probs = gda_hin::autograd::softmax_rows(&gaussian(&mut rng, (n, c), 3.0));
        let a = select_pseudo_labels(&probs, tau, frac).unwrap();
        prop_assert_eq!(&a, &select_pseudo_labels(&probs, tau, frac).unwrap());
        let predicted = gda_hin::trainer::argmax_rows(&probs);
        for k in 0..c {
            let class_size = predicted.iter().filter(|&&p| p == k).count();
            let taken = a.labels.iter().filter(|l| l.class == k).count();
            prop_assert!(taken as f64 <= frac * class_size as f64 + 1e-9);
        }
        let mut nodes = a.nodes();
        nodes.dedup();
        prop_assert_eq!(nodes.len(), a.len());
        prop_assert!(a.labels.iter().all(|l| l.confidence >= tau));
        let got: Vec<(usize, usize)> = a.labels.iter().map(|l| (l.node, l.class)).collect();
        prop_assert_eq!(got, pseudo_oracle(&probs, tau, frac));
    }

    #[test]
    fn accuracy_equals_recount(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..100);
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let mut hits = 0;
        for i in 0..n {
            if p[i] == y[i] {
                hits += 1;
            }
        }
        let a = accuracy(&p, &y).unwrap();
        prop_assert_eq!(a, hits as f64 / n as f64);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn constant_predictor_is_at_chance() {
    let labels: Vec<usize> = (0..400).map(|i| i % 4).collect();
    assert_eq!(accuracy(&vec![2; 400], &labels).unwrap(), 0.25);
    assert_eq!(accuracy(&labels, &labels).unwrap(), 1.0);
}

/// The rank-2 benchmark: `M = U Vᵀ` with the two diagonal blocks observed.
pub fn rank2_benchmark(seed: u64) -> (Matrix, Matrix, Matrix, Array2<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gaussian(&mut rng, (30, 2), 1.0);
    let v = gaussian(&mut rng, (14, 2), 1.0);
    let m = u.dot(&v.t());
    let xs = m.slice(ndarray::s![..15, ..7]).to_owned();
    let xt = m.slice(ndarray::s![15.., 7..]).to_owned();
    let mask = Array2::from_shape_fn((30, 14), |(i, j)| (i < 15) == (j < 7));
    (m, xs, xt, mask)
}

#[test]
fn completion_agrees_with_soft_impute() {
    let (m, xs, xt, mask) = rank2_benchmark(8);
    let delta = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut block = assemble_block_matrix(&xs, &xt, delta, 0.01, &mut rng).unwrap();
    let trace = block.fit(4000, 0.01);
    // pooled-MSE objective ⇔ ½‖P_Ω(Ŵ − W)‖² + (δ·|Ω|/2)‖Ŵ‖_*
    let observed_entries = mask.iter().filter(|&&b| b).count() as f64;
    let observed = Array2::from_shape_fn(m.dim(), |ix| if mask[ix] { m[ix] } else { 0.0 });
    let z = soft_impute(&observed, &mask, delta * observed_entries / 2.0, 5000);
    let w = block.recovered_features();
    let rel = frobenius(&(w - &z)) / frobenius(&z);
    assert!(rel < 0.05, "relative gap to soft-impute {rel}");
    // median loss over windows decreases
    let window_median = |s: &[f64]| support_median(s);
    let first = window_median(&trace[..500]);
    let last = window_median(&trace[trace.len() - 500..]);
    assert!(last < first);
}

fn support_median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
