//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the code under test.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;

pub type Matrix = Array2<f64>;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `Σ √eig(MᵀM)` using the smaller Gram matrix.
pub fn nuclear_norm_eigen(m: &Matrix) -> f64 {
    let a = to_na(m);
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * &a
    } else {
        &a * a.transpose()
    };
    gram.symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&e| e.max(0.0).sqrt())
        .sum()
}

pub fn spectral_norm_eigen(m: &Matrix) -> f64 {
    let a = to_na(m);
    (a.transpose() * &a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e))
        .sqrt()
}

/// `Σ_(i,j) w_ij ‖h_i − h_j‖²` by an explicit loop.
pub fn edge_sum(edges: &[(usize, usize, f64)], h: &Matrix) -> f64 {
    let mut total = 0.0;
    for &(i, j, w) in edges {
        let mut d2 = 0.0;
        for c in 0..h.ncols() {
            let d = h[[i, c]] - h[[j, c]];
            d2 += d * d;
        }
        total += w * d2;
    }
    total
}

/// Mean BCE with source labelled 0 and target labelled 1, each side
/// averaged, then the two averages averaged; probabilities clamped.
pub fn scalar_bce(p_source: &[f64], p_target: &[f64]) -> f64 {
    let clamp = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let mut s = 0.0;
    for &p in p_source {
        s -= (1.0 - clamp(p)).ln();
    }
    let mut t = 0.0;
    for &p in p_target {
        t -= clamp(p).ln();
    }
    (s / p_source.len() as f64 + t / p_target.len() as f64) / 2.0
}

/// Soft-impute: `Z ← SVT_λ(P_Ω(W) + P_Ω⊥(Z))` until the update is tiny.
pub fn soft_impute(observed: &Matrix, mask: &Array2<bool>, lambda: f64, iters: usize) -> Matrix {
    let mut z = Matrix::zeros(observed.dim());
    for _ in 0..iters {
        let filled =
            Array2::from_shape_fn(
                observed.dim(),
                |ix| if mask[ix] { observed[ix] } else { z[ix] },
            );
        let svd = to_na(&filled).svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut next = DMatrix::zeros(filled.nrows(), filled.ncols());
        for (k, &s) in svd.singular_values.iter().enumerate() {
            let shrunk = s - lambda;
            if shrunk > 0.0 {
                next += u.column(k) * vt.row(k) * shrunk;
            }
        }
        let next = from_na(&next);
        let change = (&next - &z).mapv(|x| x * x).sum().sqrt();
        z = next;
        if change < 1e-12 {
            break;
        }
    }
    z
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Independent pseudo-label rule: filter by threshold, sort by confidence
/// then index, keep `floor(fraction · predicted-count)` per class.
pub fn pseudo_oracle(probs: &Matrix, tau: f64, fraction: f64) -> Vec<(usize, usize)> {
    let c = probs.ncols();
    let mut rows = Vec::new();
    let mut predicted = vec![0usize; c];
    for i in 0..probs.nrows() {
        let mut best = 0;
        for j in 1..c {
            if probs[[i, j]] > probs[[i, best]] {
                best = j;
            }
        }
        predicted[best] += 1;
        rows.push((i, best, probs[[i, best]]));
    }
    let mut kept: Vec<(usize, usize, f64)> = rows.into_iter().filter(|r| r.2 >= tau).collect();
    kept.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    let mut taken = vec![0usize; c];
    for (i, k, _) in kept {
        let cap = (fraction * predicted[k] as f64 + 1e-9).floor() as usize;
        if taken[k] < cap {
            taken[k] += 1;
            out.push((i, k));
        }
    }
    out.sort();
    out
}

/// Held-out accuracy of an L2-regularised logistic regression predicting a
/// binary label, trained by full-batch gradient descent on standardised
/// features. Even rows train, odd rows test.
pub fn linear_probe_accuracy(x: &[Vec<f64>], y: &[bool]) -> f64 {
    let d = x[0].len();
    let n = x.len();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for row in x {
        for j in 0..d {
            mean[j] += row[j] / n as f64;
        }
    }
    for row in x {
        for j in 0..d {
            sd[j] += (row[j] - mean[j]).powi(2) / n as f64;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            (0..d)
                .map(|j| (r[j] - mean[j]) / sd[j].sqrt().max(1e-12))
                .collect()
        })
        .collect();
    let train: Vec<usize> = (0..n).step_by(2).collect();
    let test: Vec<usize> = (1..n).step_by(2).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..500 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for &i in &train {
            let s: f64 = b + (0..d).map(|j| w[j] * z[i][j]).sum::<f64>();
            let p = 1.0 / (1.0 + (-s).exp());
            let e = p - if y[i] { 1.0 } else { 0.0 };
            for j in 0..d {
                gw[j] += e * z[i][j] / train.len() as f64;
            }
            gb += e / train.len() as f64;
        }
        for j in 0..d {
            w[j] -= lr * (gw[j] + 1e-3 * w[j]);
        }
        b -= lr * gb;
    }
    let hits = test
        .iter()
        .filter(|&&i| {
            let s: f64 = b + (0..d).map(|j| w[j] * z[i][j]).sum::<f64>();
            (s > 0.0) == y[i]
        })
        .count();
    hits as f64 / test.len() as f64
}

/// Relative error used by the finite-difference checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
