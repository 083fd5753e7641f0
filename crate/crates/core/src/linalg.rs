//! Dense linear algebra that the training loop needs but ndarray does not ship:
//! a one-sided Jacobi SVD, used for the nuclear norm and its subgradient.

use ndarray::{Array2, ArrayView2};

pub type Matrix = Array2<f64>;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi (Hestenes) SVD. Singular values are returned in
/// descending order. Accurate to a few ulps relative to the largest
/// singular value, which is what the oracle tests rely on.
pub fn svd(a: ArrayView2<'_, f64>) -> Svd {
    let (m, n) = a.dim();
    if m < n {
        let t = svd_tall(a.t());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    svd_tall(a)
}

fn svd_tall(a: ArrayView2<'_, f64>) -> Svd {
    let (m, n) = a.dim();
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut u = Matrix::zeros((m, n));
    let mut v = Matrix::zeros((n, n));
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u[[i, k]] = cols[j][i] / sigma;
            }
        }
        for i in 0..n {
            v[[i, k]] = vcols[j][i];
        }
    }
    Svd { u, s, v }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

impl Svd {
    /// Singular values at or below this are treated as zero.
    pub fn rank_tolerance(&self, rows: usize, cols: usize) -> f64 {
        let smax = self.s.first().copied().unwrap_or(0.0);
        (rows.max(cols) as f64) * f64::EPSILON * smax
    }

    /// `U Vᵀ` restricted to the numerically nonzero singular values; a valid
    /// subgradient of the nuclear norm.
    pub fn polar_factor(&self, rows: usize, cols: usize) -> Matrix {
        let tol = self.rank_tolerance(rows, cols);
        let k = self.s.iter().take_while(|&&s| s > tol).count();
        let u = self.u.slice(ndarray::s![.., ..k]);
        let v = self.v.slice(ndarray::s![.., ..k]);
        u.dot(&v.t())
    }
}
