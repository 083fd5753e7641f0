//! Private-type completion.
//!
//! Source and target private types live in unrelated feature spaces. Their
//! features are placed on the diagonal of `W = [[X_S, 0], [0, X_T]]` and a
//! learnable `Ŵ` of the same shape is fitted to the observed diagonal blocks
//! under a nuclear-norm penalty. Rows of `Ŵ` are the common-space features of
//! the private nodes, source rows first.

use std::sync::Arc;

use rand::Rng;

use crate::align::pooled_mse;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::hin::LaplacianBlock;
use crate::linalg::{self, Matrix};
use crate::params::{gaussian, Adam, AdamConfig, ParamStore};

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionBlock {
    x_source: Arc<Matrix>,
    x_target: Arc<Matrix>,
    w_hat: Matrix,
    delta: f64,
}

/// Places `X_S` and `X_T` on the block diagonal. The unobserved blocks of `Ŵ`
/// start as Gaussian noise with standard deviation `init_std` (zero allowed).
pub fn assemble_block_matrix<R: Rng + ?Sized>(
    x_source: &Matrix,
    x_target: &Matrix,
    delta: f64,
    init_std: f64,
    rng: &mut R,
) -> Result<CompletionBlock> {
    if x_source.is_empty() || x_target.is_empty() {
        return Err(Error::contract(
            "completion needs non-empty source and target blocks",
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::config(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let (ns, ds) = x_source.dim();
    let (nt, dt) = x_target.dim();
    let mut w_hat = Matrix::zeros((ns + nt, ds + dt));
    if init_std > 0.0 {
        w_hat
            .slice_mut(ndarray::s![..ns, ds..])
            .assign(&gaussian(rng, (ns, dt), init_std));
        w_hat
            .slice_mut(ndarray::s![ns.., ..ds])
            .assign(&gaussian(rng, (nt, ds), init_std));
    }
    w_hat.slice_mut(ndarray::s![..ns, ..ds]).assign(x_source);
    w_hat.slice_mut(ndarray::s![ns.., ds..]).assign(x_target);
    Ok(CompletionBlock {
        x_source: Arc::new(x_source.clone()),
        x_target: Arc::new(x_target.clone()),
        w_hat,
        delta,
    })
}

impl CompletionBlock {
    pub fn source_shape(&self) -> (usize, usize) {
        self.x_source.dim()
    }

    pub fn target_shape(&self) -> (usize, usize) {
        self.x_target.dim()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_hat.dim()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn x_source(&self) -> &Arc<Matrix> {
        &self.x_source
    }

    pub fn x_target(&self) -> &Arc<Matrix> {
        &self.x_target
    }

    /// The observed matrix `W`.
    pub fn observed(&self) -> Matrix {
        let (ns, ds) = self.source_shape();
        let mut w = Matrix::zeros(self.shape());
        w.slice_mut(ndarray::s![..ns, ..ds]).assign(&*self.x_source);
        w.slice_mut(ndarray::s![ns.., ds..]).assign(&*self.x_target);
        w
    }

    /// The full recovered matrix `Ŵ`, one common-space row per private node.
    pub fn recovered_features(&self) -> &Matrix {
        &self.w_hat
    }

    pub fn set_recovered(&mut self, w_hat: Matrix) -> Result<()> {
        if w_hat.dim() != self.shape() {
            return Err(Error::contract(format!(
                "recovered matrix shape {:?}, block is {:?}",
                w_hat.dim(),
                self.shape()
            )));
        }
        self.w_hat = w_hat;
        Ok(())
    }

    /// `(Û_S, Û_T)`: the top-right and bottom-left blocks of `Ŵ`.
    pub fn hidden_blocks(&self) -> (Matrix, Matrix) {
        let (ns, ds) = self.source_shape();
        (
            self.w_hat.slice(ndarray::s![..ns, ds..]).to_owned(),
            self.w_hat.slice(ndarray::s![ns.., ..ds]).to_owned(),
        )
    }

    /// Loss of this block on a tape, with `Ŵ` supplied as `w_hat`.
    pub fn loss_on_tape(&self, tape: &mut Tape, w_hat: Var) -> Var {
        completion_loss_var(tape, w_hat, &self.x_source, &self.x_target, self.delta)
    }

    /// Minimises this block's loss over `Ŵ` alone with Adam; returns the loss
    /// before each step.
    pub fn fit(&mut self, steps: usize, learning_rate: f64) -> Vec<f64> {
        let mut store = ParamStore::new();
        let id = store.insert("w_hat", self.w_hat.clone());
        let mut opt = Adam::new(AdamConfig::with_lr(learning_rate));
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            let mut tape = Tape::new();
            let w = tape.param(&store, id);
            let l = self.loss_on_tape(&mut tape, w);
            trace.push(tape.scalar(l));
            let g = tape.backward(l).params(&tape);
            opt.step(&mut store, &g);
        }
        self.w_hat = store.value(id).clone();
        trace
    }
}

/// `MSE(observed blocks of Ŵ, X) + δ·‖Ŵ‖_*` on a tape. The MSE pools both
/// observed blocks into a single mean.
pub fn completion_loss_var(
    tape: &mut Tape,
    w_hat: Var,
    x_source: &Arc<Matrix>,
    x_target: &Arc<Matrix>,
    delta: f64,
) -> Var {
    let (ns, ds) = x_source.dim();
    let xs_hat = tape.block(w_hat, 0, 0, x_source.dim());
    let xt_hat = tape.block(w_hat, ns, ds, x_target.dim());
    let mse = pooled_mse(
        tape,
        &[(xs_hat, x_source.clone()), (xt_hat, x_target.clone())],
    );
    let nuc = tape.nuclear_norm(w_hat);
    let reg = tape.scale(nuc, delta);
    tape.add(mse, reg)
}

/// Sum of singular values.
pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract(
            "nuclear norm of a matrix with non-finite entries",
        ));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(linalg::svd(m.view()).s.iter().sum())
}

/// `Σ_k [MSE(X^k, X̂^k) + δ_k·‖Ŵ_k‖_*]` over private pairs.
pub fn completion_loss(blocks: &[CompletionBlock]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::contract("completion loss needs at least one block"));
    }
    let mut total = 0.0;
    for b in blocks {
        if !(b.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        let mut tape = Tape::new();
        let w = tape.constant(b.w_hat.clone());
        let l = b.loss_on_tape(&mut tape, w);
        total += tape.scalar(l);
    }
    Ok(total)
}

/// `tr(Hᵀ L^g H)` for private-node states `H` in block order.
pub fn laplacian_quadratic(h: &Matrix, lap: &LaplacianBlock) -> Result<f64> {
    lap.quadratic(h.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hin::Laplacian;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn block_placement() {
        let b =
            assemble_block_matrix(&Matrix::eye(2), &array![[5.0]], 0.1, 0.0, &mut rng()).unwrap();
        assert_eq!(
            b.observed(),
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 5.0]]
        );
        let b =
            assemble_block_matrix(&array![[2.0]], &array![[3.0]], 0.1, 0.0, &mut rng()).unwrap();
        assert_eq!(b.observed(), array![[2.0, 0.0], [0.0, 3.0]]);
        assert_eq!(b.recovered_features(), &b.observed());
    }

    #[test]
    fn noisy_init_keeps_observed_blocks() {
        let xs = array![[1.0, 2.0], [3.0, 4.0]];
        let b = assemble_block_matrix(&xs, &array![[5.0]], 0.1, 0.01, &mut rng()).unwrap();
        assert_eq!(b.recovered_features().slice(ndarray::s![..2, ..2]), xs);
        let (us, ut) = b.hidden_blocks();
        assert_eq!((us.dim(), ut.dim()), ((2, 1), (1, 2)));
        assert!(us
            .iter()
            .chain(ut.iter())
            .all(|x| *x != 0.0 && x.abs() < 0.1));
    }

    #[test]
    fn assembly_errors() {
        let e = Matrix::zeros((0, 2));
        assert!(matches!(
            assemble_block_matrix(&e, &array![[1.0]], 0.1, 0.0, &mut rng()),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            assemble_block_matrix(&array![[1.0]], &array![[1.0]], 0.0, 0.0, &mut rng()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nuclear_norm_examples() {
        assert_eq!(nuclear_norm(&Matrix::zeros((3, 2))).unwrap(), 0.0);
        assert!((nuclear_norm(&array![[3.0, 0.0], [0.0, 4.0]]).unwrap() - 7.0).abs() < 1e-14);
        assert!(nuclear_norm(&array![[f64::NAN]]).is_err());
    }

    #[test]
    fn exact_reconstruction_leaves_only_regulariser() {
        let xs = array![[1.0, 2.0], [0.5, -1.0]];
        let xt = array![[3.0]];
        let b = assemble_block_matrix(&xs, &xt, 0.3, 0.0, &mut rng()).unwrap();
        let r = 0.3 * nuclear_norm(&b.observed()).unwrap();
        assert!((completion_loss(&[b]).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn vanishing_delta_leaves_pooled_mse() {
        let xs = array![[0.0, 0.0]];
        let xt = array![[0.0, 0.0, 0.0]];
        let mut b = assemble_block_matrix(&xs, &xt, 1e-9, 0.0, &mut rng()).unwrap();
        let mut w = b.recovered_features().clone();
        // source observed squared error 1.0, target observed squared error 1.5
        w[[0, 0]] = 1.0;
        w[[1, 2]] = 1.0;
        w[[1, 3]] = 0.5_f64.sqrt();
        b.set_recovered(w).unwrap();
        let l = completion_loss(&[b]).unwrap();
        assert!((l - 2.5 / 5.0).abs() < 1e-8, "{l}");
    }

    #[test]
    fn set_recovered_checks_shape() {
        let mut b =
            assemble_block_matrix(&array![[1.0]], &array![[1.0]], 0.1, 0.0, &mut rng()).unwrap();
        assert!(b.set_recovered(Matrix::zeros((3, 2))).is_err());
    }

    #[test]
    fn fit_reduces_loss() {
        let xs = array![[1.0, 2.0], [2.0, 4.1], [0.5, 1.0]];
        let xt = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let mut b = assemble_block_matrix(&xs, &xt, 0.1, 0.01, &mut rng()).unwrap();
        let trace = b.fit(200, 0.01);
        assert!(trace.last().unwrap() < &trace[0]);
        assert_eq!(b.shape(), (5, 5));
    }

    #[test]
    fn laplacian_quadratic_examples() {
        let lap = LaplacianBlock::new(Laplacian::from_edges(2, [(0, 1, 1.0)]), Laplacian::zeros(0));
        assert_eq!(
            laplacian_quadratic(&array![[1.0], [0.0]], &lap).unwrap(),
            1.0
        );
        assert_eq!(
            laplacian_quadratic(&array![[2.5], [2.5]], &lap).unwrap(),
            0.0
        );
        assert!(laplacian_quadratic(&array![[1.0]], &lap).is_err());
    }
}
