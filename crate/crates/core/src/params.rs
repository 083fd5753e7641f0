//! Named parameter tensors and the Adam optimizer.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Insertion-ordered store of named parameter matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get_id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Returns the existing parameter when `name` is present with the same
    /// shape; otherwise inserts the matrix produced by `init`.
    pub fn get_or_insert_with(
        &mut self,
        name: &str,
        shape: (usize, usize),
        init: impl FnOnce() -> Matrix,
    ) -> ParamId {
        if let Some(&i) = self.index.get(name) {
            if self.values[i].dim() == shape {
                return ParamId(i);
            }
            let m = init();
            debug_assert_eq!(m.dim(), shape);
            self.values[i] = m;
            return ParamId(i);
        }
        let m = init();
        debug_assert_eq!(m.dim(), shape);
        self.insert(name, m)
    }

    pub fn insert(&mut self, name: &str, value: Matrix) -> ParamId {
        if let Some(&i) = self.index.get(name) {
            self.values[i] = value;
            return ParamId(i);
        }
        let i = self.values.len();
        self.names.push(name.to_owned());
        self.values.push(value);
        self.index.insert(name.to_owned(), i);
        ParamId(i)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    /// Copies every tensor of `other` whose name and shape match.
    pub fn warm_start_from(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for (name, v) in other.iter() {
            if let Some(&i) = self.index.get(name) {
                if self.values[i].dim() == v.dim() {
                    self.values[i].assign(v);
                    copied += 1;
                }
            }
        }
        copied
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Glorot-uniform initialisation for a `fan_in × fan_out` weight.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Matrix::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), std: f64) -> Matrix {
    let dist = Normal::new(0.0, std).expect("std must be non-negative");
    Matrix::from_shape_simple_fn(shape, || dist.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Parameters listed in `frozen` are never moved.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: HashMap<ParamId, Matrix>,
    v: HashMap<ParamId, Matrix>,
    frozen: BTreeSet<ParamId>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
            frozen: BTreeSet::new(),
        }
    }

    pub fn freeze(&mut self, id: ParamId) {
        self.frozen.insert(id);
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.contains(&id)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Matrix)]) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (id, g) in grads {
            if self.frozen.contains(id) {
                continue;
            }
            let m = self.m.entry(*id).or_insert_with(|| Matrix::zeros(g.dim()));
            let v = self.v.entry(*id).or_insert_with(|| Matrix::zeros(g.dim()));
            let p = store.value_mut(*id);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}
