//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Every loss in the model is a scalar (`1 × 1`) node on a [`Tape`]. The op
//! set is exactly what the type autoencoders, discriminators, graph
//! transformer, completion block and classifier need; several ops are fused
//! (cross-entropy, clamped BCE, nuclear norm, Laplacian quadratic form, edge
//! attention) so their backward passes stay exact and cheap.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{s, Axis, Zip};
use rand::Rng;

use crate::exec::Exec;
use crate::hin::LaplacianBlock;
use crate::linalg::{self, Matrix};
use crate::params::{ParamId, ParamStore};

/// Lower/upper clamp applied to discriminator probabilities before `log`.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Incoming edges of one target node type, grouped by target node.
///
/// Edges of target `t` occupy `offsets[t]..offsets[t + 1]`; each edge records
/// the relation slot it came from and the source node index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InEdges {
    pub offsets: Vec<usize>,
    pub rel: Vec<usize>,
    pub src: Vec<usize>,
}

impl InEdges {
    /// `edges[r]` lists `(src, dst)` pairs of relation slot `r`.
    pub fn build(num_targets: usize, edges: &[&[(usize, usize)]]) -> Self {
        let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_targets];
        for (r, list) in edges.iter().enumerate() {
            for &(s, d) in list.iter() {
                buckets[d].push((r, s));
            }
        }
        let mut out = InEdges {
            offsets: Vec::with_capacity(num_targets + 1),
            rel: Vec::new(),
            src: Vec::new(),
        };
        out.offsets.push(0);
        for b in buckets {
            for (r, s) in b {
                out.rel.push(r);
                out.src.push(s);
            }
            out.offsets.push(out.rel.len());
        }
        out
    }

    pub fn num_targets(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn degree(&self, t: usize) -> usize {
        self.offsets[t + 1] - self.offsets[t]
    }
}

/// Per-relation inputs of an attention aggregation.
#[derive(Debug, Clone, Copy)]
pub struct AttnInputs {
    /// Queries of the target nodes, `n_t × d`.
    pub q: Var,
    /// Keys and values of the source nodes, `n_s × d`.
    pub k: Var,
    pub v: Var,
    /// `1 × 1` relation priority.
    pub mu: Var,
}

#[derive(Debug)]
struct AttentionNode {
    rels: Vec<AttnInputs>,
    edges: Arc<InEdges>,
    heads: usize,
    /// Attention weight per (edge, head), edge-major.
    alpha: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Tanh(Var),
    Grl(Var, f64),
    Dropout(Var, Matrix),
    Rows(Var, Vec<usize>),
    Block(Var, usize, usize),
    VStack(Vec<Var>),
    SumSquaredDiff(Var, Arc<Matrix>),
    SoftmaxXent(Var, Vec<usize>, Matrix),
    Bce(Var, f64, Matrix),
    Nuclear(Var, Matrix),
    LaplacianQuad(Var, Arc<LaplacianBlock>),
    Attention(Box<AttentionNode>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    exec: Exec,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_exec(exec: Exec) -> Self {
        Self {
            exec,
            ..Self::default()
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_constant(&mut self, x: f64) -> Var {
        self.constant(Matrix::from_elem((1, 1), x))
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    /// Sums scalars (or equal-shaped matrices); an empty list gives `0`.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        match xs {
            [] => self.scalar_constant(0.0),
            [x] => *x,
            [x, rest @ ..] => {
                let tail = self.sum(rest);
                self.add(*x, tail)
            }
        }
    }

    /// `a + 1·bias` with `bias` a `1 × d` row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let value = self.value(a) + self.value(bias);
        self.push(value, Op::AddBias(a, bias))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Gradient reversal: identity forward, `−λ·g` backward.
    pub fn grl(&mut self, a: Var, lambda: f64) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::Grl(a, lambda))
    }

    /// Inverted dropout. `p == 0` returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let mask = self
            .value(a)
            .mapv(|_| if rng.random::<f64>() < p { 0.0 } else { keep });
        let value = self.value(a) * &mask;
        self.push(value, Op::Dropout(a, mask))
    }

    /// Selects rows in the given order.
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        self.push(value, Op::Rows(a, idx.to_vec()))
    }

    /// Sub-block `a[r0.., c0..]` of the given shape.
    pub fn block(&mut self, a: Var, r0: usize, c0: usize, shape: (usize, usize)) -> Var {
        let value = self
            .value(a)
            .slice(s![r0..r0 + shape.0, c0..c0 + shape.1])
            .to_owned();
        self.push(value, Op::Block(a, r0, c0))
    }

    pub fn vstack(&mut self, xs: &[Var]) -> Var {
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("vstack needs equal widths");
        self.push(value, Op::VStack(xs.to_vec()))
    }

    /// `Σ (a − target)²` as a scalar.
    pub fn sum_squared_diff(&mut self, a: Var, target: Arc<Matrix>) -> Var {
        assert_eq!(
            self.value(a).dim(),
            target.dim(),
            "sum_squared_diff shape mismatch"
        );
        let ssd = Zip::from(self.value(a))
            .and(&*target)
            .fold(0.0, |acc, &x, &t| acc + (x - t) * (x - t));
        self.push(
            Matrix::from_elem((1, 1), ssd),
            Op::SumSquaredDiff(a, target),
        )
    }

    /// Mean squared error against a constant.
    pub fn mse(&mut self, a: Var, target: Arc<Matrix>) -> Var {
        let n = target.len().max(1) as f64;
        let s = self.sum_squared_diff(a, target);
        self.scale(s, 1.0 / n)
    }

    /// Mean softmax cross-entropy of `logits` rows against class ids.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.nrows(), labels.len(), "one label per logit row");
        let probs = softmax_rows(z);
        let n = labels.len().max(1) as f64;
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let row = z.row(i);
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.mapv(|x| (x - m).exp()).sum().ln();
                lse - row[y]
            })
            .sum::<f64>()
            / n;
        self.push(
            Matrix::from_elem((1, 1), loss),
            Op::SoftmaxXent(logits, labels.to_vec(), probs),
        )
    }

    /// Mean binary cross-entropy of `σ(logits)` (an `n × 1` column) against a
    /// constant target in `{0, 1}`, with probabilities clamped to
    /// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
    pub fn bce_with_logits(&mut self, logits: Var, target: f64) -> Var {
        let p = self.value(logits).mapv(sigmoid);
        let n = p.len().max(1) as f64;
        let loss = p
            .iter()
            .map(|&p| {
                let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / n;
        self.push(Matrix::from_elem((1, 1), loss), Op::Bce(logits, target, p))
    }

    /// Nuclear norm; backward uses the subgradient `U Vᵀ`.
    pub fn nuclear_norm(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let (r, c) = m.dim();
        let d = linalg::svd(m.view());
        let polar = d.polar_factor(r, c);
        let value: f64 = d.s.iter().sum();
        self.push(Matrix::from_elem((1, 1), value), Op::Nuclear(a, polar))
    }

    /// `tr(Hᵀ L^g H)`. Panics on a row-count mismatch; callers validate.
    pub fn laplacian_quadratic(&mut self, h: Var, lap: Arc<LaplacianBlock>) -> Var {
        let value = lap
            .quadratic(self.value(h).view())
            .expect("H rows must match the Laplacian block");
        self.push(Matrix::from_elem((1, 1), value), Op::LaplacianQuad(h, lap))
    }

    /// Multi-head scaled dot-product attention of every target node over its
    /// typed in-neighbours, softmax-normalised jointly across relations.
    /// Targets without in-edges get a zero row.
    pub fn edge_attention(
        &mut self,
        rels: &[AttnInputs],
        edges: Arc<InEdges>,
        heads: usize,
    ) -> Var {
        let n_t = edges.num_targets();
        let d = rels.first().map_or(0, |r| self.value(r.v).ncols());
        assert!(
            heads > 0 && d % heads == 0,
            "hidden dim must split across heads"
        );
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let q: Vec<&Matrix> = rels.iter().map(|r| self.value(r.q)).collect();
        let k: Vec<&Matrix> = rels.iter().map(|r| self.value(r.k)).collect();
        let v: Vec<&Matrix> = rels.iter().map(|r| self.value(r.v)).collect();
        let mu: Vec<f64> = rels.iter().map(|r| self.scalar(r.mu) * scale).collect();
        let e = &*edges;
        let per_target = self.exec.map(n_t, |t| {
            let (lo, hi) = (e.offsets[t], e.offsets[t + 1]);
            let deg = hi - lo;
            let mut alpha = vec![0.0; deg * heads];
            let mut out = vec![0.0; d];
            if deg == 0 {
                return (alpha, out);
            }
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                let mut max = f64::NEG_INFINITY;
                for j in 0..deg {
                    let (r, src) = (e.rel[lo + j], e.src[lo + j]);
                    let qr = q[r].row(t);
                    let kr = k[r].row(src);
                    let dot: f64 = cols.clone().map(|c| qr[c] * kr[c]).sum();
                    let logit = mu[r] * dot;
                    alpha[j * heads + h] = logit;
                    max = max.max(logit);
                }
                let mut z = 0.0;
                for j in 0..deg {
                    let a = (alpha[j * heads + h] - max).exp();
                    alpha[j * heads + h] = a;
                    z += a;
                }
                for j in 0..deg {
                    alpha[j * heads + h] /= z;
                    let a = alpha[j * heads + h];
                    let vr = v[e.rel[lo + j]].row(e.src[lo + j]);
                    for c in cols.clone() {
                        out[c] += a * vr[c];
                    }
                }
            }
            (alpha, out)
        });
        let mut value = Matrix::zeros((n_t, d));
        let mut alpha = Vec::with_capacity(e.num_edges() * heads);
        for (t, (a, row)) in per_target.into_iter().enumerate() {
            alpha.extend(a);
            value.row_mut(t).assign(&ndarray::ArrayView1::from(&row));
        }
        self.push(
            value,
            Op::Attention(Box::new(AttentionNode {
                rels: rels.to_vec(),
                edges,
                heads,
                alpha,
            })),
        )
    }

    /// Attention weights `(edge, head)` of an attention node, edge-major.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention(node) => Some(&node.alpha),
            _ => None,
        }
    }

    /// In-edge layout of an attention node.
    pub fn attention_edges(&self, v: Var) -> Option<&InEdges> {
        match &self.nodes[v.0].op {
            Op::Attention(node) => Some(&node.edges),
            _ => None,
        }
    }

    /// Every attention node on the tape, in recording order.
    pub fn attention_vars(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Attention(_)))
            .map(Var)
            .collect()
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::ones(self.value(loss).dim()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::AddBias(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, &g * self.value(*b));
                    accumulate(&mut grads, *b, &g * self.value(*a));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = Zip::from(&g).and(y).map_collect(|&g, &y| g * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Grl(a, lambda) => accumulate(&mut grads, *a, &g * -*lambda),
                Op::Dropout(a, mask) => accumulate(&mut grads, *a, &g * mask),
                Op::Rows(a, idx) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    for (k, &r) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(r);
                        row += &g.row(k);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Block(a, r0, c0) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    let (h, w) = g.dim();
                    ga.slice_mut(s![*r0..r0 + h, *c0..c0 + w]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::VStack(xs) => {
                    let mut r = 0;
                    for &x in xs {
                        let h = self.value(x).nrows();
                        accumulate(&mut grads, x, g.slice(s![r..r + h, ..]).to_owned());
                        r += h;
                    }
                }
                Op::SumSquaredDiff(a, target) => {
                    let c = 2.0 * g[[0, 0]];
                    let ga = Zip::from(self.value(*a))
                        .and(&**target)
                        .map_collect(|&x, &t| c * (x - t));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxXent(a, labels, probs) => {
                    let c = g[[0, 0]] / labels.len().max(1) as f64;
                    let mut ga = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        ga[[i, y]] -= 1.0;
                    }
                    ga *= c;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Bce(a, target, p) => {
                    let c = g[[0, 0]] / p.len().max(1) as f64;
                    let ga = p.mapv(|p| {
                        if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                            c * (p - target)
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Nuclear(a, polar) => accumulate(&mut grads, *a, polar * g[[0, 0]]),
                Op::LaplacianQuad(h, lap) => {
                    let gh = lap.apply(self.value(*h).view()) * (2.0 * g[[0, 0]]);
                    accumulate(&mut grads, *h, gh);
                }
                Op::Attention(node) => self.attention_backward(node, &g, &mut grads),
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            tape_params: self.params.clone(),
        }
    }

    fn attention_backward(&self, node: &AttentionNode, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let e = &*node.edges;
        let heads = node.heads;
        let d = g.ncols();
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let nrel = node.rels.len();
        let q: Vec<&Matrix> = node.rels.iter().map(|r| self.value(r.q)).collect();
        let k: Vec<&Matrix> = node.rels.iter().map(|r| self.value(r.k)).collect();
        let v: Vec<&Matrix> = node.rels.iter().map(|r| self.value(r.v)).collect();
        let mu: Vec<f64> = node.rels.iter().map(|r| self.scalar(r.mu)).collect();
        let alpha = &node.alpha;

        // Per target: d(logit) per (edge, head), query-gradient rows per
        // relation and the partial d(mu) per relation.
        struct TargetGrad {
            dlogit: Vec<f64>,
            dq: Vec<(usize, Vec<f64>)>,
            dmu: Vec<f64>,
        }
        let per_target = self.exec.map(e.num_targets(), |t| {
            let (lo, hi) = (e.offsets[t], e.offsets[t + 1]);
            let deg = hi - lo;
            let mut out = TargetGrad {
                dlogit: vec![0.0; deg * heads],
                dq: Vec::new(),
                dmu: vec![0.0; nrel],
            };
            if deg == 0 {
                return out;
            }
            let gt = g.row(t);
            let mut dq: Vec<Option<Vec<f64>>> = vec![None; nrel];
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                let mut dalpha = vec![0.0; deg];
                let mut weighted = 0.0;
                for j in 0..deg {
                    let vr = v[e.rel[lo + j]].row(e.src[lo + j]);
                    let da: f64 = cols.clone().map(|c| gt[c] * vr[c]).sum();
                    dalpha[j] = da;
                    weighted += alpha[(lo + j) * heads + h] * da;
                }
                for j in 0..deg {
                    let a = alpha[(lo + j) * heads + h];
                    let dl = a * (dalpha[j] - weighted);
                    out.dlogit[j * heads + h] = dl;
                    let (r, src) = (e.rel[lo + j], e.src[lo + j]);
                    let kr = k[r].row(src);
                    let qr = q[r].row(t);
                    let dot: f64 = cols.clone().map(|c| qr[c] * kr[c]).sum();
                    out.dmu[r] += dl * dot * scale;
                    let row = dq[r].get_or_insert_with(|| vec![0.0; d]);
                    let c0 = dl * mu[r] * scale;
                    for c in cols.clone() {
                        row[c] += c0 * kr[c];
                    }
                }
            }
            out.dq = dq
                .into_iter()
                .enumerate()
                .filter_map(|(r, row)| row.map(|row| (r, row)))
                .collect();
            out
        });

        let mut dq: Vec<Matrix> = q.iter().map(|m| Matrix::zeros(m.dim())).collect();
        let mut dk_m: Vec<Matrix> = k.iter().map(|m| Matrix::zeros(m.dim())).collect();
        let mut dv: Vec<Matrix> = v.iter().map(|m| Matrix::zeros(m.dim())).collect();
        let mut dmu = vec![0.0; nrel];
        for (t, tg) in per_target.iter().enumerate() {
            for (r, row) in &tg.dq {
                let mut dst = dq[*r].row_mut(t);
                dst += &ndarray::ArrayView1::from(row);
            }
            for r in 0..nrel {
                dmu[r] += tg.dmu[r];
            }
            let lo = e.offsets[t];
            let gt = g.row(t);
            for j in 0..e.degree(t) {
                let (r, src) = (e.rel[lo + j], e.src[lo + j]);
                let qr = q[r].row(t);
                for h in 0..heads {
                    let a = alpha[(lo + j) * heads + h];
                    let c0 = tg.dlogit[j * heads + h] * mu[r] * scale;
                    for c in h * dk..(h + 1) * dk {
                        dk_m[r][[src, c]] += c0 * qr[c];
                        dv[r][[src, c]] += a * gt[c];
                    }
                }
            }
        }
        for (r, inp) in node.rels.iter().enumerate() {
            accumulate(grads, inp.q, std::mem::take(&mut dq[r]));
            accumulate(grads, inp.k, std::mem::take(&mut dk_m[r]));
            accumulate(grads, inp.v, std::mem::take(&mut dv[r]));
            accumulate(grads, inp.mu, Matrix::from_elem((1, 1), dmu[r]));
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Gradients of one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    tape_params: HashMap<ParamId, Var>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of every parameter that was placed on the tape, ordered by id.
    /// Parameters the loss does not depend on get a zero gradient.
    pub fn params(&self, tape: &Tape) -> Vec<(ParamId, Matrix)> {
        let mut out: Vec<(ParamId, Matrix)> = self
            .tape_params
            .iter()
            .map(|(&id, &v)| {
                let g = self
                    .wrt(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(tape.value(v).dim()));
                (id, g)
            })
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
