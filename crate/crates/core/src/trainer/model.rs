use std::sync::Arc;

use rand::Rng;

use crate::align::{domain_adversarial_loss, pooled_mse, Discriminator, TypeAutoencoder};
use crate::autograd::{softmax_rows, Tape, Var};
use crate::completion::{assemble_block_matrix, completion_loss_var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::extractor::{Extractor, GraphView, NodeEmbeddings};
use crate::hin::{
    build_private_laplacian, Domain, DomainPair, LaplacianBlock, TypeKind, TypeSchema,
};
use crate::linalg::Matrix;
use crate::params::{glorot, ParamId, ParamStore};

use super::config::TrainConfig;
use super::pseudo::PseudoLabelSet;

/// Scalar loss terms of one step. `cls` includes the Laplacian penalty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub cls: f64,
    pub recon1: f64,
    pub recon2: f64,
    pub nda1: f64,
    pub nda2: f64,
    pub da: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

/// `cls + α·recon1 + β·nda1 + γ·da`.
pub fn phase1_loss(c: &LossComponents, config: &TrainConfig) -> f64 {
    c.cls + config.alpha * c.recon1 + config.beta * c.nda1 + config.gamma * c.da
}

/// `cls + α·(recon1 + recon2) + β·(nda1 + nda2) + γ·da`.
pub fn phase2_loss(c: &LossComponents, config: &TrainConfig) -> f64 {
    c.cls
        + config.alpha * (c.recon1 + c.recon2)
        + config.beta * (c.nda1 + c.nda2)
        + config.gamma * c.da
}

pub fn phase_loss(phase: Phase, c: &LossComponents, config: &TrainConfig) -> f64 {
    match phase {
        Phase::One => phase1_loss(c, config),
        Phase::Two => phase2_loss(c, config),
    }
}

/// Mean softmax cross-entropy over the labelled rows plus `ζ·Σ tr(HᵀLH)` over
/// the private blocks.
pub fn classifier_loss(
    logits: &Matrix,
    labels: &[usize],
    private: &[(&Matrix, &LaplacianBlock)],
    zeta: f64,
) -> Result<f64> {
    if labels.is_empty() || labels.len() != logits.nrows() {
        return Err(Error::contract(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.nrows()
        )));
    }
    let c = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::contract(format!("label {bad} outside 0..{c}")));
    }
    let p = softmax_rows(logits);
    let ce = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p[[i, y]].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / labels.len() as f64;
    let mut lap = 0.0;
    for (h, l) in private {
        lap += l.quadratic(h.view())?;
    }
    Ok(ce + zeta * lap)
}

#[derive(Debug, Clone)]
struct SharedPath {
    ae: TypeAutoencoder,
    disc: Discriminator,
}

#[derive(Debug, Clone)]
struct PrivatePath {
    ae: TypeAutoencoder,
    disc: Discriminator,
    w_hat: ParamId,
    x_source: Arc<Matrix>,
    x_target: Arc<Matrix>,
    laplacian: Arc<LaplacianBlock>,
}

#[derive(Debug, Clone)]
enum Input {
    Shared {
        pair: usize,
        x: Arc<Matrix>,
    },
    Private {
        pair: usize,
        row0: usize,
        rows: usize,
    },
}

#[derive(Debug, Clone)]
struct DomainData {
    view: GraphView,
    inputs: Vec<Input>,
    class_slot: usize,
}

/// Every learnable parameter plus the data plan of the pair it was built on.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: TrainConfig,
    pub schema: TypeSchema,
    pub store: ParamStore,
    pub exec: Exec,
    shared: Vec<SharedPath>,
    private: Vec<PrivatePath>,
    extractor: Extractor,
    topo: Discriminator,
    cls_w: ParamId,
    cls_b: ParamId,
    data: [DomainData; 2],
    source_labels: Vec<usize>,
}

struct DomainPass {
    hidden: Vec<Var>,
    recon: Vec<Option<(Var, Arc<Matrix>)>>,
    out: Vec<Var>,
}

/// Tape nodes of one full forward pass.
pub struct ForwardVars {
    pub total: Var,
    pub cls: Var,
    pub recon1: Var,
    pub recon2: Var,
    pub nda1: Var,
    pub nda2: Var,
    pub da: Var,
}

impl ForwardVars {
    pub fn components(&self, tape: &Tape) -> LossComponents {
        LossComponents {
            cls: tape.scalar(self.cls),
            recon1: tape.scalar(self.recon1),
            recon2: tape.scalar(self.recon2),
            nda1: tape.scalar(self.nda1),
            nda2: tape.scalar(self.nda2),
            da: tape.scalar(self.da),
        }
    }
}

fn domain_index(d: Domain) -> usize {
    match d {
        Domain::Source => 0,
        Domain::Target => 1,
    }
}

impl Model {
    /// Builds every module `pair` needs. Parameters are registered in a fixed
    /// order, so the same `rng` state yields the same initialisation.
    pub fn build<R: Rng + ?Sized>(
        pair: &DomainPair,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        pair.validate()?;
        let schema = pair.schema.clone();
        let d_h = config.hgt.hidden_dim;
        let mut store = ParamStore::new();

        let shared: Vec<SharedPath> = schema
            .shared_pairs
            .iter()
            .map(|p| {
                let key = p.key();
                let d_in = pair.source.feature_dim(&p.source);
                SharedPath {
                    ae: TypeAutoencoder::new(&mut store, rng, &format!("ae.{key}"), d_in, d_h),
                    disc: Discriminator::new(
                        &mut store,
                        rng,
                        &format!("disc.{key}"),
                        d_h,
                        config.disc_hidden,
                    ),
                }
            })
            .collect();

        let mut extractor = Extractor::new(config.hgt)?;
        let views = [
            GraphView::for_schema(&pair.source, &schema)?,
            GraphView::for_schema(&pair.target, &schema)?,
        ];
        for v in &views {
            extractor.register(&mut store, rng, v);
        }
        let topo = Discriminator::new(&mut store, rng, "topo", d_h, config.disc_hidden);
        let c = schema.num_classes;
        let cls_w = store.get_or_insert_with("cls.w", (d_h, c), || glorot(rng, d_h, c));
        let cls_b = store.get_or_insert_with("cls.b", (1, c), || Matrix::zeros((1, c)));

        let mut private = Vec::with_capacity(schema.private_pairs.len());
        for (k, p) in schema.private_pairs.iter().enumerate() {
            let key = p.key();
            let xs = &pair.source.features[&p.source];
            let xt = &pair.target.features[&p.target];
            let block = assemble_block_matrix(xs, xt, config.delta, config.init_std, rng)?;
            let d_in = block.shape().1;
            let w_hat = store.insert(
                &format!("completion.{key}.w_hat"),
                block.recovered_features().clone(),
            );
            private.push(PrivatePath {
                ae: TypeAutoencoder::new(&mut store, rng, &format!("ae.{key}"), d_in, d_h),
                disc: Discriminator::new(
                    &mut store,
                    rng,
                    &format!("disc.{key}"),
                    d_h,
                    config.disc_hidden,
                ),
                w_hat,
                x_source: block.x_source().clone(),
                x_target: block.x_target().clone(),
                laplacian: Arc::new(build_private_laplacian(pair, k)?),
            });
        }

        let [vs, vt] = views;
        let data = [
            Self::plan(pair, &schema, Domain::Source, vs, &private)?,
            Self::plan(pair, &schema, Domain::Target, vt, &private)?,
        ];
        let source_labels = pair.source.labels.clone().expect("validated");
        Ok(Self {
            config: config.clone(),
            schema,
            store,
            exec: Exec::default(),
            shared,
            private,
            extractor,
            topo,
            cls_w,
            cls_b,
            data,
            source_labels,
        })
    }

    fn plan(
        pair: &DomainPair,
        schema: &TypeSchema,
        domain: Domain,
        view: GraphView,
        private: &[PrivatePath],
    ) -> Result<DomainData> {
        let g = pair.graph(domain);
        let inputs = view
            .type_names()
            .map(|ty| match schema.kind_of(domain, ty) {
                Some(TypeKind::Shared(i)) => Ok(Input::Shared {
                    pair: i,
                    x: Arc::new(g.features[ty].clone()),
                }),
                Some(TypeKind::Private(j)) => {
                    let ns = private[j].x_source.nrows();
                    let (row0, rows) = match domain {
                        Domain::Source => (0, ns),
                        Domain::Target => (ns, private[j].x_target.nrows()),
                    };
                    Ok(Input::Private {
                        pair: j,
                        row0,
                        rows,
                    })
                }
                None => Err(Error::Schema(format!("{domain} type {ty} is not paired"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let class_ty = schema.class_type(domain)?;
        let class_slot = view
            .type_index(class_ty)
            .ok_or_else(|| Error::Schema(format!("{domain} graph lacks class type {class_ty}")))?;
        Ok(DomainData {
            view,
            inputs,
            class_slot,
        })
    }

    pub fn num_private_pairs(&self) -> usize {
        self.private.len()
    }

    pub fn source_labels(&self) -> &[usize] {
        &self.source_labels
    }

    /// Ids of the completion matrices `Ŵ`.
    pub fn completion_params(&self) -> Vec<ParamId> {
        self.private.iter().map(|p| p.w_hat).collect()
    }

    fn domain_pass<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        domain: Domain,
        with_recon: bool,
        rng: Option<&mut R>,
    ) -> Result<DomainPass> {
        let data = &self.data[domain_index(domain)];
        let mut hidden = Vec::with_capacity(data.inputs.len());
        let mut recon = Vec::with_capacity(data.inputs.len());
        for input in &data.inputs {
            let (ae, x, target) = match input {
                Input::Shared { pair, x } => {
                    let v = tape.constant((**x).clone());
                    (&self.shared[*pair].ae, v, Some(x.clone()))
                }
                Input::Private { pair, row0, rows } => {
                    let p = &self.private[*pair];
                    let w = tape.param(&self.store, p.w_hat);
                    let cols = self.store.value(p.w_hat).ncols();
                    let v = tape.block(w, *row0, 0, (*rows, cols));
                    (&p.ae, v, None)
                }
            };
            let h = ae.encode(tape, &self.store, x);
            recon.push(if with_recon {
                let decoded = ae.decode(tape, &self.store, h);
                Some(match target {
                    Some(t) => (decoded, t),
                    // the reconstruction target is a parameter, so compare by difference
                    None => {
                        let diff = tape.sub(decoded, x);
                        let zeros = Arc::new(Matrix::zeros(tape.value(diff).dim()));
                        (diff, zeros)
                    }
                })
            } else {
                None
            });
            hidden.push(h);
        }
        let out = self
            .extractor
            .forward_on_tape(tape, &self.store, &data.view, &hidden, rng)?;
        Ok(DomainPass { hidden, recon, out })
    }

    fn classify(&self, tape: &mut Tape, h: Var) -> Var {
        let w = tape.param(&self.store, self.cls_w);
        let b = tape.param(&self.store, self.cls_b);
        let z = tape.matmul(h, w);
        tape.add_bias(z, b)
    }

    fn slot_of_pair(&self, domain: Domain, private: bool, k: usize) -> Option<usize> {
        self.data[domain_index(domain)]
            .inputs
            .iter()
            .position(|i| match (i, private) {
                (Input::Shared { pair, .. }, false) => *pair == k,
                (Input::Private { pair, .. }, true) => *pair == k,
                _ => false,
            })
    }

    /// Records the full objective of `phase` on `tape`. Dropout is active only
    /// when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        phase: Phase,
        pseudo: &PseudoLabelSet,
        lambda: f64,
        mut rng: Option<&mut R>,
    ) -> Result<ForwardVars> {
        let cfg = self.config.effective();
        let s = self.domain_pass(tape, Domain::Source, true, rng.as_deref_mut())?;
        let t = self.domain_pass(tape, Domain::Target, true, rng.as_deref_mut())?;

        // Classification on source labels plus pseudo-labelled target nodes.
        let (cs, ct) = (self.data[0].class_slot, self.data[1].class_slot);
        let logits_s = self.classify(tape, s.out[cs]);
        let mut labels = self.source_labels.clone();
        let logits = if pseudo.is_empty() {
            logits_s
        } else {
            let nodes = pseudo.nodes();
            let ht = tape.rows(t.out[ct], &nodes);
            let logits_t = self.classify(tape, ht);
            labels.extend(pseudo.classes());
            tape.vstack(&[logits_s, logits_t])
        };
        let mut cls = tape.softmax_cross_entropy(logits, &labels);

        let mut recon1 = Vec::new();
        let mut nda1 = Vec::new();
        for k in 0..self.shared.len() {
            let (Some(i), Some(j)) = (
                self.slot_of_pair(Domain::Source, false, k),
                self.slot_of_pair(Domain::Target, false, k),
            ) else {
                continue;
            };
            let parts = [s.recon[i].clone().unwrap(), t.recon[j].clone().unwrap()];
            recon1.push(pooled_mse(tape, &parts));
            nda1.push(domain_adversarial_loss(
                tape,
                &self.store,
                &self.shared[k].disc,
                s.hidden[i],
                t.hidden[j],
                lambda,
            )?);
        }

        let mut recon2 = Vec::new();
        let mut nda2 = Vec::new();
        let mut lap = Vec::new();
        for (k, p) in self.private.iter().enumerate() {
            let i = self
                .slot_of_pair(Domain::Source, true, k)
                .expect("private type in source view");
            let j = self
                .slot_of_pair(Domain::Target, true, k)
                .expect("private type in target view");
            let w = tape.param(&self.store, p.w_hat);
            let completion = completion_loss_var(tape, w, &p.x_source, &p.x_target, cfg.delta);
            let parts = [s.recon[i].clone().unwrap(), t.recon[j].clone().unwrap()];
            let ae = pooled_mse(tape, &parts);
            recon2.push(tape.add(completion, ae));
            nda2.push(domain_adversarial_loss(
                tape,
                &self.store,
                &p.disc,
                s.hidden[i],
                t.hidden[j],
                lambda,
            )?);
            let h = tape.vstack(&[s.hidden[i], t.hidden[j]]);
            lap.push(tape.laplacian_quadratic(h, p.laplacian.clone()));
        }
        if !lap.is_empty() && cfg.zeta > 0.0 {
            let l = tape.sum(&lap);
            let l = tape.scale(l, cfg.zeta);
            cls = tape.add(cls, l);
        }

        let (hs, ht) = if self.config.topo_all_types {
            (tape.vstack(&s.out), tape.vstack(&t.out))
        } else {
            (s.out[cs], t.out[ct])
        };
        let da = domain_adversarial_loss(tape, &self.store, &self.topo, hs, ht, lambda)?;

        let recon1 = tape.sum(&recon1);
        let recon2 = tape.sum(&recon2);
        let nda1 = tape.sum(&nda1);
        let nda2 = tape.sum(&nda2);
        let (recon, nda) = match phase {
            Phase::One => (recon1, nda1),
            Phase::Two => (tape.add(recon1, recon2), tape.add(nda1, nda2)),
        };
        let mut terms = vec![cls];
        for (w, v) in [(cfg.alpha, recon), (cfg.beta, nda), (cfg.gamma, da)] {
            if w != 0.0 {
                terms.push(tape.scale(v, w));
            }
        }
        let total = tape.sum(&terms);
        Ok(ForwardVars {
            total,
            cls,
            recon1,
            recon2,
            nda1,
            nda2,
            da,
        })
    }

    /// Extractor outputs of every node type in `domain`, inference mode.
    pub fn embeddings(&self, domain: Domain) -> Result<NodeEmbeddings> {
        let mut tape = Tape::with_exec(self.exec);
        let pass = self.domain_pass::<rand_chacha::ChaCha8Rng>(&mut tape, domain, false, None)?;
        let data = &self.data[domain_index(domain)];
        Ok(NodeEmbeddings {
            domain,
            by_type: data
                .view
                .type_names()
                .zip(&pass.out)
                .map(|(ty, &v)| (ty.to_owned(), tape.value(v).clone()))
                .collect(),
        })
    }

    /// Embeddings of the classified node type in `domain`.
    pub fn class_embeddings(&self, domain: Domain) -> Result<Matrix> {
        let ty = self.schema.class_type(domain)?.to_owned();
        Ok(self
            .embeddings(domain)?
            .by_type
            .remove(&ty)
            .expect("class type present"))
    }

    /// Class probabilities of the classified nodes in `domain`.
    pub fn predict_proba(&self, domain: Domain) -> Result<Matrix> {
        let h = self.class_embeddings(domain)?;
        let z = h.dot(self.store.value(self.cls_w)) + self.store.value(self.cls_b);
        Ok(softmax_rows(&z))
    }

    pub fn predict(&self, domain: Domain) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(domain)?))
    }
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (j, &v)| if v > b.1 { (j, v) } else { b },
                )
                .0
        })
        .collect()
}

/// Fraction of `predicted` equal to `labels`.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}
