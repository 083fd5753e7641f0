//! Type-aware graph transformer used as the shared feature extractor, plus
//! the topological domain discriminator.
//!
//! Each layer lets every node attend over its typed in-neighbours. Every
//! relation contributes a forward and a reverse direction, each with its own
//! query/key/value projections and a scalar priority. The softmax runs
//! jointly over all in-edges of a node. The aggregated message goes through a
//! per-type output projection and `tanh`, then is added to the node's input.
//! A node without in-edges keeps its input unchanged.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::align::{domain_adversarial_loss, Discriminator};
use crate::autograd::{AttnInputs, InEdges, Tape, Var};
use crate::error::{Error, Result};
use crate::hin::{Domain, HeteroGraph, TypeSchema};
use crate::linalg::Matrix;
use crate::params::{glorot, ParamId, ParamStore};

pub type TopoDiscriminator = Discriminator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgtConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
}

impl Default for HgtConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            num_heads: 4,
            hidden_dim: 64,
            dropout: 0.1,
        }
    }
}

impl HgtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.hidden_dim == 0 || self.hidden_dim % self.num_heads != 0 {
            return Err(Error::config(format!(
                "hidden_dim {} must be a positive multiple of num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-node embeddings of one graph, keyed by node type name.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub domain: Domain,
    pub by_type: BTreeMap<String, Matrix>,
}

#[derive(Debug, Clone)]
struct DirRelation {
    key: String,
    src_type: usize,
}

#[derive(Debug, Clone)]
struct TargetPlan {
    type_idx: usize,
    rels: Vec<DirRelation>,
    edges: Arc<InEdges>,
}

#[derive(Debug, Clone)]
struct TypeSlot {
    name: String,
    key: String,
    count: usize,
}

/// A graph's message-passing plan with type and relation names resolved to
/// parameter keys. Built once per graph and reused every step.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub domain: Domain,
    types: Vec<TypeSlot>,
    targets: Vec<TargetPlan>,
}

impl GraphView {
    /// Keys are the graph's own type and relation names.
    pub fn identity(graph: &HeteroGraph) -> Self {
        Self::new(graph, |t| Some(t.to_owned()), |r| Some(r.to_owned()))
            .expect("identity keys always resolve")
    }

    /// Keys come from the schema's pairings, so both domains share tables.
    pub fn for_schema(graph: &HeteroGraph, schema: &TypeSchema) -> Result<Self> {
        let d = graph.domain;
        Self::new(
            graph,
            |t| schema.type_key(d, t),
            |r| schema.relation_key(d, r),
        )
    }

    pub fn new(
        graph: &HeteroGraph,
        type_key: impl Fn(&str) -> Option<String>,
        rel_key: impl Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let types: Vec<TypeSlot> = graph
            .node_counts
            .iter()
            .map(|(name, &count)| {
                type_key(name)
                    .map(|key| TypeSlot {
                        name: name.clone(),
                        key,
                        count,
                    })
                    .ok_or_else(|| Error::Schema(format!("no parameter key for type {name}")))
            })
            .collect::<Result<_>>()?;
        let idx = |name: &str| types.iter().position(|t| t.name == name);

        let mut incoming: Vec<Vec<(DirRelation, Vec<(usize, usize)>)>> =
            vec![Vec::new(); types.len()];
        for (name, rel) in &graph.edges {
            let key = rel_key(name)
                .ok_or_else(|| Error::Schema(format!("no parameter key for relation {name}")))?;
            let (s, d) = match (idx(&rel.src_type), idx(&rel.dst_type)) {
                (Some(s), Some(d)) => (s, d),
                _ => {
                    return Err(Error::Schema(format!(
                        "relation {name} has unknown endpoint types"
                    )))
                }
            };
            incoming[d].push((
                DirRelation {
                    key: format!("{key}.fwd"),
                    src_type: s,
                },
                rel.pairs.clone(),
            ));
            incoming[s].push((
                DirRelation {
                    key: format!("{key}.rev"),
                    src_type: d,
                },
                rel.pairs.iter().map(|&(a, b)| (b, a)).collect(),
            ));
        }
        let targets = incoming
            .into_iter()
            .enumerate()
            .filter(|(_, rels)| !rels.is_empty())
            .map(|(t, rels)| {
                let lists: Vec<&[(usize, usize)]> =
                    rels.iter().map(|(_, e)| e.as_slice()).collect();
                let edges = Arc::new(InEdges::build(types[t].count, &lists));
                TargetPlan {
                    type_idx: t,
                    rels: rels.into_iter().map(|(r, _)| r).collect(),
                    edges,
                }
            })
            .collect();
        Ok(Self {
            domain: graph.domain,
            types,
            targets,
        })
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(|t| t.name.as_str())
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    fn type_keys(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(|t| t.key.as_str())
    }

    fn relation_keys(&self) -> impl Iterator<Item = &str> {
        self.targets
            .iter()
            .flat_map(|p| p.rels.iter().map(|r| r.key.as_str()))
    }
}

#[derive(Debug, Clone)]
struct RelParams {
    q: ParamId,
    k: ParamId,
    v: ParamId,
    mu: ParamId,
}

/// Parameters of one attention layer, keyed by type / directed-relation key.
#[derive(Debug, Clone, Default)]
pub struct HgtLayer {
    index: usize,
    out: BTreeMap<String, ParamId>,
    rels: BTreeMap<String, RelParams>,
}

impl HgtLayer {
    pub fn new(index: usize) -> Self {
        Self {
            index,
            ..Self::default()
        }
    }

    /// Ensures parameters exist for every key `view` uses.
    pub fn register<R: Rng + ?Sized>(
        &mut self,
        store: &mut ParamStore,
        rng: &mut R,
        view: &GraphView,
        dim: usize,
    ) {
        let l = self.index;
        for key in view.type_keys() {
            if !self.out.contains_key(key) {
                let id = store.get_or_insert_with(
                    &format!("hgt.{l}.type.{key}.out"),
                    (dim, dim),
                    || glorot(rng, dim, dim),
                );
                self.out.insert(key.to_owned(), id);
            }
        }
        for key in view.relation_keys() {
            if !self.rels.contains_key(key) {
                let mut w = |p: &str| {
                    store.get_or_insert_with(&format!("hgt.{l}.rel.{key}.{p}"), (dim, dim), || {
                        glorot(rng, dim, dim)
                    })
                };
                let (q, k, v) = (w("q"), w("k"), w("v"));
                let mu = store.get_or_insert_with(&format!("hgt.{l}.rel.{key}.mu"), (1, 1), || {
                    Matrix::ones((1, 1))
                });
                self.rels.insert(key.to_owned(), RelParams { q, k, v, mu });
            }
        }
    }

    /// One layer on a tape. `inputs` holds one `n × d` node per type slot of
    /// `view`. Dropout on messages is applied only when `rng` is given.
    pub fn forward_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        view: &GraphView,
        inputs: &[Var],
        heads: usize,
        dropout: f64,
        mut rng: Option<&mut R>,
    ) -> Result<Vec<Var>> {
        if inputs.len() != view.num_types() {
            return Err(Error::contract(format!(
                "{} input embeddings for {} node types",
                inputs.len(),
                view.num_types()
            )));
        }
        let mut outputs = inputs.to_vec();
        for plan in &view.targets {
            let t = plan.type_idx;
            let slot = &view.types[t];
            let out_w = *self.out.get(&slot.key).ok_or_else(|| {
                Error::config(format!(
                    "layer {} has no table for type {}",
                    self.index, slot.key
                ))
            })?;
            let mut rels = Vec::with_capacity(plan.rels.len());
            for r in &plan.rels {
                let p = self.rels.get(&r.key).ok_or_else(|| {
                    Error::config(format!(
                        "layer {} has no table for relation {}",
                        self.index, r.key
                    ))
                })?;
                let (wq, wk, wv, mu) = (
                    tape.param(store, p.q),
                    tape.param(store, p.k),
                    tape.param(store, p.v),
                    tape.param(store, p.mu),
                );
                let q = tape.matmul(inputs[t], wq);
                let k = tape.matmul(inputs[r.src_type], wk);
                let v = tape.matmul(inputs[r.src_type], wv);
                rels.push(AttnInputs { q, k, v, mu });
            }
            let agg = tape.edge_attention(&rels, plan.edges.clone(), heads);
            let agg = match rng.as_deref_mut() {
                Some(rng) => tape.dropout(agg, dropout, rng),
                None => agg,
            };
            let w = tape.param(store, out_w);
            let msg = tape.matmul(agg, w);
            let msg = tape.tanh(msg);
            outputs[t] = tape.add(inputs[t], msg);
        }
        Ok(outputs)
    }
}

/// The stacked extractor `G`; its tables are shared by both domains.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub config: HgtConfig,
    layers: Vec<HgtLayer>,
}

impl Extractor {
    pub fn new(config: HgtConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            layers: (0..config.num_layers).map(HgtLayer::new).collect(),
        })
    }

    pub fn layers(&self) -> &[HgtLayer] {
        &self.layers
    }

    pub fn register<R: Rng + ?Sized>(
        &mut self,
        store: &mut ParamStore,
        rng: &mut R,
        view: &GraphView,
    ) {
        let d = self.config.hidden_dim;
        for layer in &mut self.layers {
            layer.register(store, rng, view, d);
        }
    }

    pub fn forward_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        view: &GraphView,
        inputs: &[Var],
        mut rng: Option<&mut R>,
    ) -> Result<Vec<Var>> {
        let mut h = inputs.to_vec();
        for layer in &self.layers {
            h = layer.forward_on_tape(
                tape,
                store,
                view,
                &h,
                self.config.num_heads,
                self.config.dropout,
                rng.as_deref_mut(),
            )?;
        }
        Ok(h)
    }
}

fn embeddings_to_vars(
    tape: &mut Tape,
    view: &GraphView,
    inputs: &NodeEmbeddings,
) -> Result<Vec<Var>> {
    view.types
        .iter()
        .map(|slot| {
            let m = inputs.by_type.get(&slot.name).ok_or_else(|| {
                Error::contract(format!("no input embeddings for type {}", slot.name))
            })?;
            if m.nrows() != slot.count {
                return Err(Error::contract(format!(
                    "type {}: {} embedding rows for {} nodes",
                    slot.name,
                    m.nrows(),
                    slot.count
                )));
            }
            Ok(tape.constant(m.clone()))
        })
        .collect()
}

fn vars_to_embeddings(tape: &Tape, view: &GraphView, vars: &[Var]) -> NodeEmbeddings {
    NodeEmbeddings {
        domain: view.domain,
        by_type: view
            .types
            .iter()
            .zip(vars)
            .map(|(slot, &v)| (slot.name.clone(), tape.value(v).clone()))
            .collect(),
    }
}

/// One layer in inference mode (no dropout).
pub fn hgt_layer_forward(
    view: &GraphView,
    inputs: &NodeEmbeddings,
    layer: &HgtLayer,
    store: &ParamStore,
    heads: usize,
) -> Result<NodeEmbeddings> {
    let mut tape = Tape::new();
    let vars = embeddings_to_vars(&mut tape, view, inputs)?;
    let out = layer.forward_on_tape::<rand_chacha::ChaCha8Rng>(
        &mut tape, store, view, &vars, heads, 0.0, None,
    )?;
    Ok(vars_to_embeddings(&tape, view, &out))
}

/// All layers in inference mode.
pub fn extract(
    view: &GraphView,
    initial: &NodeEmbeddings,
    extractor: &Extractor,
    store: &ParamStore,
) -> Result<NodeEmbeddings> {
    let mut tape = Tape::new();
    let vars = embeddings_to_vars(&mut tape, view, initial)?;
    let out = extractor
        .forward_on_tape::<rand_chacha::ChaCha8Rng>(&mut tape, store, view, &vars, None)?;
    Ok(vars_to_embeddings(&tape, view, &out))
}

/// Topological alignment loss for fixed embeddings of the classified type.
pub fn topo_da_loss(
    store: &ParamStore,
    h_source: &Matrix,
    h_target: &Matrix,
    disc: &TopoDiscriminator,
) -> Result<f64> {
    let mut t = Tape::new();
    let s = t.constant(h_source.clone());
    let g = t.constant(h_target.clone());
    let l = domain_adversarial_loss(&mut t, store, disc, s, g, 1.0)?;
    Ok(t.scalar(l))
}
