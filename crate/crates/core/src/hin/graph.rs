use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relations are named `SRC-DST` after their endpoint node types.
pub fn parse_relation_name(name: &str) -> Option<(&str, &str)> {
    let (a, b) = name.split_once('-')?;
    if a.is_empty() || b.is_empty() || b.contains('-') {
        return None;
    }
    Some((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub src_type: String,
    pub dst_type: String,
    /// `(src_index, dst_index)`, local to each endpoint type.
    pub pairs: Vec<(usize, usize)>,
}

/// One domain's typed multigraph.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub domain: Domain,
    pub node_counts: BTreeMap<String, usize>,
    pub features: BTreeMap<String, Matrix>,
    pub edges: BTreeMap<String, Relation>,
    /// Class ids of the labelled node type, indexed by node.
    pub labels: Option<Vec<usize>>,
}

impl HeteroGraph {
    pub fn new(domain: Domain) -> Self {
        Self {
            domain,
            node_counts: BTreeMap::new(),
            features: BTreeMap::new(),
            edges: BTreeMap::new(),
            labels: None,
        }
    }

    pub fn add_node_type(&mut self, name: &str, features: Matrix) {
        self.node_counts.insert(name.to_owned(), features.nrows());
        self.features.insert(name.to_owned(), features);
    }

    pub fn add_relation(&mut self, name: &str, pairs: Vec<(usize, usize)>) -> Result<()> {
        let (s, d) = parse_relation_name(name)
            .ok_or_else(|| Error::Schema(format!("relation name `{name}` is not SRC-DST")))?;
        self.edges.insert(
            name.to_owned(),
            Relation {
                src_type: s.to_owned(),
                dst_type: d.to_owned(),
                pairs,
            },
        );
        Ok(())
    }

    pub fn count(&self, ty: &str) -> usize {
        self.node_counts.get(ty).copied().unwrap_or(0)
    }

    pub fn feature_dim(&self, ty: &str) -> usize {
        self.features.get(ty).map_or(0, |m| m.ncols())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.values().map(|r| r.pairs.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (ty, &n) in &self.node_counts {
            let rows = self.features.get(ty).map(|m| m.nrows());
            if rows != Some(n) {
                return Err(Error::Validation(format!(
                    "{} type {ty}: {n} nodes but feature rows {rows:?}",
                    self.domain
                )));
            }
            if let Some(m) = self.features.get(ty) {
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "{} type {ty}: non-finite feature value",
                        self.domain
                    )));
                }
            }
        }
        for (name, rel) in &self.edges {
            let ns = self.node_counts.get(&rel.src_type).ok_or_else(|| {
                Error::Schema(format!(
                    "{}: relation {name} uses unknown type {}",
                    self.domain, rel.src_type
                ))
            })?;
            let nd = self.node_counts.get(&rel.dst_type).ok_or_else(|| {
                Error::Schema(format!(
                    "{}: relation {name} uses unknown type {}",
                    self.domain, rel.dst_type
                ))
            })?;
            if let Some(&(s, d)) = rel.pairs.iter().find(|&&(s, d)| s >= *ns || d >= *nd) {
                return Err(Error::Validation(format!(
                    "{} relation {name}: edge ({s}, {d}) out of range ({} has {ns}, {} has {nd})",
                    self.domain, rel.src_type, rel.dst_type
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypePair {
    pub source: String,
    pub target: String,
}

impl TypePair {
    pub fn new(source: &str, target: &str) -> Self {
        Self {
            source: source.to_owned(),
            target: target.to_owned(),
        }
    }

    pub fn name(&self, domain: Domain) -> &str {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    /// Domain-independent key used for parameter tables.
    pub fn key(&self) -> String {
        format!("{}~{}", self.source, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Shared(usize),
    Private(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeSchema {
    pub shared_pairs: Vec<TypePair>,
    pub private_pairs: Vec<TypePair>,
    pub relation_pairs: Vec<TypePair>,
    /// Name of the labelled node type in the source graph.
    pub target_class_type: String,
    pub num_classes: usize,
}

impl TypeSchema {
    pub fn kind_of(&self, domain: Domain, ty: &str) -> Option<TypeKind> {
        if let Some(i) = self.shared_pairs.iter().position(|p| p.name(domain) == ty) {
            return Some(TypeKind::Shared(i));
        }
        self.private_pairs
            .iter()
            .position(|p| p.name(domain) == ty)
            .map(TypeKind::Private)
    }

    pub fn type_pair(&self, kind: TypeKind) -> &TypePair {
        match kind {
            TypeKind::Shared(i) => &self.shared_pairs[i],
            TypeKind::Private(i) => &self.private_pairs[i],
        }
    }

    /// Parameter key of a node type name in `domain`.
    pub fn type_key(&self, domain: Domain, ty: &str) -> Option<String> {
        self.kind_of(domain, ty).map(|k| self.type_pair(k).key())
    }

    pub fn relation_key(&self, domain: Domain, rel: &str) -> Option<String> {
        self.relation_pairs
            .iter()
            .find(|p| p.name(domain) == rel)
            .map(TypePair::key)
    }

    /// Labelled type name in `domain`.
    pub fn class_type(&self, domain: Domain) -> Result<&str> {
        match self.kind_of(Domain::Source, &self.target_class_type) {
            Some(k) => Ok(self.type_pair(k).name(domain)),
            None => Err(Error::Schema(format!(
                "target_type {} is not a paired type",
                self.target_class_type
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shared_pairs.is_empty() {
            return Err(Error::Schema(
                "at least one shared type pair is required".into(),
            ));
        }
        if self.num_classes == 0 {
            return Err(Error::Schema("classes must be positive".into()));
        }
        for domain in [Domain::Source, Domain::Target] {
            let mut seen = BTreeSet::new();
            for p in self.shared_pairs.iter().chain(&self.private_pairs) {
                let n = p.name(domain);
                if n.contains('-') || n.contains('~') || n.is_empty() {
                    return Err(Error::Schema(format!("invalid type name `{n}`")));
                }
                if !seen.insert(n) {
                    return Err(Error::Schema(format!(
                        "{domain} type {n} appears in more than one pair"
                    )));
                }
            }
            for r in &self.relation_pairs {
                let name = r.name(domain);
                let (a, b) = parse_relation_name(name).ok_or_else(|| {
                    Error::Schema(format!("relation name `{name}` is not SRC-DST"))
                })?;
                if !seen.contains(a) || !seen.contains(b) {
                    return Err(Error::Schema(format!(
                        "{domain} relation {name} has an unpaired endpoint"
                    )));
                }
            }
        }
        // Paired relations must connect paired endpoints.
        for r in &self.relation_pairs {
            let (sa, sb) = parse_relation_name(&r.source).expect("checked");
            let (ta, tb) = parse_relation_name(&r.target).expect("checked");
            let ka = self.kind_of(Domain::Source, sa);
            let kb = self.kind_of(Domain::Source, sb);
            if ka != self.kind_of(Domain::Target, ta) || kb != self.kind_of(Domain::Target, tb) {
                return Err(Error::Schema(format!(
                    "relation pair {} / {} connects inconsistently paired types",
                    r.source, r.target
                )));
            }
        }
        self.class_type(Domain::Source)?;
        Ok(())
    }
}

/// Source/target graphs plus their type pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: HeteroGraph,
    pub target: HeteroGraph,
    pub schema: TypeSchema,
}

impl DomainPair {
    pub fn graph(&self, domain: Domain) -> &HeteroGraph {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.source.domain != Domain::Source || self.target.domain != Domain::Target {
            return Err(Error::Validation("domain tags are swapped".into()));
        }
        for domain in [Domain::Source, Domain::Target] {
            let g = self.graph(domain);
            g.validate()?;
            for p in self
                .schema
                .shared_pairs
                .iter()
                .chain(&self.schema.private_pairs)
            {
                if !g.node_counts.contains_key(p.name(domain)) {
                    return Err(Error::Schema(format!(
                        "{domain} graph has no node type {}",
                        p.name(domain)
                    )));
                }
            }
            for name in g.edges.keys() {
                if !self
                    .schema
                    .relation_pairs
                    .iter()
                    .any(|r| r.name(domain) == name)
                {
                    return Err(Error::Schema(format!(
                        "{domain} relation {name} is not listed in the schema"
                    )));
                }
            }
            for r in &self.schema.relation_pairs {
                if !g.edges.contains_key(r.name(domain)) {
                    return Err(Error::Schema(format!(
                        "{domain} graph has no relation {}",
                        r.name(domain)
                    )));
                }
            }
        }
        for p in &self.schema.shared_pairs {
            let (ds, dt) = (
                self.source.feature_dim(&p.source),
                self.target.feature_dim(&p.target),
            );
            if ds != dt {
                return Err(Error::Schema(format!(
                    "shared pair {} has feature dims {ds} vs {dt}",
                    p.key()
                )));
            }
        }
        let c = self.schema.num_classes;
        let class_src = self.schema.class_type(Domain::Source)?;
        let class_tgt = self.schema.class_type(Domain::Target)?;
        let mut class_sets = Vec::new();
        for (g, ty) in [(&self.source, class_src), (&self.target, class_tgt)] {
            if let Some(labels) = &g.labels {
                if labels.len() != g.count(ty) {
                    return Err(Error::Validation(format!(
                        "{} labels cover {} of {} {ty} nodes",
                        g.domain,
                        labels.len(),
                        g.count(ty)
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
                    return Err(Error::Validation(format!(
                        "{} label {bad} outside 0..{c}",
                        g.domain
                    )));
                }
                class_sets.push(labels.iter().copied().collect::<BTreeSet<_>>());
            }
        }
        if self.source.labels.is_none() {
            return Err(Error::Validation(
                "source graph must be fully labelled".into(),
            ));
        }
        if class_sets.len() == 2 && class_sets[0] != class_sets[1] {
            return Err(Error::Validation(format!(
                "class sets differ between domains: {:?} vs {:?}",
                class_sets[0], class_sets[1]
            )));
        }
        Ok(())
    }

    /// Copy with target labels removed; what training code is allowed to see.
    pub fn without_target_labels(&self) -> DomainPair {
        let mut p = self.clone();
        p.target.labels = None;
        p
    }
}

/// Keeps only shared types and the relations among them.
pub fn restrict_to_shared(pair: &DomainPair) -> DomainPair {
    let schema = &pair.schema;
    let relation_pairs: Vec<TypePair> = schema
        .relation_pairs
        .iter()
        .filter(|r| {
            let (a, b) = parse_relation_name(&r.source).expect("validated schema");
            matches!(schema.kind_of(Domain::Source, a), Some(TypeKind::Shared(_)))
                && matches!(schema.kind_of(Domain::Source, b), Some(TypeKind::Shared(_)))
        })
        .cloned()
        .collect();
    let restrict = |g: &HeteroGraph| {
        let d = g.domain;
        let keep: BTreeSet<&str> = schema.shared_pairs.iter().map(|p| p.name(d)).collect();
        let rels: BTreeSet<&str> = relation_pairs.iter().map(|r| r.name(d)).collect();
        HeteroGraph {
            domain: d,
            node_counts: g
                .node_counts
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            features: g
                .features
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            edges: g
                .edges
                .iter()
                .filter(|(k, _)| rels.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            labels: g.labels.clone(),
        }
    };
    DomainPair {
        source: restrict(&pair.source),
        target: restrict(&pair.target),
        schema: TypeSchema {
            shared_pairs: schema.shared_pairs.clone(),
            private_pairs: Vec::new(),
            relation_pairs,
            target_class_type: schema.target_class_type.clone(),
            num_classes: schema.num_classes,
        },
    }
}
