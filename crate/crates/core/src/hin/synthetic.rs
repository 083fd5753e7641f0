//! Synthetic source/target pairs with a controlled feature and structure shift.
//!
//! The schema mirrors a bibliographic network: papers `P`, authors `A` and
//! venues `V` are shared, terms `T` are private to the source and fields `F`
//! private to the target. Authors carry the class labels.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hin::graph::{Domain, DomainPair, HeteroGraph, TypePair, TypeSchema};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub papers: usize,
    pub authors: usize,
    pub venues: usize,
    pub source_private: usize,
    pub target_private: usize,
    pub dim_paper: usize,
    pub dim_author: usize,
    pub dim_venue: usize,
    pub dim_source_private: usize,
    pub dim_target_private: usize,
    /// Euclidean length of the translation applied to every target type's
    /// features; the direction is random per type.
    pub shift: f64,
    /// Scales target link probabilities.
    pub density: f64,
    /// Norm of each class mean.
    pub class_separation: f64,
    pub noise: f64,
    /// Probability that a link goes to a node of the same class.
    pub homophily: f64,
    pub authors_per_paper: usize,
    pub private_per_paper: usize,
    pub link_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            papers: 400,
            authors: 400,
            venues: 300,
            source_private: 300,
            target_private: 300,
            dim_paper: 4,
            dim_author: 4,
            dim_venue: 4,
            dim_source_private: 4,
            dim_target_private: 3,
            shift: 1.5,
            density: 0.7,
            class_separation: 2.0,
            noise: 0.5,
            homophily: 0.8,
            authors_per_paper: 3,
            private_per_paper: 3,
            link_prob: 0.7,
        }
    }
}

impl SyntheticConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let uint = |v: &str| {
                v.parse::<usize>().map_err(|_| {
                    Error::config(format!("{k}: expected a non-negative integer, got `{v}`"))
                })
            };
            let float = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::config(format!("{k}: expected a number, got `{v}`")))
            };
            match k {
                "classes" => c.classes = uint(v)?,
                "papers" => c.papers = uint(v)?,
                "authors" => c.authors = uint(v)?,
                "venues" => c.venues = uint(v)?,
                "source_private" => c.source_private = uint(v)?,
                "target_private" => c.target_private = uint(v)?,
                "dim_paper" => c.dim_paper = uint(v)?,
                "dim_author" => c.dim_author = uint(v)?,
                "dim_venue" => c.dim_venue = uint(v)?,
                "dim_source_private" => c.dim_source_private = uint(v)?,
                "dim_target_private" => c.dim_target_private = uint(v)?,
                "shift" => c.shift = float(v)?,
                "density" => c.density = float(v)?,
                "class_separation" => c.class_separation = float(v)?,
                "noise" => c.noise = float(v)?,
                "homophily" => c.homophily = float(v)?,
                "authors_per_paper" => c.authors_per_paper = uint(v)?,
                "private_per_paper" => c.private_per_paper = uint(v)?,
                "link_prob" => c.link_prob = float(v)?,
                _ => return Err(Error::config(format!("unknown synthetic key `{k}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = self;
        for (k, v) in [
            ("classes", c.classes.to_string()),
            ("papers", c.papers.to_string()),
            ("authors", c.authors.to_string()),
            ("venues", c.venues.to_string()),
            ("source_private", c.source_private.to_string()),
            ("target_private", c.target_private.to_string()),
            ("dim_paper", c.dim_paper.to_string()),
            ("dim_author", c.dim_author.to_string()),
            ("dim_venue", c.dim_venue.to_string()),
            ("dim_source_private", c.dim_source_private.to_string()),
            ("dim_target_private", c.dim_target_private.to_string()),
            ("shift", c.shift.to_string()),
            ("density", c.density.to_string()),
            ("class_separation", c.class_separation.to_string()),
            ("noise", c.noise.to_string()),
            ("homophily", c.homophily.to_string()),
            ("authors_per_paper", c.authors_per_paper.to_string()),
            ("private_per_paper", c.private_per_paper.to_string()),
            ("link_prob", c.link_prob.to_string()),
        ] {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("papers", self.papers),
            ("authors", self.authors),
            ("venues", self.venues),
            ("source_private", self.source_private),
            ("target_private", self.target_private),
            ("dim_paper", self.dim_paper),
            ("dim_author", self.dim_author),
            ("dim_venue", self.dim_venue),
            ("dim_source_private", self.dim_source_private),
            ("dim_target_private", self.dim_target_private),
            ("authors_per_paper", self.authors_per_paper),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{k} must be positive")));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::config("density must be positive"));
        }
        if !self.shift.is_finite() || !(self.noise >= 0.0) || !self.class_separation.is_finite() {
            return Err(Error::config(
                "shift, noise and class_separation must be finite",
            ));
        }
        for (k, p) in [("homophily", self.homophily), ("link_prob", self.link_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{k} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn class_means(rng: &mut ChaCha8Rng, classes: usize, dim: usize, norm: f64) -> Matrix {
    let scale = norm / (dim as f64).sqrt();
    Matrix::from_shape_simple_fn((classes, dim), || {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}

fn balanced_classes(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|i| i % classes).collect();
    v.shuffle(rng);
    v
}

/// Random direction of length `norm`.
fn translation(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let len = v
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| norm * x / len).collect()
}

fn features(
    rng: &mut ChaCha8Rng,
    means: &Matrix,
    classes: &[usize],
    offset: Option<&[f64]>,
    noise: f64,
) -> Matrix {
    let d = means.ncols();
    let mut m = Matrix::zeros((classes.len(), d));
    for (i, &c) in classes.iter().enumerate() {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            m[[i, j]] = means[[c, j]] + offset.map_or(0.0, |o| o[j]) + noise * z;
        }
    }
    m
}

struct Picker {
    by_class: Vec<Vec<usize>>,
    n: usize,
    homophily: f64,
}

impl Picker {
    fn new(classes: &[usize], num_classes: usize, homophily: f64) -> Self {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &c) in classes.iter().enumerate() {
            by_class[c].push(i);
        }
        Self {
            by_class,
            n: classes.len(),
            homophily,
        }
    }

    fn pick(&self, rng: &mut ChaCha8Rng, class: usize) -> usize {
        let same = &self.by_class[class];
        if !same.is_empty() && rng.random::<f64>() < self.homophily {
            same[rng.random_range(0..same.len())]
        } else {
            rng.random_range(0..self.n)
        }
    }
}

struct TypeMeans {
    paper: Matrix,
    author: Matrix,
    venue: Matrix,
    source_private: Matrix,
    target_private: Matrix,
}

/// Target-domain translations, one per target node type.
struct Shifts {
    paper: Vec<f64>,
    author: Vec<f64>,
    venue: Vec<f64>,
    private: Vec<f64>,
}

fn build_graph<'a>(
    cfg: &SyntheticConfig,
    means: &TypeMeans,
    shifts: &'a Shifts,
    domain: Domain,
    rng: &mut ChaCha8Rng,
) -> Result<HeteroGraph> {
    let (shifted, density, private_name, private_n, private_means) = match domain {
        Domain::Source => (false, 1.0, "T", cfg.source_private, &means.source_private),
        Domain::Target => (
            true,
            cfg.density,
            "F",
            cfg.target_private,
            &means.target_private,
        ),
    };
    let off = |v: &'a [f64]| shifted.then_some(v);
    let c = cfg.classes;
    let paper_cls = balanced_classes(rng, cfg.papers, c);
    let author_cls = balanced_classes(rng, cfg.authors, c);
    let venue_cls = balanced_classes(rng, cfg.venues, c);
    let private_cls = balanced_classes(rng, private_n, c);

    let mut g = HeteroGraph::new(domain);
    g.add_node_type(
        "P",
        features(rng, &means.paper, &paper_cls, off(&shifts.paper), cfg.noise),
    );
    g.add_node_type(
        "A",
        features(
            rng,
            &means.author,
            &author_cls,
            off(&shifts.author),
            cfg.noise,
        ),
    );
    g.add_node_type(
        "V",
        features(rng, &means.venue, &venue_cls, off(&shifts.venue), cfg.noise),
    );
    g.add_node_type(
        private_name,
        features(
            rng,
            private_means,
            &private_cls,
            off(&shifts.private),
            cfg.noise,
        ),
    );

    let authors = Picker::new(&author_cls, c, cfg.homophily);
    let venues = Picker::new(&venue_cls, c, cfg.homophily);
    let privates = Picker::new(&private_cls, c, cfg.homophily);
    let p_link = (cfg.link_prob * density).min(1.0);

    let mut pa = Vec::new();
    let mut pv = Vec::new();
    let mut pt = Vec::new();
    for (p, &cls) in paper_cls.iter().enumerate() {
        pv.push((p, venues.pick(rng, cls)));
        let mut seen = BTreeSet::new();
        for slot in 0..cfg.authors_per_paper {
            if slot == 0 || rng.random::<f64>() < p_link {
                let a = authors.pick(rng, cls);
                if seen.insert(a) {
                    pa.push((p, a));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for _ in 0..cfg.private_per_paper {
            if rng.random::<f64>() < p_link {
                let t = privates.pick(rng, cls);
                if seen.insert(t) {
                    pt.push((p, t));
                }
            }
        }
    }
    g.add_relation("P-A", pa)?;
    g.add_relation("P-V", pv)?;
    g.add_relation(&format!("P-{private_name}"), pt)?;
    g.labels = Some(author_cls);
    Ok(g)
}

/// Deterministic in `seed`. Target labels are generated for evaluation; the
/// training entry points never read them.
pub fn generate_synthetic_pair(cfg: &SyntheticConfig, seed: u64) -> Result<DomainPair> {
    cfg.validate()?;
    let mut mean_rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = cfg.class_separation;
    let paper = class_means(&mut mean_rng, cfg.classes, cfg.dim_paper, sep);
    let author = class_means(&mut mean_rng, cfg.classes, cfg.dim_author, sep);
    let venue = class_means(&mut mean_rng, cfg.classes, cfg.dim_venue, sep);
    // Private means come from one stream so that equal dims give equal means.
    let private_seed: u64 = mean_rng.random();
    let source_private = class_means(
        &mut ChaCha8Rng::seed_from_u64(private_seed),
        cfg.classes,
        cfg.dim_source_private,
        sep,
    );
    let target_private = class_means(
        &mut ChaCha8Rng::seed_from_u64(private_seed),
        cfg.classes,
        cfg.dim_target_private,
        sep,
    );
    let shifts = Shifts {
        paper: translation(&mut mean_rng, cfg.dim_paper, cfg.shift),
        author: translation(&mut mean_rng, cfg.dim_author, cfg.shift),
        venue: translation(&mut mean_rng, cfg.dim_venue, cfg.shift),
        private: translation(&mut mean_rng, cfg.dim_target_private, cfg.shift),
    };
    let means = TypeMeans {
        paper,
        author,
        venue,
        source_private,
        target_private,
    };

    let mut src_rng = ChaCha8Rng::seed_from_u64(seed);
    src_rng.set_stream(1);
    let mut tgt_rng = ChaCha8Rng::seed_from_u64(seed);
    tgt_rng.set_stream(2);

    let pair = DomainPair {
        source: build_graph(cfg, &means, &shifts, Domain::Source, &mut src_rng)?,
        target: build_graph(cfg, &means, &shifts, Domain::Target, &mut tgt_rng)?,
        schema: TypeSchema {
            shared_pairs: ["P", "A", "V"]
                .iter()
                .map(|t| TypePair::new(t, t))
                .collect(),
            private_pairs: vec![TypePair::new("T", "F")],
            relation_pairs: vec![
                TypePair::new("P-A", "P-A"),
                TypePair::new("P-V", "P-V"),
                TypePair::new("P-T", "P-F"),
            ],
            target_class_type: "A".into(),
            num_classes: cfg.classes,
        },
    };
    pair.validate()?;
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            papers: 40,
            authors: 30,
            venues: 8,
            source_private: 20,
            target_private: 25,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic_pair(&small(), 7).unwrap();
        let b = generate_synthetic_pair(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_pair(&small(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn non_positive_counts_rejected() {
        let cfg = SyntheticConfig {
            authors: 0,
            ..small()
        };
        assert!(matches!(
            generate_synthetic_pair(&cfg, 1),
            Err(Error::Config(_))
        ));
        let cfg = SyntheticConfig {
            density: 0.0,
            ..small()
        };
        assert!(generate_synthetic_pair(&cfg, 1).is_err());
    }

    #[test]
    fn config_text_round_trips() {
        let cfg = SyntheticConfig {
            shift: 0.25,
            ..small()
        };
        assert_eq!(SyntheticConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(SyntheticConfig::parse("nope=1").is_err());
        assert!(SyntheticConfig::parse("papers=-3").is_err());
    }

    #[test]
    fn private_dims_may_differ() {
        let p = generate_synthetic_pair(&small(), 3).unwrap();
        assert_eq!(p.source.feature_dim("T"), 4);
        assert_eq!(p.target.feature_dim("F"), 3);
        assert_eq!(p.target.count("F"), 25);
    }
}
