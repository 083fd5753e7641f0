use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hin::{parse_schema_text, schema_to_text, DomainPair, TypeSchema};
use crate::linalg::Matrix;
use crate::params::ParamStore;

use super::config::TrainConfig;
use super::model::{Model, Phase};
use super::{phase2_pair, stream_rng, INIT_STREAM};
use crate::hin::restrict_to_shared;

const MAGIC: &str = "gda-hin checkpoint v1";

/// Parameters plus the configuration and schema that produced them.
///
/// Text layout: a magic line, `phase N`, then `[config]`, `[schema]` and
/// `[tensors]` sections. Each tensor is a `name rows cols` header followed by
/// one tab-separated line per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub phase: Phase,
    pub config: TrainConfig,
    pub schema: TypeSchema,
    pub store: ParamStore,
}

impl Checkpoint {
    /// `schema` is the schema of the dataset the model was trained on.
    pub fn from_model(model: &Model, schema: &TypeSchema, phase: Phase) -> Self {
        Self {
            phase,
            config: model.config.clone(),
            schema: schema.clone(),
            store: model.store.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "phase {}", self.phase.number()).unwrap();
        s.push_str("[config]\n");
        s.push_str(&self.config.to_text());
        s.push_str("[schema]\n");
        s.push_str(&schema_to_text(&self.schema));
        writeln!(s, "[tensors] {}", self.store.len()).unwrap();
        for (name, m) in self.store.iter() {
            writeln!(s, "{name} {} {}", m.nrows(), m.ncols()).unwrap();
            for row in m.rows() {
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        s.push('\t');
                    }
                    write!(s, "{v}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: origin.to_owned(),
            line,
            message,
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&MAGIC) {
            return Err(bad(1, "not a checkpoint file".into()));
        }
        let phase = match lines.get(1).copied() {
            Some("phase 1") => Phase::One,
            Some("phase 2") => Phase::Two,
            _ => return Err(bad(2, "expected `phase 1` or `phase 2`".into())),
        };
        let find = |tag: &str| {
            lines
                .iter()
                .position(|l| l.starts_with(tag))
                .ok_or_else(|| bad(0, format!("missing {tag} section")))
        };
        let (c0, s0, t0) = (find("[config]")?, find("[schema]")?, find("[tensors]")?);
        if !(c0 < s0 && s0 < t0) {
            return Err(bad(c0 + 1, "sections out of order".into()));
        }
        let config = TrainConfig::parse(&lines[c0 + 1..s0].join("\n"))?;
        let schema = parse_schema_text(&lines[s0 + 1..t0].join("\n"), origin)?;
        let count: usize = lines[t0]
            .trim_start_matches("[tensors]")
            .trim()
            .parse()
            .map_err(|_| bad(t0 + 1, "bad tensor count".into()))?;

        let mut store = ParamStore::new();
        let mut i = t0 + 1;
        for _ in 0..count {
            let header: Vec<&str> = lines
                .get(i)
                .ok_or_else(|| bad(i + 1, "truncated tensor list".into()))?
                .split_whitespace()
                .collect();
            let (name, rows, cols) = match header.as_slice() {
                [n, r, c] => (
                    *n,
                    r.parse::<usize>()
                        .map_err(|_| bad(i + 1, "bad row count".into()))?,
                    c.parse::<usize>()
                        .map_err(|_| bad(i + 1, "bad column count".into()))?,
                ),
                _ => return Err(bad(i + 1, "expected `name rows cols`".into())),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let ln = i + 1 + r;
                let line = lines
                    .get(ln)
                    .ok_or_else(|| bad(ln + 1, format!("{name}: truncated")))?;
                let before = data.len();
                for tok in line.split('\t').filter(|t| !t.is_empty()) {
                    data.push(
                        tok.parse::<f64>()
                            .map_err(|_| bad(ln + 1, format!("{name}: bad number `{tok}`")))?,
                    );
                }
                if data.len() - before != cols {
                    return Err(bad(ln + 1, format!("{name}: expected {cols} values")));
                }
            }
            let m = Matrix::from_shape_vec((rows, cols), data).expect("counted");
            store.insert(name, m);
            i += 1 + rows;
        }
        Ok(Self {
            phase,
            config,
            schema,
            store,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Load {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Rebuilds the model on `pair`. The pair's schema must equal the
    /// recorded one and every parameter must match by name and shape.
    pub fn restore(&self, pair: &DomainPair) -> Result<Model> {
        if pair.schema != self.schema {
            return Err(Error::Schema(
                "dataset schema differs from the checkpoint's".into(),
            ));
        }
        let pair = match self.phase {
            Phase::One => restrict_to_shared(pair),
            Phase::Two => phase2_pair(pair, &self.config),
        };
        let mut rng = stream_rng(self.config.seed, INIT_STREAM);
        let mut model = Model::build(&pair, &self.config, &mut rng)?;
        let copied = model.store.warm_start_from(&self.store);
        if copied != model.store.len() || copied != self.store.len() {
            return Err(Error::Schema(format!(
                "checkpoint matches {copied} of {} model tensors ({} stored)",
                model.store.len(),
                self.store.len()
            )));
        }
        Ok(model)
    }
}
