//! Dataset directory format.
//!
//! ```text
//! schema.tsv                 shared/private/relation/target_type/classes rows
//! <domain>/<type>.nodes.tsv  one row of feature values per node
//! <domain>/<rel>.edges.tsv   src_index \t dst_index
//! <domain>/labels.tsv        node_index \t class_id
//! ```
//! `<domain>` is `source` or `target`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hin::graph::{Domain, DomainPair, HeteroGraph, TypePair, TypeSchema};
use crate::linalg::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split_whitespace().collect()))
        }
    })
}

fn parse_schema(path: &Path) -> Result<TypeSchema> {
    parse_schema_text(&read(path)?, path)
}

/// Parses schema rows; `origin` names the source in error messages.
pub fn parse_schema_text(text: &str, origin: &Path) -> Result<TypeSchema> {
    let path = origin;
    let mut schema = TypeSchema::default();
    let mut have_target = false;
    let mut have_classes = false;
    for (line, cols) in rows(text) {
        match (cols[0], cols.len()) {
            ("shared", 3) => schema.shared_pairs.push(TypePair::new(cols[1], cols[2])),
            ("private", 3) => schema.private_pairs.push(TypePair::new(cols[1], cols[2])),
            ("relation", 3) => schema.relation_pairs.push(TypePair::new(cols[1], cols[2])),
            ("target_type", 2) => {
                schema.target_class_type = cols[1].to_owned();
                have_target = true;
            }
            ("classes", 2) => {
                schema.num_classes = cols[1]
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad class count `{}`", cols[1])))?;
                have_classes = true;
            }
            _ => {
                return Err(parse_err(
                    path,
                    line,
                    format!("unrecognised row `{}`", cols.join(" ")),
                ))
            }
        }
    }
    if !have_target || !have_classes {
        return Err(parse_err(
            path,
            0,
            "schema needs target_type and classes rows",
        ));
    }
    Ok(schema)
}

fn parse_nodes(path: &Path) -> Result<Matrix> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (line, cols) in rows(&text) {
        if *width.get_or_insert(cols.len()) != cols.len() {
            return Err(parse_err(path, line, "ragged feature row"));
        }
        for c in cols {
            let v: f64 = c
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad float `{c}`")))?;
            data.push(v);
        }
        n += 1;
    }
    Ok(Matrix::from_shape_vec((n, width.unwrap_or(0)), data).expect("row-major shape"))
}

fn parse_index_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    rows(&text)
        .map(|(line, cols)| {
            if cols.len() != 2 {
                return Err(parse_err(path, line, "expected two columns"));
            }
            let p = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(path, line, format!("bad index `{s}`")))
            };
            Ok((p(cols[0])?, p(cols[1])?))
        })
        .collect()
}

fn load_graph(root: &Path, schema: &TypeSchema, domain: Domain) -> Result<HeteroGraph> {
    let dir = root.join(domain.as_str());
    let mut g = HeteroGraph::new(domain);
    for p in schema.shared_pairs.iter().chain(&schema.private_pairs) {
        let ty = p.name(domain);
        g.add_node_type(ty, parse_nodes(&dir.join(format!("{ty}.nodes.tsv")))?);
    }
    for r in &schema.relation_pairs {
        let name = r.name(domain);
        g.add_relation(
            name,
            parse_index_pairs(&dir.join(format!("{name}.edges.tsv")))?,
        )?;
    }
    let labels_path = dir.join("labels.tsv");
    if labels_path.exists() || domain == Domain::Source {
        let class_type = schema.class_type(domain)?;
        let n = g.count(class_type);
        let pairs = parse_index_pairs(&labels_path)?;
        let mut labels = vec![None; n];
        for (i, c) in pairs {
            let slot = labels.get_mut(i).ok_or_else(|| {
                Error::Validation(format!(
                    "{domain} label for node {i} but only {n} {class_type} nodes"
                ))
            })?;
            *slot = Some(c);
        }
        let labels: Option<Vec<usize>> = labels.into_iter().collect();
        g.labels = Some(labels.ok_or_else(|| {
            Error::Validation(format!(
                "{domain} labels do not cover every {class_type} node"
            ))
        })?);
    }
    Ok(g)
}

/// Loads and validates a dataset directory. Target labels, when present, are
/// kept on the target graph for evaluation only.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DomainPair> {
    let root = root.as_ref();
    let schema = parse_schema(&root.join("schema.tsv"))?;
    schema.validate()?;
    let pair = DomainPair {
        source: load_graph(root, &schema, Domain::Source)?,
        target: load_graph(root, &schema, Domain::Target)?,
        schema,
    };
    pair.validate()?;
    Ok(pair)
}

/// Writes `pair` in the layout read by [`load_dataset`]. Floats use the
/// shortest round-trip representation, so a reload is exact.
pub fn schema_to_text(s: &TypeSchema) -> String {
    let mut text = String::new();
    for p in &s.shared_pairs {
        writeln!(text, "shared\t{}\t{}", p.source, p.target).unwrap();
    }
    for p in &s.private_pairs {
        writeln!(text, "private\t{}\t{}", p.source, p.target).unwrap();
    }
    for p in &s.relation_pairs {
        writeln!(text, "relation\t{}\t{}", p.source, p.target).unwrap();
    }
    writeln!(text, "target_type\t{}", s.target_class_type).unwrap();
    writeln!(text, "classes\t{}", s.num_classes).unwrap();
    text
}

pub fn write_dataset(pair: &DomainPair, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    fs::write(root.join("schema.tsv"), schema_to_text(&pair.schema))?;

    for g in [&pair.source, &pair.target] {
        let dir: PathBuf = root.join(g.domain.as_str());
        fs::create_dir_all(&dir)?;
        for (ty, m) in &g.features {
            let mut out = String::with_capacity(m.len() * 12);
            for row in m.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        out.push('\t');
                    }
                    first = false;
                    write!(out, "{v}").unwrap();
                }
                out.push('\n');
            }
            fs::write(dir.join(format!("{ty}.nodes.tsv")), out)?;
        }
        for (name, rel) in &g.edges {
            let mut out = String::with_capacity(rel.pairs.len() * 10);
            for (a, b) in &rel.pairs {
                writeln!(out, "{a}\t{b}").unwrap();
            }
            fs::write(dir.join(format!("{name}.edges.tsv")), out)?;
        }
        if let Some(labels) = &g.labels {
            let mut out = String::new();
            for (i, c) in labels.iter().enumerate() {
                writeln!(out, "{i}\t{c}").unwrap();
            }
            fs::write(dir.join("labels.tsv"), out)?;
        }
    }
    Ok(())
}
