//! TSV outputs: run reports, confusion matrices, embeddings, sweep tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gda_hin::hin::Domain;
use gda_hin::trainer::{phase_loss, EpochRecord, LossComponents, Model, Phase, TrainConfig};
use gda_hin::{Error, Matrix, Result};

pub const LOSS_COLUMNS: [&str; 10] = [
    "phase", "epoch", "lambda", "cls", "recon1", "recon2", "nda1", "nda2", "da", "total",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: TrainConfig,
    pub records: Vec<EpochRecord>,
    /// `None` when the target graph carries no labels.
    pub accuracy: Option<f64>,
    pub pseudo_labels: usize,
    pub seconds: f64,
}

fn parse_phase(s: &str) -> Option<Phase> {
    match s {
        "1" => Some(Phase::One),
        "2" => Some(Phase::Two),
        _ => None,
    }
}

impl RunReport {
    /// `#`-prefixed header lines, then one tab-separated row per epoch.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str("# gda-hin run report\n");
        writeln!(s, "# seed\t{}", self.config.seed).unwrap();
        writeln!(s, "# ablation\t{}", self.config.ablation).unwrap();
        match self.accuracy {
            Some(a) => writeln!(s, "# accuracy\t{a}").unwrap(),
            None => s.push_str("# accuracy\tNA\n"),
        }
        writeln!(s, "# pseudo_labels\t{}", self.pseudo_labels).unwrap();
        writeln!(s, "# wall_clock_seconds\t{:.3}", self.seconds).unwrap();
        for line in self.config.to_text().lines() {
            writeln!(s, "# config\t{line}").unwrap();
        }
        s.push_str(&LOSS_COLUMNS.join("\t"));
        s.push('\n');
        for r in &self.records {
            let c = &r.components;
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.phase.number(),
                r.epoch,
                r.lambda,
                c.cls,
                c.recon1,
                c.recon2,
                c.nda1,
                c.nda2,
                c.da,
                r.total
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: origin.to_owned(),
            line,
            message,
        };
        let mut config_text = String::new();
        let mut accuracy = None;
        let mut pseudo_labels = 0;
        let mut seconds = 0.0;
        let mut records = Vec::new();
        let mut seen_columns = false;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(h) = line.strip_prefix("# ") {
                let (k, v) = h.split_once('\t').unwrap_or((h, ""));
                match k {
                    "config" => {
                        config_text.push_str(v);
                        config_text.push('\n');
                    }
                    "accuracy" if v != "NA" => {
                        accuracy = Some(
                            v.parse()
                                .map_err(|_| bad(n, format!("bad accuracy `{v}`")))?,
                        )
                    }
                    "pseudo_labels" => {
                        pseudo_labels = v.parse().map_err(|_| bad(n, "bad count".into()))?
                    }
                    "wall_clock_seconds" => {
                        seconds = v.parse().map_err(|_| bad(n, "bad seconds".into()))?
                    }
                    _ => {}
                }
                continue;
            }
            if !seen_columns {
                if line != LOSS_COLUMNS.join("\t") {
                    return Err(bad(n, "expected the column header".into()));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != LOSS_COLUMNS.len() {
                return Err(bad(n, format!("expected {} columns", LOSS_COLUMNS.len())));
            }
            let num = |j: usize| -> Result<f64> {
                f[j].parse()
                    .map_err(|_| bad(n, format!("{}: bad number `{}`", LOSS_COLUMNS[j], f[j])))
            };
            records.push(EpochRecord {
                phase: parse_phase(f[0]).ok_or_else(|| bad(n, "bad phase".into()))?,
                epoch: f[1].parse().map_err(|_| bad(n, "bad epoch".into()))?,
                lambda: num(2)?,
                components: LossComponents {
                    cls: num(3)?,
                    recon1: num(4)?,
                    recon2: num(5)?,
                    nda1: num(6)?,
                    nda2: num(7)?,
                    da: num(8)?,
                },
                total: num(9)?,
            });
        }
        Ok(Self {
            config: TrainConfig::parse(&config_text)?,
            records,
            accuracy,
            pseudo_labels,
            seconds,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Load {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Largest gap between a logged total and the weighted sum of its
    /// components under the effective configuration.
    pub fn max_total_mismatch(&self) -> f64 {
        let cfg = self.config.effective();
        self.records
            .iter()
            .map(|r| (phase_loss(r.phase, &r.components, &cfg) - r.total).abs())
            .fold(0.0, f64::max)
    }
}

/// `counts[true][predicted]`.
pub fn confusion_matrix(predicted: &[usize], labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        m[y][p] += 1;
    }
    m
}

pub fn confusion_tsv(m: &[Vec<usize>]) -> String {
    let mut s = String::from("true\\predicted");
    for j in 0..m.len() {
        write!(s, "\t{j}").unwrap();
    }
    s.push('\n');
    for (i, row) in m.iter().enumerate() {
        write!(s, "{i}").unwrap();
        for c in row {
            write!(s, "\t{c}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Rows `domain, type, node_index, v1..v_d` for the classified type of both
/// domains, source first.
pub fn embeddings_tsv(model: &Model) -> Result<String> {
    let mut s = String::new();
    for domain in [Domain::Source, Domain::Target] {
        let ty = model.schema.class_type(domain)?.to_owned();
        let h = model.class_embeddings(domain)?;
        write_embedding_rows(&mut s, domain, &ty, &h);
    }
    Ok(s)
}

fn write_embedding_rows(s: &mut String, domain: Domain, ty: &str, h: &Matrix) {
    for (i, row) in h.rows().into_iter().enumerate() {
        write!(s, "{domain}\t{ty}\t{i}").unwrap();
        for v in row {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
}

/// Parses an embeddings file into `(domain, vector)` rows.
pub fn parse_embeddings(text: &str) -> Result<Vec<(Domain, Vec<f64>)>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let err = || Error::Validation(format!("embeddings line {}: malformed", i + 1));
            if f.len() < 4 {
                return Err(err());
            }
            let domain = match f[0] {
                "source" => Domain::Source,
                "target" => Domain::Target,
                _ => return Err(err()),
            };
            let v = f[3..]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|_| err()))
                .collect::<Result<Vec<_>>>()?;
            Ok((domain, v))
        })
        .collect()
}

/// Summary statistics of one sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ablation: String,
    pub accuracies: Vec<f64>,
    pub failures: usize,
}

impl SweepRow {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len().max(1) as f64
    }

    /// Sample standard deviation; zero for fewer than two cells.
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.accuracies.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn median(&self) -> f64 {
        median(&self.accuracies)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Accuracies in percent, `mean±std` plus the median.
pub fn sweep_table_tsv(rows: &[SweepRow]) -> String {
    let mut s = String::from("ablation\tcells\tfailures\tmean±std\tmedian\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{:.2}±{:.2}\t{:.2}",
            r.ablation,
            r.accuracies.len(),
            r.failures,
            100.0 * r.mean(),
            100.0 * r.std(),
            100.0 * r.median()
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.seed = 9;
        let c = LossComponents {
            cls: 1.25,
            recon1: 0.1,
            recon2: 0.0,
            nda1: 0.7,
            nda2: 0.0,
            da: 0.69,
        };
        let r = RunReport {
            records: vec![EpochRecord {
                phase: Phase::One,
                epoch: 0,
                lambda: 0.0,
                components: c,
                total: phase_loss(Phase::One, &c, &cfg),
            }],
            config: cfg,
            accuracy: Some(0.5),
            pseudo_labels: 3,
            seconds: 1.5,
        };
        let back = RunReport::parse(&r.to_tsv(), Path::new("r.tsv")).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.max_total_mismatch(), 0.0);
    }

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 2, 2], 3);
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 1, 1]]);
        assert!(confusion_tsv(&m).starts_with("true\\predicted\t0\t1\t2\n0\t1\t0\t0\n"));
    }

    #[test]
    fn sweep_stats() {
        let r = SweepRow {
            ablation: "full".into(),
            accuracies: vec![0.5, 0.7, 0.6],
            failures: 0,
        };
        assert!((r.mean() - 0.6).abs() < 1e-12);
        assert!((r.std() - 0.1).abs() < 1e-12);
        assert_eq!(r.median(), 0.6);
        assert_eq!(median(&[1.0, 3.0]), 2.0);
        let single = SweepRow {
            accuracies: vec![0.625],
            ..r
        };
        assert!(sweep_table_tsv(&[single]).contains("62.50±0.00\t62.50"));
    }
}
