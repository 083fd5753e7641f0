use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::align::{GrlConfig, GrlSchedule};
use crate::completion::{DEFAULT_DELTA, DEFAULT_INIT_STD};
use crate::error::{Error, Result};
use crate::extractor::HgtConfig;

/// Model variant. `NoDa` keeps only the extractor and classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Ablation {
    #[default]
    Full,
    WoP,
    WoT,
    WS,
    NoDa,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Self::Full, Self::WoP, Self::WoT, Self::WS, Self::NoDa];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::WoP => "wo_P",
            Self::WoT => "wo_T",
            Self::WS => "w_S",
            Self::NoDa => "no_da",
        }
    }

    /// Whether private types take part in phase II.
    pub fn uses_private(self) -> bool {
        !matches!(self, Self::WS)
    }

    /// Whether `Ŵ` is optimised.
    pub fn trains_completion(self) -> bool {
        !matches!(self, Self::WoP | Self::NoDa)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::config(format!("unknown ablation `{s}` (full|wo_P|wo_T|w_S|no_da)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub zeta: f64,
    pub learning_rate: f64,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub pseudo_threshold: f64,
    pub pseudo_max_fraction: f64,
    pub grl: GrlConfig,
    pub seed: u64,
    pub ablation: Ablation,
    pub hgt: HgtConfig,
    pub disc_hidden: usize,
    pub init_std: f64,
    pub cold_start: bool,
    /// Feed every node type, not only the classified one, to the topological
    /// discriminator.
    pub topo_all_types: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
            delta: DEFAULT_DELTA,
            zeta: 0.01,
            learning_rate: 1e-3,
            epochs_phase1: 200,
            epochs_phase2: 200,
            pseudo_threshold: 0.9,
            pseudo_max_fraction: 0.3,
            grl: GrlConfig::default(),
            seed: 0,
            ablation: Ablation::Full,
            hgt: HgtConfig::default(),
            disc_hidden: 32,
            init_std: DEFAULT_INIT_STD,
            cold_start: false,
            topo_all_types: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!(
            "{key}: expected true/false, got `{value}`"
        ))),
    }
}

impl TrainConfig {
    /// Parses `key=value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))?;
            c.set(key.trim(), value.trim())?;
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

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "zeta" => self.zeta = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "epochs_phase1" => self.epochs_phase1 = parse_num(key, value)?,
            "epochs_phase2" => self.epochs_phase2 = parse_num(key, value)?,
            "pseudo_threshold" => self.pseudo_threshold = parse_num(key, value)?,
            "pseudo_max_fraction" => self.pseudo_max_fraction = parse_num(key, value)?,
            "grl_lambda" => self.grl.lambda = parse_num(key, value)?,
            "grl_schedule" => {
                self.grl.schedule = match value {
                    "constant" => GrlSchedule::Constant,
                    "ramp" => GrlSchedule::Ramp {
                        gamma: match self.grl.schedule {
                            GrlSchedule::Ramp { gamma } => gamma,
                            GrlSchedule::Constant => 10.0,
                        },
                    },
                    _ => return Err(Error::config(format!("grl_schedule: unknown `{value}`"))),
                }
            }
            "grl_ramp_gamma" => {
                self.grl.schedule = GrlSchedule::Ramp {
                    gamma: parse_num(key, value)?,
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "num_layers" => self.hgt.num_layers = parse_num(key, value)?,
            "num_heads" => self.hgt.num_heads = parse_num(key, value)?,
            "hidden_dim" => self.hgt.hidden_dim = parse_num(key, value)?,
            "dropout" => self.hgt.dropout = parse_num(key, value)?,
            "disc_hidden" => self.disc_hidden = parse_num(key, value)?,
            "init_std" => self.init_std = parse_num(key, value)?,
            "cold_start" => self.cold_start = parse_bool(key, value)?,
            "topo_all_types" => self.topo_all_types = parse_bool(key, value)?,
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let (schedule, ramp) = match self.grl.schedule {
            GrlSchedule::Constant => ("constant", None),
            GrlSchedule::Ramp { gamma } => ("ramp", Some(gamma)),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("gamma", self.gamma.to_string());
        kv("delta", self.delta.to_string());
        kv("zeta", self.zeta.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs_phase1", self.epochs_phase1.to_string());
        kv("epochs_phase2", self.epochs_phase2.to_string());
        kv("pseudo_threshold", self.pseudo_threshold.to_string());
        kv("pseudo_max_fraction", self.pseudo_max_fraction.to_string());
        kv("grl_lambda", self.grl.lambda.to_string());
        kv("grl_schedule", schedule.to_owned());
        if let Some(g) = ramp {
            kv("grl_ramp_gamma", g.to_string());
        }
        kv("seed", self.seed.to_string());
        kv("ablation", self.ablation.to_string());
        kv("num_layers", self.hgt.num_layers.to_string());
        kv("num_heads", self.hgt.num_heads.to_string());
        kv("hidden_dim", self.hgt.hidden_dim.to_string());
        kv("dropout", self.hgt.dropout.to_string());
        kv("disc_hidden", self.disc_hidden.to_string());
        kv("init_std", self.init_std.to_string());
        kv("cold_start", self.cold_start.to_string());
        kv("topo_all_types", self.topo_all_types.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("zeta", self.zeta),
            ("grl_lambda", self.grl.lambda),
            ("init_std", self.init_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.pseudo_threshold > 0.0 && self.pseudo_threshold <= 1.0) {
            return Err(Error::config("pseudo_threshold must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.pseudo_max_fraction) {
            return Err(Error::config("pseudo_max_fraction must lie in [0, 1]"));
        }
        if self.disc_hidden == 0 {
            return Err(Error::config("disc_hidden must be positive"));
        }
        self.hgt.validate()
    }

    /// The configuration actually optimised: ablation switches applied to
    /// the loss weights.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        match self.ablation {
            Ablation::Full | Ablation::WS => {}
            Ablation::WoP => c.beta = 0.0,
            Ablation::WoT => c.gamma = 0.0,
            Ablation::NoDa => {
                c.alpha = 0.0;
                c.beta = 0.0;
                c.gamma = 0.0;
                c.zeta = 0.0;
            }
        }
        c
    }
}
