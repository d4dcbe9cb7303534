//! Run configuration: flat `key = value` text, `#` comments, later
//! assignments win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sclrai_core::eval::experiment::Variant;
use sclrai_core::training::{Architecture, Hyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptMode {
    /// Distant supervision of raw text with a dictionary.
    Dict,
    /// Independent per-mention drops.
    Rate,
    /// Drops whole surface forms.
    Surface,
}

impl CorruptMode {
    pub fn name(self) -> &'static str {
        match self {
            CorruptMode::Dict => "dict",
            CorruptMode::Rate => "rate",
            CorruptMode::Surface => "surface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Robustness,
    BatchSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Robustness => "robustness",
            ExperimentKind::BatchSweep => "batch_sweep",
        }
    }
}

pub const PATH_KEYS: &[&str] = &[
    "train",
    "dev",
    "test",
    "noisy",
    "raw",
    "dictionary",
    "input",
    "checkpoint",
    "centroids",
    "log",
    "output",
    "train_features",
    "dev_features",
    "features",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub arch: Architecture,
    paths: Vec<(&'static str, PathBuf)>,
    pub corrupt_mode: Option<CorruptMode>,
    pub drop_prob: Option<f64>,
    pub experiment: Option<ExperimentKind>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub batch_sizes: Vec<usize>,
    pub log_wall_time: bool,
    pub frozen_encoder: bool,
    pub synth_sizes: [usize; 4],
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            arch: Architecture::default(),
            paths: Vec::new(),
            corrupt_mode: None,
            drop_prob: None,
            experiment: None,
            variants: vec![Variant::CeOnly, Variant::SclOnly, Variant::SclRai],
            seeds: (0..5).collect(),
            batch_sizes: vec![8, 16, 32],
            log_wall_time: false,
            frozen_encoder: false,
            synth_sizes: [2000, 500, 500, 2000],
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {value:?}")),
    }
}

/// `(line number, key, value)` triples in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, String> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", idx + 1));
        }
        out.push((idx + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn set_hyper(h: &mut Hyperparams, key: &str, value: &str) -> Result<bool, String> {
    match key {
        "lambda" => h.lambda = num(key, value)?,
        "alpha" => h.alpha = num(key, value)?,
        "tau" => h.tau = num(key, value)?,
        "neg_ratio" => h.neg_ratio = num(key, value)?,
        "dropout" => h.dropout = num(key, value)?,
        "batch_size" => h.batch_size = num(key, value)?,
        "learning_rate" => h.learning_rate = num(key, value)?,
        "epochs" => h.epochs = num(key, value)?,
        "max_span_len" => h.max_span_len = num(key, value)?,
        "seed" => h.seed = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// The hyperparameter keys as config text.
pub fn hyper_text(h: &Hyperparams) -> String {
    format!(
        "lambda = {}\nalpha = {}\ntau = {}\nneg_ratio = {}\ndropout = {}\nbatch_size = {}\n\
         learning_rate = {}\nepochs = {}\nmax_span_len = {}\nseed = {}\n",
        h.lambda,
        h.alpha,
        h.tau,
        h.neg_ratio,
        h.dropout,
        h.batch_size,
        h.learning_rate,
        h.epochs,
        h.max_span_len,
        h.seed
    )
}

pub fn parse_hyper_text(text: &str) -> Result<Hyperparams, String> {
    let mut h = Hyperparams::default();
    for (line, k, v) in parse_pairs(text)? {
        if !set_hyper(&mut h, &k, &v)? {
            return Err(format!("line {line}: unknown hyperparameter {k:?}"));
        }
    }
    Ok(h)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if set_hyper(&mut self.hyper, key, value)? {
            return Ok(());
        }
        if let Some(k) = PATH_KEYS.iter().find(|k| **k == key) {
            self.paths.retain(|(p, _)| p != k);
            if !value.is_empty() {
                self.paths.push((k, PathBuf::from(value)));
            }
            return Ok(());
        }
        match key {
            "d_e" => self.arch.embed_dim = num(key, value)?,
            "d_h" => self.arch.hidden_dim = num(key, value)?,
            "d_r" => self.arch.rep_dim = num(key, value)?,
            "vocab_min_count" => self.arch.vocab_min_count = num(key, value)?,
            "corrupt_mode" => {
                self.corrupt_mode = Some(match value {
                    "dict" => CorruptMode::Dict,
                    "rate" => CorruptMode::Rate,
                    "surface" => CorruptMode::Surface,
                    _ => {
                        return Err(format!(
                            "corrupt_mode: expected dict, rate or surface, got {value:?}"
                        ))
                    }
                })
            }
            "drop_prob" => self.drop_prob = Some(num(key, value)?),
            "experiment" => {
                self.experiment = Some(match value {
                    "robustness" => ExperimentKind::Robustness,
                    "batch_sweep" => ExperimentKind::BatchSweep,
                    _ => {
                        return Err(format!(
                            "experiment: expected robustness or batch_sweep, got {value:?}"
                        ))
                    }
                })
            }
            "variants" => {
                self.variants = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Variant::parse(s).map_err(|e| format!("variants: {e}")))
                    .collect::<Result<_, _>>()?
            }
            "seeds" => self.seeds = list(key, value)?,
            "batch_sizes" => self.batch_sizes = list(key, value)?,
            "log_wall_time" => self.log_wall_time = boolean(key, value)?,
            "frozen_encoder" => self.frozen_encoder = boolean(key, value)?,
            "synth_sizes" => {
                let v: Vec<usize> = list(key, value)?;
                self.synth_sizes = v.try_into().map_err(|_| {
                    "synth_sizes: expected four counts (train, dev, test, extra)".to_string()
                })?;
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies a config file's text; errors name the line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (line, k, v) in parse_pairs(text)? {
            self.set(&k, &v).map_err(|e| format!("line {line}: {e}"))?;
        }
        Ok(())
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, p)| p.as_path())
    }

    /// Range checks on every numeric value.
    pub fn validate(&self) -> Result<(), String> {
        self.hyper.validate().map_err(|e| e.to_string())?;
        self.arch.validate().map_err(|e| e.to_string())?;
        if let Some(p) = self.drop_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("drop_prob = {p} must lie in [0, 1]"));
            }
        }
        if self.batch_sizes.contains(&0) {
            return Err("batch_sizes must be positive".into());
        }
        Ok(())
    }

    /// Every effective value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = hyper_text(&self.hyper);
        let a = &self.arch;
        let _ = write!(
            out,
            "d_e = {}\nd_h = {}\nd_r = {}\nvocab_min_count = {}\n",
            a.embed_dim, a.hidden_dim, a.rep_dim, a.vocab_min_count
        );
        for key in PATH_KEYS {
            if let Some(p) = self.path(key) {
                let _ = writeln!(out, "{key} = {}", p.display());
            }
        }
        if let Some(m) = self.corrupt_mode {
            let _ = writeln!(out, "corrupt_mode = {}", m.name());
        }
        if let Some(p) = self.drop_prob {
            let _ = writeln!(out, "drop_prob = {p}");
        }
        if let Some(e) = self.experiment {
            let _ = writeln!(out, "experiment = {}", e.name());
        }
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(
            out,
            "variants = {}",
            join(self.variants.iter().map(|v| v.name().to_string()).collect())
        );
        let _ = writeln!(
            out,
            "seeds = {}",
            join(self.seeds.iter().map(u64::to_string).collect())
        );
        let _ = writeln!(
            out,
            "batch_sizes = {}",
            join(self.batch_sizes.iter().map(usize::to_string).collect())
        );
        let _ = writeln!(out, "log_wall_time = {}", self.log_wall_time);
        let _ = writeln!(out, "frozen_encoder = {}", self.frozen_encoder);
        let _ = writeln!(
            out,
            "synth_sizes = {}",
            join(self.synth_sizes.iter().map(usize::to_string).collect())
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_hyperparams() {
        let c = RunConfig::default();
        assert_eq!(c.hyper, Hyperparams::default());
        assert_eq!(c.hyper.learning_rate, 1e-5);
        assert_eq!(c.arch.rep_dim, 256);
    }

    #[test]
    fn comments_blank_lines_and_last_wins() {
        let mut c = RunConfig::default();
        c.apply_text("# header\n\nalpha = 0.2  # inline\nalpha=0.3\ntrain = a.bio\n")
            .unwrap();
        assert_eq!(c.hyper.alpha, 0.3);
        assert_eq!(c.path("train"), Some(Path::new("a.bio")));
        c.set("train", "").unwrap();
        assert_eq!(c.path("train"), None);
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("alpha = 0.5\nbogus = 1\n").unwrap_err();
        assert!(e.starts_with("line 2"), "{e}");
        assert!(c.apply_text("tau 0.1").is_err());
        assert!(c.apply_text("epochs = -1").is_err());
        assert!(c.apply_text("synth_sizes = 1,2").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("lambda = 0.25\nlearning_rate = 3e-4\nseeds = 4,2\ncorrupt_mode = rate\ndrop_prob = 0.4\ntrain = x\n")
            .unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn hyper_text_round_trips_exactly() {
        let h = Hyperparams {
            learning_rate: 0.1 + 0.2,
            ..Hyperparams::default()
        };
        assert_eq!(parse_hyper_text(&hyper_text(&h)).unwrap(), h);
    }

    #[test]
    fn validation_ranges() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.set("alpha", "1.5").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("drop_prob", "-0.1").unwrap();
        assert!(c.validate().is_err());
    }
}
