//! `key = value` configuration files.
//!
//! Keys are written either in full (`plane.k = 1000`) or inside a section
//! (`[plane]` followed by `k = 1000`). Unknown keys are fatal. Lists are
//! comma separated; subjects are written `id:mass_kg:height_cm:gender`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pressim_core::neuralnet::LossMode;
use pressim_core::posekit::MotionTemplate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: expected `key = value` or `[section]`, found `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: `{key}` expects {expected}, got `{value}`")]
    TypeError {
        key: String,
        origin: Origin,
        expected: &'static str,
        value: String,
    },
    #[error("{origin}: `{key}` {reason}")]
    Range {
        key: String,
        origin: Origin,
        reason: String,
    },
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    CommandLine,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::CommandLine => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub id: String,
    pub mass_kg: f64,
    pub height_cm: f64,
    pub gender: String,
}

impl FromStr for SubjectEntry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [id, mass, height, gender] = parts[..] else {
            return Err("id:mass_kg:height_cm:gender".into());
        };
        let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0);
        match (num(mass), num(height)) {
            (Some(mass_kg), Some(height_cm)) if !id.is_empty() => Ok(Self {
                id: id.to_string(),
                mass_kg,
                height_cm,
                gender: gender.to_string(),
            }),
            _ => Err("id:mass_kg:height_cm:gender with positive numbers".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    /// Subject of single-sequence `gen`/`simulate` runs.
    pub subject: SubjectEntry,
    /// Spring stiffness per cell, N/m.
    pub plane_k: f64,
    /// Penetration rendered as 255, mm.
    pub plane_d_max: f64,
    pub motion_template: MotionTemplate,
    /// Seconds.
    pub motion_duration: f64,
    /// Pose frames per second.
    pub motion_fps: f64,
    /// Meters of smooth jitter.
    pub motion_noise: f64,
    /// Rate of the simulated deformation and pressure streams.
    pub pressure_fps: f64,
    /// Sequences generated by dataset-mode `gen`: every subject performs
    /// every template.
    pub dataset_subjects: Vec<SubjectEntry>,
    pub dataset_templates: Vec<MotionTemplate>,
    pub dataset_duration: f64,
    /// Seconds.
    pub align_tolerance: f64,
    pub split: (f64, f64, f64),
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs for each of the pose, deformation and fusion stages.
    pub epochs: usize,
    /// Baseline epochs; 0 means the sum of the three stage budgets.
    pub baseline_epochs: usize,
    pub loss_mode: LossMode,
    pub fusion_alpha: f64,
    pub fusion_beta: f64,
    pub data_dir: PathBuf,
    pub models_dir: PathBuf,
    pub synth_dir: PathBuf,
    pub report_path: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            subject: SubjectEntry {
                id: "s0".into(),
                mass_kg: 70.0,
                height_cm: 175.0,
                gender: "female".into(),
            },
            plane_k: 1.0e3,
            plane_d_max: 10.0,
            motion_template: MotionTemplate::StandSway,
            motion_duration: 10.0,
            motion_fps: 30.0,
            motion_noise: 0.01,
            pressure_fps: 10.0,
            dataset_subjects: Vec::new(),
            dataset_templates: Vec::new(),
            dataset_duration: 45.0,
            align_tolerance: 0.075,
            split: (0.7, 0.15, 0.15),
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 10,
            baseline_epochs: 0,
            loss_mode: LossMode::Mse,
            fusion_alpha: 1.0,
            fusion_beta: 1.0,
            data_dir: "data".into(),
            models_dir: "data/models".into(),
            synth_dir: "data/synth".into(),
            report_path: "data/report.csv".into(),
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "subject.id",
    "subject.mass_kg",
    "subject.height_cm",
    "subject.gender",
    "plane.k",
    "plane.d_max",
    "motion.template",
    "motion.duration",
    "motion.fps",
    "motion.noise",
    "simulate.pressure_fps",
    "dataset.subjects",
    "dataset.templates",
    "dataset.duration",
    "align.tolerance",
    "split.train",
    "split.val",
    "split.test",
    "train.lr",
    "train.batch",
    "train.epochs",
    "train.baseline_epochs",
    "train.loss_mode",
    "train.alpha",
    "train.beta",
    "paths.data",
    "paths.models",
    "paths.synth",
    "paths.report",
];

struct Setting<'a> {
    key: &'a str,
    value: &'a str,
    origin: Origin,
}

impl Setting<'_> {
    fn type_error(&self, expected: &'static str) -> ConfigError {
        ConfigError::TypeError {
            key: self.key.to_string(),
            origin: self.origin.clone(),
            expected,
            value: self.value.to_string(),
        }
    }

    fn range(&self, reason: &str) -> ConfigError {
        ConfigError::Range {
            key: self.key.to_string(),
            origin: self.origin.clone(),
            reason: reason.to_string(),
        }
    }

    fn parse<T: FromStr>(&self, expected: &'static str) -> Result<T, ConfigError> {
        self.value.parse().map_err(|_| self.type_error(expected))
    }

    fn real(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse("a number")?;
        if !v.is_finite() {
            return Err(self.range("must be finite"));
        }
        Ok(v)
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.real()?;
        if v <= 0.0 {
            return Err(self.range("must be positive"));
        }
        Ok(v)
    }

    fn non_negative(&self) -> Result<f64, ConfigError> {
        let v = self.real()?;
        if v < 0.0 {
            return Err(self.range("must not be negative"));
        }
        Ok(v)
    }

    fn count(&self, min: usize) -> Result<usize, ConfigError> {
        let v: usize = self.parse("a non-negative integer")?;
        if v < min {
            return Err(self.range(&format!("must be at least {min}")));
        }
        Ok(v)
    }

    fn text(&self) -> Result<String, ConfigError> {
        if self.value.is_empty() {
            return Err(self.type_error("a non-empty string"));
        }
        Ok(self.value.to_string())
    }

    fn list<T: FromStr>(&self, expected: &'static str) -> Result<Vec<T>, ConfigError> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.type_error(expected)))
            .collect()
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

impl Config {
    /// Reads `path` (when given) over the defaults, then applies `overrides`
    /// in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        for (k, v) in overrides {
            cfg.set(k, unquote(v), Origin::CommandLine)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    origin,
                    text: raw.trim().to_string(),
                });
            };
            let k = k.trim();
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            cfg.set(&key, unquote(v), origin)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let s = Setting { key, value, origin };
        match key {
            "seed" => self.seed = s.parse("an unsigned integer")?,
            "subject.id" => self.subject.id = s.text()?,
            "subject.mass_kg" => self.subject.mass_kg = s.positive()?,
            "subject.height_cm" => self.subject.height_cm = s.positive()?,
            "subject.gender" => self.subject.gender = s.text()?,
            "plane.k" => self.plane_k = s.positive()?,
            "plane.d_max" => self.plane_d_max = s.positive()?,
            "motion.template" => self.motion_template = s.parse("a motion template name")?,
            "motion.duration" => self.motion_duration = s.positive()?,
            "motion.fps" => self.motion_fps = s.positive()?,
            "motion.noise" => self.motion_noise = s.non_negative()?,
            "simulate.pressure_fps" => self.pressure_fps = s.positive()?,
            "dataset.subjects" => {
                self.dataset_subjects = s.list("a list of id:mass_kg:height_cm:gender")?
            }
            "dataset.templates" => {
                self.dataset_templates = s.list("a list of motion template names")?
            }
            "dataset.duration" => self.dataset_duration = s.positive()?,
            "align.tolerance" => self.align_tolerance = s.positive()?,
            "split.train" => self.split.0 = s.positive()?,
            "split.val" => self.split.1 = s.positive()?,
            "split.test" => self.split.2 = s.positive()?,
            "train.lr" => self.learning_rate = s.positive()?,
            "train.batch" => self.batch_size = s.count(1)?,
            "train.epochs" => self.epochs = s.count(1)?,
            "train.baseline_epochs" => self.baseline_epochs = s.count(0)?,
            "train.loss_mode" => {
                self.loss_mode = match value.to_ascii_lowercase().as_str() {
                    "mse" => LossMode::Mse,
                    "fused_abs" => LossMode::FusedAbs,
                    _ => return Err(s.type_error("`mse` or `fused_abs`")),
                }
            }
            "train.alpha" => self.fusion_alpha = s.non_negative()?,
            "train.beta" => self.fusion_beta = s.non_negative()?,
            "paths.data" => self.data_dir = s.text()?.into(),
            "paths.models" => self.models_dir = s.text()?.into(),
            "paths.synth" => self.synth_dir = s.text()?.into(),
            "paths.report" => self.report_path = s.text()?.into(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    origin: s.origin,
                })
            }
        }
        Ok(())
    }

    fn check(&self) -> Result<(), ConfigError> {
        let (a, b, c) = self.split;
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Range {
                key: "split".into(),
                origin: Origin::CommandLine,
                reason: format!("ratios sum to {}, not 1", a + b + c),
            });
        }
        if self.fusion_alpha + self.fusion_beta <= 0.0 {
            return Err(ConfigError::Range {
                key: "train.alpha".into(),
                origin: Origin::CommandLine,
                reason: "and train.beta must not both be zero".into(),
            });
        }
        Ok(())
    }

    /// Epoch budget of the baseline.
    pub fn baseline_budget(&self) -> usize {
        if self.baseline_epochs == 0 {
            3 * self.epochs
        } else {
            self.baseline_epochs
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert_eq!(
            Config::parse("# only a comment\n\n").unwrap(),
            Config::default()
        );
    }

    #[test]
    fn sections_and_full_keys_agree() {
        let a = Config::parse("[plane]\nk = 2000 # stiffer\nd_max = 12\n").unwrap();
        let b = Config::parse("plane.k = 2000\nplane.d_max = 12").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plane_k, 2000.0);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = Config::parse("seed = 1\n[plane]\nstiffness = 3\n").unwrap_err();
        assert!(
            matches!(&e, ConfigError::UnknownKey { key, origin: Origin::Line(3) } if key == "plane.stiffness")
        );
        assert!(e.to_string().contains("plane.stiffness"));
    }

    #[test]
    fn negative_stiffness_is_rejected() {
        let e = Config::parse("plane.k = -5").unwrap_err();
        assert!(matches!(&e, ConfigError::Range { key, .. } if key == "plane.k"));
        let e = Config::parse("plane.k = soft").unwrap_err();
        assert!(
            matches!(&e, ConfigError::TypeError { key, expected: "a number", .. } if key == "plane.k")
        );
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "train.lr = 1e-4\n").unwrap();
        let cfg = Config::load(Some(&path), &[("train.lr".into(), "1e-3".into())]).unwrap();
        assert_eq!(cfg.learning_rate, 1e-3);
        let e = Config::load(Some(&path), &[("train.lr".into(), "-1".into())]).unwrap_err();
        assert!(matches!(
            e,
            ConfigError::Range {
                origin: Origin::CommandLine,
                ..
            }
        ));
    }

    #[test]
    fn lists_and_enums() {
        let cfg = Config::parse(
            "[dataset]\nsubjects = a:55:160:female, b:95:185:male\ntemplates = plank, squat_cycle\n[train]\nloss_mode = fused_abs\n",
        )
        .unwrap();
        assert_eq!(cfg.dataset_subjects.len(), 2);
        assert_eq!(cfg.dataset_subjects[1].mass_kg, 95.0);
        assert_eq!(
            cfg.dataset_templates,
            vec![MotionTemplate::Plank, MotionTemplate::SquatCycle]
        );
        assert_eq!(cfg.loss_mode, LossMode::FusedAbs);
        assert!(Config::parse("dataset.subjects = a:55:160").is_err());
    }

    #[test]
    fn split_must_sum_to_one() {
        assert!(Config::parse("split.train = 0.5").is_err());
        assert!(Config::parse("split.train = 0.5\nsplit.val = 0.25\nsplit.test = 0.25").is_ok());
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let defaults = Config::default();
        for key in KEYS {
            let mut cfg = defaults.clone();
            let value = match *key {
                "motion.template" => "plank",
                "dataset.subjects" => "x:60:170:male",
                "dataset.templates" => "supine",
                "train.loss_mode" => "mse",
                "subject.id" | "subject.gender" | "paths.data" | "paths.models" | "paths.synth"
                | "paths.report" => "x",
                _ => "1",
            };
            cfg.set(key, value, Origin::CommandLine)
                .unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn syntax_error_names_line() {
        let e = Config::parse("seed = 1\njust words\n").unwrap_err();
        assert!(matches!(
            e,
            ConfigError::Syntax {
                origin: Origin::Line(2),
                ..
            }
        ));
    }
}
