//! Experiment configuration file (TOML).
//!
//! A minimal file is three lines:
//!
//! ```toml
//! dataset = "data.csv"
//! strategies = ["uniform", "qbc"]
//! output_dir = "results"
//! ```
//!
//! Every other key has a default. Per-strategy sections (`[strategy.qbc]`)
//! may override `repetitions`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::dataset::{PovertyThreshold, SyntheticParams, DEFAULT_POOL_FRACTION};
use crate::models::{ForestParams, LogisticConfig};
use crate::simulation::{BootstrapParams, CvParams, ScheduleParams, SimulationConfig};
use crate::strategies::StrategyKind;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticSection {
    n: usize,
    d: usize,
    groups: usize,
    #[serde(default = "default_noise")]
    noise_sd: f64,
    #[serde(default)]
    seed: u64,
}

fn default_noise() -> f64 {
    0.5
}

fn default_reps() -> usize {
    50
}

fn default_threshold() -> f64 {
    PovertyThreshold::default().value
}

fn default_fraction() -> f64 {
    DEFAULT_POOL_FRACTION
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StrategySection {
    repetitions: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<PathBuf>,
    synthetic: Option<SyntheticSection>,
    strategies: Vec<StrategyKind>,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default = "default_reps")]
    repetitions: usize,
    #[serde(default)]
    seed: u64,
    split_seed: Option<u64>,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default = "default_fraction")]
    pool_fraction: f64,
    #[serde(default)]
    resplit_per_rep: bool,
    pca_k: Option<usize>,
    #[serde(default)]
    schedule: ScheduleParams,
    #[serde(default)]
    forest: ForestParams,
    #[serde(default)]
    logistic: LogisticConfig,
    #[serde(default)]
    bootstrap: BootstrapParams,
    cv: Option<CvParams>,
    #[serde(default)]
    strategy: BTreeMap<String, StrategySection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SyntheticParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DatasetSource,
    pub strategies: Vec<StrategyKind>,
    pub output_dir: PathBuf,
    pub bootstrap: BootstrapParams,
    /// Shared settings; `strategy` is overwritten per run.
    pub base: SimulationConfig,
    pub repetitions: BTreeMap<StrategyKind, usize>,
}

impl ExperimentConfig {
    pub fn for_strategy(&self, kind: StrategyKind) -> SimulationConfig {
        SimulationConfig {
            strategy: kind,
            repetitions: self.repetitions.get(&kind).copied().unwrap_or(self.base.repetitions),
            ..self.base.clone()
        }
    }

    /// Replaces the experiment seed; an unset split seed follows it.
    pub fn set_seed(&mut self, seed: u64, split_follows: bool) {
        self.base.seed = seed;
        if split_follows {
            self.base.split_seed = seed;
        }
    }
}

/// 1-based line of the first `key = ...` assignment.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line - 1)?;
    let (k, _) = l.split_once('=')?;
    let k = k.trim();
    (!k.is_empty() && !k.starts_with('[')).then(|| k.to_string())
}

fn anchored(line: Option<usize>, field: &str, msg: impl std::fmt::Display) -> CliError {
    match line {
        Some(l) => CliError::Config(format!("line {l}: field `{field}`: {msg}")),
        None => CliError::Config(format!("field `{field}`: {msg}")),
    }
}

/// Parses and validates config text. `base_dir` resolves a relative dataset path.
/// Returned flag is true when `split_seed` was not set explicitly.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<(ExperimentConfig, bool), CliError> {
    let raw: ConfigFile = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match e.span() {
            Some(span) => {
                let line = line_of_offset(text, span.start);
                match key_on_line(text, line) {
                    Some(key) => CliError::Config(format!("line {line}: field `{key}`: {msg}")),
                    None => CliError::Config(format!("line {line}: {msg}")),
                }
            }
            None => CliError::Config(msg),
        }
    })?;

    let source = match (raw.dataset, raw.synthetic) {
        (Some(p), None) => DatasetSource::Csv(if p.is_absolute() { p } else { base_dir.join(p) }),
        (None, Some(s)) => DatasetSource::Synthetic(SyntheticParams {
            n: s.n,
            d: s.d,
            n_groups: s.groups,
            noise_sd: s.noise_sd,
            seed: s.seed,
        }),
        (Some(_), Some(_)) => {
            return Err(anchored(line_of_key(text, "dataset"), "dataset", "give either `dataset` or a [synthetic] section, not both"))
        }
        (None, None) => return Err(CliError::Config("field `dataset`: missing (or add a [synthetic] section)".into())),
    };

    if raw.strategies.is_empty() {
        return Err(anchored(line_of_key(text, "strategies"), "strategies", "at least one strategy is required"));
    }
    let mut seen = std::collections::HashSet::new();
    for s in &raw.strategies {
        if !seen.insert(*s) {
            return Err(anchored(line_of_key(text, "strategies"), "strategies", format!("`{s}` listed twice")));
        }
    }

    let mut repetitions = BTreeMap::new();
    for (name, section) in raw.strategy {
        let kind: StrategyKind = name.parse().map_err(|e: String| {
            let line = text.lines().position(|l| l.trim() == format!("[strategy.{name}]")).map(|i| i + 1);
            anchored(line, "strategy", e)
        })?;
        if let Some(r) = section.repetitions {
            repetitions.insert(kind, r);
        }
    }

    let threshold = PovertyThreshold::new(raw.threshold)
        .map_err(|e| anchored(line_of_key(text, "threshold"), "threshold", e))?;
    if !(raw.pool_fraction > 0.0 && raw.pool_fraction < 1.0) {
        return Err(anchored(line_of_key(text, "pool_fraction"), "pool_fraction", "must lie in (0, 1)"));
    }
    if raw.bootstrap.resamples < 100 || !(raw.bootstrap.level > 0.0 && raw.bootstrap.level < 1.0) {
        return Err(anchored(None, "bootstrap", "needs resamples >= 100 and 0 < level < 1"));
    }

    let base = SimulationConfig {
        strategy: raw.strategies[0],
        repetitions: raw.repetitions,
        schedule: raw.schedule,
        forest: raw.forest,
        logistic: raw.logistic,
        threshold,
        seed: raw.seed,
        split_seed: raw.split_seed.unwrap_or(raw.seed),
        pool_fraction: raw.pool_fraction,
        resplit_per_rep: raw.resplit_per_rep,
        pca_k: raw.pca_k,
        cv: raw.cv,
    };
    base.validate().map_err(|e| CliError::Config(e.to_string()))?;
    for (&k, &r) in &repetitions {
        if r == 0 {
            return Err(anchored(None, "strategy", format!("[strategy.{k}] repetitions must be at least 1")));
        }
    }

    let cfg = ExperimentConfig {
        source,
        strategies: raw.strategies,
        output_dir: if raw.output_dir.is_absolute() { raw.output_dir } else { base_dir.join(raw.output_dir) },
        bootstrap: raw.bootstrap,
        base,
        repetitions,
    };
    Ok((cfg, raw.split_seed.is_none()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let text = "dataset = \"d.csv\"\nstrategies = [\"uniform\", \"qbc\"]\noutput_dir = \"out\"\n";
        let (cfg, split_follows) = parse_config(text, Path::new("/tmp/x")).unwrap();
        assert!(split_follows);
        assert_eq!(cfg.source, DatasetSource::Csv(PathBuf::from("/tmp/x/d.csv")));
        assert_eq!(cfg.strategies, vec![StrategyKind::Uniform, StrategyKind::QueryByCommittee]);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x/out"));
        assert_eq!(cfg.base.repetitions, 50);
        assert_eq!(cfg.base.forest, ForestParams::default());
        assert_eq!(cfg.base.schedule, ScheduleParams::default());
    }

    #[test]
    fn unknown_strategy_names_the_field() {
        let text = "dataset = \"d.csv\"\nstrategies = [\"random-forest\"]\n";
        let err = parse_config(text, Path::new(".")).unwrap_err();
        let CliError::Config(msg) = err else { panic!("expected config error") };
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("strategies"), "{msg}");
        assert!(msg.contains("random-forest"), "{msg}");
    }

    #[test]
    fn per_strategy_sections() {
        let text = "dataset = \"d.csv\"\nstrategies = [\"uniform\", \"margin\"]\nrepetitions = 5\n\
                    [strategy.margin]\nrepetitions = 2\n";
        let (cfg, _) = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.for_strategy(StrategyKind::Uniform).repetitions, 5);
        assert_eq!(cfg.for_strategy(StrategyKind::MarginUncertainty).repetitions, 2);

        let bad = "dataset = \"d.csv\"\nstrategies = [\"uniform\"]\n[strategy.bogus]\nrepetitions = 2\n";
        let CliError::Config(msg) = parse_config(bad, Path::new(".")).unwrap_err() else { panic!() };
        assert!(msg.contains("line 3") && msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn validation_errors_are_config_errors() {
        for text in [
            "dataset = \"d.csv\"\nstrategies = []\n",
            "dataset = \"d.csv\"\nstrategies = [\"qbc\", \"qbc\"]\n",
            "dataset = \"d.csv\"\nstrategies = [\"qbc\"]\nthreshold = -1.0\n",
            "dataset = \"d.csv\"\nstrategies = [\"qbc\"]\nrepetitions = 0\n",
            "dataset = \"d.csv\"\nstrategies = [\"qbc\"]\nbogus_key = 1\n",
            "strategies = [\"qbc\"]\n",
            "dataset = \"d.csv\"\nstrategies = [\"qbc\"]\n[cv]\ndepths = []\n",
        ] {
            assert!(matches!(parse_config(text, Path::new(".")), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn synthetic_section() {
        let text = "strategies = [\"uniform\"]\n[synthetic]\nn = 100\nd = 3\ngroups = 2\nseed = 4\n";
        let (cfg, _) = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(
            cfg.source,
            DatasetSource::Synthetic(SyntheticParams { n: 100, d: 3, n_groups: 2, noise_sd: 0.5, seed: 4 })
        );
    }
}
