//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survcobra::data::{generate_synthetic, load_csv, preprocess, read_raw_table, ColumnSchema, SyntheticConfig};
use survcobra::learners::LearnerSpec;
use survcobra::tuning::{Objective, SearchSpace};
use survcobra::SurvivalDataset;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in report rows; defaults to the data file stem or `synthetic`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::folds")]
    pub folds: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    /// Base learners; the five-learner default roster when absent.
    #[serde(default)]
    pub roster: Option<Vec<LearnerSpec>>,
    /// Fixed ensemble parameters. Mutually exclusive with `search`.
    #[serde(default)]
    pub cobra: Option<FixedParams>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub relevance: RelevanceConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file, resolved against the config file's directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "defaults::time_col")]
    pub time_col: String,
    #[serde(default = "defaults::event_col")]
    pub event_col: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::censor_fraction")]
    pub censor_fraction: f64,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    /// Defaults to the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n: defaults::n(), censor_fraction: defaults::censor_fraction(), dim: defaults::dim(), seed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub l_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::inner_folds")]
    pub inner_folds: usize,
    /// `ibs` for `tune`, `neg_concordance` for relevance studies when absent.
    #[serde(default)]
    pub objective: Option<Objective>,
    #[serde(default)]
    pub epsilon_range: Option<(f64, f64)>,
    #[serde(default)]
    pub alpha_choices: Option<Vec<f64>>,
    #[serde(default)]
    pub l_fraction_choices: Option<Vec<f64>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            trials: defaults::trials(),
            inner_folds: defaults::inner_folds(),
            objective: None,
            epsilon_range: None,
            alpha_choices: None,
            l_fraction_choices: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceConfig {
    #[serde(default = "defaults::queries")]
    pub queries: usize,
    #[serde(default = "defaults::l2")]
    pub l2: f64,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        Self { queries: defaults::queries(), l2: defaults::l2() }
    }
}

mod defaults {
    pub fn folds() -> usize {
        5
    }
    pub fn time_col() -> String {
        "time".into()
    }
    pub fn event_col() -> String {
        "event".into()
    }
    pub fn n() -> usize {
        2000
    }
    pub fn censor_fraction() -> f64 {
        0.4
    }
    pub fn dim() -> usize {
        9
    }
    pub fn trials() -> usize {
        200
    }
    pub fn inner_folds() -> usize {
        3
    }
    pub fn queries() -> usize {
        100
    }
    pub fn l2() -> f64 {
        1e-4
    }
}

/// How the ensemble parameters are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    Fixed(FixedParams),
    Search(SearchConfig),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` and resolves the data path against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn roster(&self) -> Vec<LearnerSpec> {
        self.roster.clone().unwrap_or_else(|| LearnerSpec::default_roster(self.seed))
    }

    pub fn param_source(&self) -> Result<ParamSource, CliError> {
        match (&self.cobra, &self.search) {
            (Some(p), None) => Ok(ParamSource::Fixed(*p)),
            (None, Some(s)) => Ok(ParamSource::Search(s.clone())),
            (None, None) => Err(CliError::Config("supply either [cobra] fixed parameters or a [search] table".into())),
            (Some(_), Some(_)) => Err(CliError::Config("[cobra] and [search] are mutually exclusive".into())),
        }
    }

    pub fn search_space(&self, search: &SearchConfig, default_objective: Objective, seed: u64) -> SearchSpace {
        let base = SearchSpace::for_roster(self.roster().len(), search.trials, search.objective.unwrap_or(default_objective), seed);
        SearchSpace {
            epsilon_range: search.epsilon_range.unwrap_or(base.epsilon_range),
            alpha_choices: search.alpha_choices.clone().unwrap_or(base.alpha_choices),
            l_fraction_choices: search.l_fraction_choices.clone().unwrap_or(base.l_fraction_choices),
            ..base
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        let s = self.data.synthetic.clone().unwrap_or_default();
        SyntheticConfig { n: s.n, censor_fraction: s.censor_fraction, dim: s.dim, seed: s.seed.unwrap_or(self.seed) }
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.data.path {
            Some(p) => p.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()),
            None => "synthetic".into(),
        }
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.path.is_some() && self.data.synthetic.is_some() {
            return Err(CliError::Config("[data] takes either path or [data.synthetic], not both".into()));
        }
        if self.folds < 2 {
            return Err(CliError::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        let roster = self.roster();
        if roster.is_empty() {
            return Err(CliError::Config("roster is empty".into()));
        }
        for spec in &roster {
            spec.validate()?;
        }
        if self.data.path.is_none() {
            self.synthetic_config().validate()?;
        }
        match self.param_source()? {
            ParamSource::Fixed(p) => {
                survcobra::CobraParams { epsilon: p.epsilon, alpha: p.alpha, l_fraction: p.l_fraction, roster }.validate()?;
            }
            ParamSource::Search(s) => {
                let space = self.search_space(&s, Objective::Ibs, self.seed);
                space.validate()?;
                for &a in &space.alpha_choices {
                    survcobra::CobraParams { epsilon: 0.5, alpha: a, l_fraction: 0.5, roster: roster.clone() }.validate()?;
                }
                if s.inner_folds < 2 {
                    return Err(CliError::Config(format!("inner_folds must be at least 2, got {}", s.inner_folds)));
                }
            }
        }
        if !(self.relevance.l2 >= 0.0) {
            return Err(CliError::Config("relevance.l2 must be nonnegative".into()));
        }
        Ok(())
    }

    /// Loads the CSV named by `data.path`, or generates the synthetic design.
    pub fn load_dataset(&self) -> Result<SurvivalDataset, CliError> {
        match &self.data.path {
            Some(path) if self.data.categorical.is_empty() => {
                Ok(load_csv(path, &self.data.time_col, &self.data.event_col)?)
            }
            Some(path) => {
                let raw = read_raw_table(path)?;
                let schema = ColumnSchema {
                    time_col: self.data.time_col.clone(),
                    event_col: self.data.event_col.clone(),
                    categorical: self.data.categorical.clone(),
                };
                Ok(preprocess(&raw, &schema)?)
            }
            None => Ok(generate_synthetic(&self.synthetic_config())?),
        }
    }
}
