use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use skyblock::blocking::{predicate_universe, BlockingFunction};
use skyblock::datamodel::{load_dataset, load_ground_truth, load_linkage, GroundTruth, IngestConfig, TruthConfig};
use skyblock::harness::Fixture;
use skyblock::index::BlockingIndex;
use skyblock::learner::Algorithm;
use skyblock::scheme::Scheme;

/// Every setting can come from the config file or a flag; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Records file (header row, id column plus attributes)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Second source for record linkage
    #[arg(long)]
    pub right: Option<PathBuf>,
    /// Ground-truth matches, two id columns per line
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub truth_header: Option<bool>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub id_column: Option<String>,
    /// Attribute subset, comma separated
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
    /// Blocking functions, e.g. exact,soundex,dmetaphone,substr4
    #[arg(long, value_delimiter = ',')]
    pub functions: Option<Vec<String>>,

    /// asl, rsl, naive_sky, active_sky or pro_sky
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Largest number of predicates in a pro_sky scheme
    #[arg(long)]
    pub max_ary: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,

    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub target_cs: Option<f64>,
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
    /// Fixed scheme to compare against, as name=scheme
    #[arg(long = "preset")]
    pub presets: Option<Vec<String>>,
    /// Budget for the per-preset ASL run; skipped when absent
    #[arg(long)]
    pub baseline_budget: Option<usize>,

    /// Report output path; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub points_csv: Option<PathBuf>,
    /// Where to write the labeled pairs of the run
    #[arg(long)]
    pub labels: Option<PathBuf>,

    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        Options { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Options {
    pub fn load(path: &Path) -> Result<Options> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Values set here take precedence over `base`.
    pub fn over(self, base: Options) -> Options {
        let (hi, lo) = (self, base);
        overlay!(hi, lo;
            dataset, right, truth, truth_header, delimiter, id_column, attributes, functions,
            algorithm, budget, seed, epsilon, delta, max_ary, k, depth,
            repetitions, target_cs, start, step, cap, presets, baseline_budget,
            out, points_csv, labels, addr, log_dir,
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn budget(&self) -> Result<usize> {
        self.budget.ok_or_else(|| anyhow!("--budget is required"))
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        let name = self.algorithm.as_deref().ok_or_else(|| anyhow!("--algorithm is required"))?;
        self.algorithm_named(name)
    }

    pub fn algorithm_named(&self, name: &str) -> Result<Algorithm> {
        let epsilon = || self.epsilon.ok_or_else(|| anyhow!("{name} needs --epsilon"));
        let delta = || self.delta.ok_or_else(|| anyhow!("{name} needs --delta"));
        let k = || self.k.ok_or_else(|| anyhow!("{name} needs --k"));
        let depth = self.depth.unwrap_or(3);
        Ok(match name {
            "asl" => Algorithm::Asl { epsilon: epsilon()?, k: k()? },
            "rsl" => Algorithm::Rsl { epsilon: epsilon()?, k: k()? },
            "naive" | "naive_sky" => Algorithm::NaiveSky { delta: delta()?, k: self.k, depth },
            "active" | "active_sky" => Algorithm::ActiveSky { delta: delta()?, k: self.k, depth },
            "pro" | "pro_sky" => Algorithm::ProSky { max_ary: self.max_ary.unwrap_or(3) },
            other => bail!("unknown algorithm `{other}`"),
        })
    }

    pub fn load_index(&self) -> Result<Arc<BlockingIndex>> {
        let path = self.dataset.as_ref().ok_or_else(|| anyhow!("--dataset is required"))?;
        let mut ingest = IngestConfig::default();
        if let Some(d) = self.delimiter {
            ingest.delimiter = d;
        }
        if let Some(id) = &self.id_column {
            ingest.id_column = id.clone();
        }
        ingest.attributes = self.attributes.clone();
        let dataset = match &self.right {
            Some(right) => load_linkage(path, right, &ingest)?,
            None => load_dataset(path, &ingest)?,
        };
        let functions = match &self.functions {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<BlockingFunction>, _>>()?,
            None => BlockingFunction::standard(),
        };
        let preds = predicate_universe(dataset.schema(), &functions);
        Ok(Arc::new(BlockingIndex::new(Arc::new(dataset), preds)?))
    }

    pub fn load_truth(&self, index: &BlockingIndex) -> Result<Option<Arc<GroundTruth>>> {
        let Some(path) = &self.truth else { return Ok(None) };
        let cfg = TruthConfig {
            delimiter: self.delimiter.unwrap_or(','),
            has_header: self.truth_header.unwrap_or(false),
        };
        Ok(Some(Arc::new(load_ground_truth(path, index.dataset(), &cfg)?)))
    }

    pub fn fixture(&self) -> Result<Fixture> {
        let index = self.load_index()?;
        let truth = self
            .load_truth(&index)?
            .ok_or_else(|| anyhow!("--truth is required for this command"))?;
        Ok(Fixture { index, truth })
    }

    pub fn presets(&self, index: &BlockingIndex) -> Result<Vec<(String, Scheme)>> {
        self.presets
            .iter()
            .flatten()
            .map(|p| {
                let (name, text) = p.split_once('=').ok_or_else(|| anyhow!("preset `{p}` is not name=scheme"))?;
                let scheme = Scheme::parse(text, index.predicates()).with_context(|| format!("preset `{name}`"))?;
                Ok((name.trim().to_string(), scheme))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Options = toml::from_str("budget = 100\nseed = 4\nalgorithm = \"pro_sky\"").unwrap();
        let flags = Options {
            budget: Some(300),
            ..Default::default()
        };
        let o = flags.over(file);
        assert_eq!(o.budget, Some(300));
        assert_eq!(o.seed, Some(4));
        assert_eq!(o.algorithm().unwrap(), Algorithm::ProSky { max_ary: 3 });
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Options>("budgett = 1").is_err());
    }

    #[test]
    fn algorithm_needs_its_parameters() {
        let o = Options {
            epsilon: Some(0.8),
            ..Default::default()
        };
        assert!(o.algorithm_named("asl").is_err());
        assert!(o.algorithm_named("active").is_err());
        assert!(o.algorithm_named("bogus").is_err());
    }
}
