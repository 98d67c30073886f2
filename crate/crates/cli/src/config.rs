use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use probit_mixing::datagen::{gen_design, gen_responses, DesignScheme, ResponseScheme};
use probit_mixing::farm::{replicate_seed, rng_for, stream_id};
use probit_mixing::io::{read_design_csv, read_model_bundle, read_responses_csv};
use probit_mixing::model::{PriorSpec, ProbitModel};
use probit_mixing::samplers::{Kernel, RunSettings};
use serde::{Deserialize, Serialize};

/// Where a cell's data come from: a generated design with responses, a saved
/// model bundle, or a pair of CSV files with a prior.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DataSource {
    pub design: Option<DesignScheme>,
    pub responses: Option<ResponseScheme>,
    pub prior: Option<PriorSpec>,
    pub model_file: Option<PathBuf>,
    pub design_csv: Option<PathBuf>,
    pub responses_csv: Option<PathBuf>,
    #[serde(default)]
    pub has_header: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellConfig {
    pub label: String,
    #[serde(flatten)]
    pub data: DataSource,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<Kernel>,
    /// Reference values, keyed by kernel name, used by `--check`.
    #[serde(default)]
    pub reference: BTreeMap<String, f64>,
    #[serde(default)]
    pub lag: Option<usize>,
}

fn default_kernels() -> Vec<Kernel> {
    vec![Kernel::Da]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleConfig {
    pub kernel: Kernel,
    #[serde(flatten)]
    pub run: RunSettings,
    #[serde(default)]
    pub include_z: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Lag; commands pick their own default when absent.
    #[serde(default)]
    pub lag: Option<usize>,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// Overrides the per-kernel coupling switch threshold.
    #[serde(default)]
    pub coupling_epsilon: Option<f64>,
    #[serde(default = "default_sigma")]
    pub rwm_sigma: f64,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    pub cells: Vec<CellConfig>,
}

fn default_seed() -> u64 {
    1
}
fn default_replicates() -> usize {
    500
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_max_sweeps() -> usize {
    100_000
}
fn default_sigma() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        let config: ScenarioConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(text).with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(text).with_context(|| format!("parsing {}", path.display()))?,
        };
        config.validate()?;
        Ok((config, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bail!("epsilon must lie in (0, 1)");
        }
        if self.cells.is_empty() {
            bail!("config defines no cells");
        }
        let mut seen = std::collections::BTreeSet::new();
        for cell in &self.cells {
            if !seen.insert(cell.label.as_str()) {
                bail!("duplicate cell label '{}'", cell.label);
            }
            if cell.kernels.is_empty() {
                bail!("cell '{}' lists no kernels", cell.label);
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the model of a cell. Generated data draw from a stream keyed by the
/// cell label, so a cell's data do not depend on which other cells run.
pub fn build_model(cell: &CellConfig, master_seed: u64, base_dir: &Path) -> Result<(ProbitModel, Option<Vec<f64>>)> {
    let d = &cell.data;
    match (&d.design, &d.model_file, &d.design_csv) {
        (Some(design), None, None) => {
            let prior = d.prior.as_ref().context("generated data need a prior")?;
            let responses = d.responses.context("generated data need a response scheme")?;
            let mut rng = rng_for(replicate_seed(master_seed, stream_id(&cell.label), u64::MAX));
            let x = gen_design(design, &mut rng)?;
            let (y, beta) = gen_responses(responses, &x, prior, &mut rng)?;
            let model = ProbitModel::new(x, y, prior.clone())?;
            Ok((model, beta.map(|b| b.iter().copied().collect())))
        }
        (None, Some(file), None) => Ok((read_model_bundle(&resolve(base_dir, file))?, None)),
        (None, None, Some(design_csv)) => {
            let prior = d.prior.as_ref().context("CSV data need a prior")?;
            let responses_csv = d.responses_csv.as_ref().context("CSV data need responses_csv")?;
            let x = read_design_csv(File::open(resolve(base_dir, design_csv))?, d.has_header)?;
            let y = read_responses_csv(File::open(resolve(base_dir, responses_csv))?, d.has_header)?;
            Ok((ProbitModel::new(x, y, prior.clone())?, None))
        }
        _ => bail!(
            "cell '{}' must set exactly one of design, model_file or design_csv",
            cell.label
        ),
    }
}
