//! Run file handling: which config files to read, the master seed and where
//! outputs go. Command-line flags override the run file.

use cqed_fort::config::{self, ExperimentFile, KeyValues};
use cqed_fort::protocol::ProtocolConfig;
use cqed_fort::{AtomSpecies, CavityQedParams, Error, FortConfig, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params_file: Option<PathBuf>,
    pub fort_file: Option<PathBuf>,
    pub psd_file: Option<PathBuf>,
    pub timing_file: Option<PathBuf>,
    pub experiment_file: Option<PathBuf>,
    pub master_seed: u64,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params_file: None,
            fort_file: None,
            psd_file: None,
            timing_file: None,
            experiment_file: None,
            master_seed: 1,
            out_dir: None,
            format: Format::Csv,
        }
    }
}

impl RunConfig {
    /// Parse a run file; paths inside it are relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut kv = KeyValues::read(path)?;
        let mut rc = RunConfig::default();
        let mut file = |key: &str| kv.string(key).map(|p| config::resolve(path, &p));
        rc.params_file = file("params_file");
        rc.fort_file = file("fort_file");
        rc.psd_file = file("psd_file");
        rc.timing_file = file("timing_file");
        rc.experiment_file = file("experiment_file");
        rc.out_dir = file("out_dir");
        if let Some(s) = kv.u64("master_seed")? {
            rc.master_seed = s;
        }
        if let Some(f) = kv.string("format") {
            rc.format = match f.as_str() {
                "csv" => Format::Csv,
                "json" => Format::Json,
                other => {
                    return Err(Error::Config(format!(
                        "{}: format must be csv or json, got `{other}`",
                        path.display()
                    )))
                }
            };
        }
        kv.finish()?;
        Ok(rc)
    }
}

/// Everything the subcommands need, after defaults and overrides.
#[derive(Debug, Clone, Serialize)]
pub struct Setup {
    pub params: CavityQedParams,
    pub species: AtomSpecies,
    pub fort: FortConfig,
    pub protocol: ProtocolConfig,
    pub experiment: ExperimentFile,
}

impl Setup {
    pub fn load(rc: &RunConfig) -> Result<Self> {
        let (params, species) = match &rc.params_file {
            Some(p) => config::load_params(p)?,
            None => (CavityQedParams::default(), AtomSpecies::cesium()),
        };
        let mut fort = match &rc.fort_file {
            Some(p) => config::load_fort(p)?,
            None => FortConfig::lifetime_profile(),
        };
        if let Some(p) = &rc.psd_file {
            let extrapolate = fort.noise_psd.extrapolation_enabled();
            fort.noise_psd = config::load_psd_csv(p)?.with_extrapolation(extrapolate);
        }
        let protocol = match &rc.timing_file {
            Some(p) => config::load_protocol(p, &params, &species, fort.clone())?,
            None => {
                let mut c = ProtocolConfig::new(&params, &species);
                c.fort = fort.clone();
                c.validate(&params)?;
                c
            }
        };
        let experiment = match &rc.experiment_file {
            Some(p) => config::load_experiment(p)?,
            None => ExperimentFile::default(),
        };
        Ok(Setup {
            params,
            species,
            fort,
            protocol,
            experiment,
        })
    }
}
