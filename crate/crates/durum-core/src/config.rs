//! Configuration file schemas: the world (regions, markets, transport) and
//! the scenario (run lengths, population source, agronomy, policy schedule,
//! outputs). Both are TOML with a `schema_version` field.
//!
//! Relative paths inside a scenario file resolve against the file's own
//! directory, so scenario bundles can be moved around freely.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agronomy::{AgronomyParams, StressKind, StressParams};
use crate::error::{Error, Result};
use crate::lca::CharacterizationMatrix;
use crate::policy::PolicyScheme;
use crate::population::{self, SyntheticPopulation};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// World config
// ---------------------------------------------------------------------------

/// Region or weighted-region entry in a market membership list. A bare
/// string splits the region's curve evenly across its memberships; a
/// weighted entry allocates an explicit share (shares per region must sum
/// to 1 across markets).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MemberSpec {
    Plain(String),
    Weighted { region: String, share: f64 },
}

impl MemberSpec {
    pub fn region(&self) -> &str {
        match self {
            MemberSpec::Plain(r) => r,
            MemberSpec::Weighted { region, .. } => region,
        }
    }

    pub fn share(&self) -> Option<f64> {
        match self {
            MemberSpec::Plain(_) => None,
            MemberSpec::Weighted { share, .. } => Some(*share),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RegionConfig {
    pub id: String,
    pub name: String,
    pub role: String,
    pub base_supply: f64,
    pub base_demand: f64,
    pub supply_slope: f64,
    pub demand_slope: f64,
    pub location: usize,
    #[serde(default)]
    pub supply_by_season: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MarketConfig {
    pub id: String,
    pub producers: Vec<MemberSpec>,
    pub buyers: Vec<MemberSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TransportConfig {
    /// Square matrix of currency/tonne rates between location zones.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WorldConfig {
    pub schema_version: u32,
    pub reference_price: f64,
    pub italy_region: String,
    pub italy_market: String,
    pub italy_price_band: (f64, f64),
    pub clearing_order: Vec<String>,
    pub transport: TransportConfig,
    pub region: Vec<RegionConfig>,
    pub market: Vec<MarketConfig>,
}

impl WorldConfig {
    /// The bundled baseline world (24 regions, 12 markets).
    pub fn builtin() -> WorldConfig {
        toml::from_str(include_str!("../fixtures/world_baseline.toml"))
            .expect("bundled world config parses")
    }

    pub fn load(path: &Path) -> Result<WorldConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: WorldConfig = toml::from_str(&text).map_err(|e| Error::BadFile {
            path: path.into(),
            msg: e.to_string(),
        })?;
        config.validate_schema()?;
        Ok(config)
    }

    pub fn validate_schema(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "world config schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.reference_price >= 0.0) {
            return Err(Error::Config("reference_price must be >= 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scenario config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct RunSection {
    seasons: usize,
    seed: u64,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PopulationSection {
    /// Cluster a microdata file and synthesize `size` farms.
    Generate {
        records: PathBuf,
        clusters: usize,
        size: usize,
        #[serde(default = "default_z_threshold")]
        z_threshold: f64,
    },
    /// Load a previously exported population.
    File { path: PathBuf },
}

fn default_z_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
struct WorldSection {
    #[serde(default)]
    builtin: Option<String>,
    #[serde(default)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
struct StressOverride {
    #[serde(default)]
    loss_share: Option<f64>,
    #[serde(default)]
    response_rate: Option<f64>,
    #[serde(default)]
    input_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ClusterYieldOverride {
    cluster: usize,
    range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
struct AgronomySection {
    #[serde(default)]
    size_threshold_ha: Option<f64>,
    #[serde(default)]
    sigma_log: Option<f64>,
    #[serde(default)]
    liters_per_hour: Option<f64>,
    #[serde(default)]
    reference_price: Option<f64>,
    #[serde(default)]
    yield_range: Option<(f64, f64)>,
    #[serde(default)]
    cluster_yield: Vec<ClusterYieldOverride>,
    #[serde(default)]
    stress: BTreeMap<String, StressOverride>,
}

impl AgronomySection {
    fn into_params(self) -> Result<AgronomyParams> {
        let mut params = AgronomyParams::default();
        if let Some(v) = self.size_threshold_ha {
            params.size_threshold_ha = v;
        }
        if let Some(v) = self.sigma_log {
            params.sigma_log = v;
        }
        if let Some(v) = self.liters_per_hour {
            params.liters_per_hour = v;
        }
        if let Some(v) = self.reference_price {
            params.reference_price = v;
        }
        if let Some(v) = self.yield_range {
            params.yield_range = v;
        }
        for o in self.cluster_yield {
            params.cluster_yield_ranges.insert(o.cluster, o.range);
        }
        for (name, o) in self.stress {
            let kind = StressKind::ALL
                .iter()
                .find(|k| k.name() == name)
                .copied()
                .ok_or_else(|| Error::Config(format!("unknown stress kind `{name}`")))?;
            let slot: &mut StressParams = &mut params.stress[kind.index()];
            if let Some(v) = o.loss_share {
                slot.loss_share = v;
            }
            if let Some(v) = o.response_rate {
                slot.response_rate = v;
            }
            if let Some(v) = o.input_price {
                slot.input_price = v;
            }
        }
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
struct LcaSection {
    #[serde(default)]
    midpoint: Option<PathBuf>,
    #[serde(default)]
    endpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct OutputSection {
    /// Write every k-th farm to `farms_<season>.csv`; 0 disables the file.
    #[serde(default = "default_export_every")]
    farm_export_every: usize,
}

fn default_export_every() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            farm_export_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    run: RunSection,
    population: PopulationSection,
    #[serde(default)]
    world: WorldSection,
    #[serde(default)]
    agronomy: AgronomySection,
    #[serde(default)]
    lca: LcaSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    initial_price: Option<f64>,
    #[serde(default)]
    policy: Vec<PolicyScheme>,
}

/// A fully validated scenario: every referenced file has been read.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seasons: usize,
    pub seed: u64,
    pub workers: usize,
    pub population: PopulationSection,
    pub world: WorldConfig,
    pub agronomy: AgronomyParams,
    pub matrix: CharacterizationMatrix,
    pub farm_export_every: usize,
    /// Wheat price farms use in season 0 (defaults to the world reference).
    pub initial_price: f64,
    pub policy: Vec<PolicyScheme>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| Error::BadFile {
            path: path.into(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(file, base)
    }

    fn resolve(file: ScenarioFile, base: &Path) -> Result<ScenarioConfig> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "scenario schema_version {} unsupported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.run.seasons == 0 {
            return Err(Error::Config("run.seasons must be >= 1".into()));
        }
        let workers = file.run.workers.unwrap_or(1);
        if workers == 0 {
            return Err(Error::Config("run.workers must be >= 1".into()));
        }

        let rebase = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };

        let population = match file.population {
            PopulationSection::Generate {
                records,
                clusters,
                size,
                z_threshold,
            } => {
                if size == 0 {
                    return Err(Error::Config("population.size must be >= 1".into()));
                }
                if clusters == 0 {
                    return Err(Error::Config("population.clusters must be >= 1".into()));
                }
                let records = rebase(&records);
                if !records.exists() {
                    return Err(Error::Config(format!(
                        "population.records `{}` does not exist",
                        records.display()
                    )));
                }
                PopulationSection::Generate {
                    records,
                    clusters,
                    size,
                    z_threshold,
                }
            }
            PopulationSection::File { path } => {
                let path = rebase(&path);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "population.path `{}` does not exist",
                        path.display()
                    )));
                }
                PopulationSection::File { path }
            }
        };

        let world = match (&file.world.builtin, &file.world.config) {
            (Some(name), None) => {
                if name != "baseline" {
                    return Err(Error::Config(format!(
                        "unknown builtin world `{name}` (available: baseline)"
                    )));
                }
                WorldConfig::builtin()
            }
            (None, Some(p)) => WorldConfig::load(&rebase(p))?,
            (None, None) => WorldConfig::builtin(),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "world: set either `builtin` or `config`, not both".into(),
                ))
            }
        };

        let matrix = match (&file.lca.midpoint, &file.lca.endpoint) {
            (None, None) => CharacterizationMatrix::builtin(),
            (Some(m), Some(e)) => CharacterizationMatrix::load(&rebase(m), &rebase(e))?,
            _ => {
                return Err(Error::Config(
                    "lca: midpoint and endpoint matrices must be given together".into(),
                ))
            }
        };

        for scheme in &file.policy {
            scheme.validate()?;
        }

        let agronomy = file.agronomy.into_params()?;
        let initial_price = file.initial_price.unwrap_or(world.reference_price);
        if !(initial_price > 0.0) {
            return Err(Error::Config("initial_price must be > 0".into()));
        }

        Ok(ScenarioConfig {
            seasons: file.run.seasons,
            seed: file.run.seed,
            workers,
            population,
            world,
            agronomy,
            matrix,
            farm_export_every: file.output.farm_export_every,
            initial_price,
            policy: file.policy,
        })
    }

    /// Produce the synthetic population this scenario runs on.
    pub fn build_population(&self) -> Result<SyntheticPopulation> {
        match &self.population {
            PopulationSection::Generate {
                records,
                clusters,
                size,
                z_threshold,
            } => {
                let records = population::load_farm_records(records)?;
                let records = population::remove_outliers(&records, *z_threshold)?;
                let specs = population::cluster(&records, *clusters, self.seed)?;
                population::synthesize_population(&specs, *size, self.seed)
            }
            PopulationSection::File { path } => population::load_population(path),
        }
    }

    /// Schemes active in a given season, in config order.
    pub fn schemes_for_season(&self, season: usize) -> Vec<PolicyScheme> {
        self.policy
            .iter()
            .filter(|s| s.active_in(season))
            .cloned()
            .collect()
    }
}
