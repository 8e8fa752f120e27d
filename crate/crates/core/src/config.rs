//! Campaign config files.
//!
//! A campaign file names an operating point and optionally a sweep. Every
//! other section is an override on top of that operating point's preset:
//!
//! ```toml
//! calibration_file = "calibration/default.toml"
//!
//! [campaign]
//! condition = "swarm_6g"
//! seeds = [0, 1, 2, 3, 4]
//! episodes_per_seed = 1500
//!
//! [sweep]
//! kind = "tau"
//! grid = [0.5, 0.7, 0.9]
//!
//! [consensus]
//! tau = 0.7
//! ```
//!
//! `calibration_file` is a top-level key resolved relative to the config
//! file; an inline `[calibration]` table is applied on top of it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::campaign::{Condition, ConditionSpec, RunPlan, SweepKind};
use crate::channel::DensityLossTable;
use crate::error::{Error, Result};
use crate::export::config_hash;
use crate::proxy::ProxyCalibration;

pub const DEFAULT_MASTER_SEED: u64 = 20_241_014;
pub const DEFAULT_CORE_EPISODES: u64 = 1500;
pub const DEFAULT_SWEEP_EPISODES: u64 = 300;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCampaign {
    condition: String,
    master_seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    episodes_per_seed: Option<u64>,
    parallelism: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    kind: String,
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    campaign: RawCampaign,
    sweep: Option<RawSweep>,
    calibration_file: Option<PathBuf>,
    scenario: Option<toml::Table>,
    consensus: Option<toml::Table>,
    channel: Option<toml::Table>,
    calibration: Option<toml::Table>,
    density_loss: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
}

/// A fully resolved campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub condition: Condition,
    pub sweep: Option<SweepConfig>,
    pub plan: RunPlan,
    pub spec: ConditionSpec,
    pub density_loss: DensityLossTable,
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub episodes_per_seed: Option<u64>,
    pub parallelism: Option<usize>,
}

fn table<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).expect("section serializes to a table")
}

fn merge<T: Serialize + DeserializeOwned + Clone>(base: &T, section: &str, overrides: Option<toml::Table>) -> Result<T> {
    let Some(overrides) = overrides else {
        return Ok(base.clone());
    };
    let mut value = table(base);
    for (k, v) in overrides {
        value.insert(k, v);
    }
    value.try_into().map_err(|e: toml::de::Error| {
        Error::config(section, e.message().trim().to_string())
    })
}

fn parse_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim().to_string(),
    })
}

/// Loads a standalone calibration file.
pub fn load_calibration(path: &Path) -> Result<ProxyCalibration> {
    let table: toml::Table = parse_file(path)?;
    let calib = merge(&ProxyCalibration::default(), "calibration", Some(table))?;
    calib.validate()?;
    Ok(calib)
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &Overrides::default())
    }

    pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawFile = parse_file(path)?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        Self::resolve(raw, base_dir, overrides)
    }

    /// Parses config text; `calibration_file` is resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string().trim().to_string(),
        })?;
        Self::resolve(raw, base_dir, overrides)
    }

    fn resolve(raw: RawFile, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let condition = Condition::parse(&raw.campaign.condition).ok_or_else(|| {
            Error::config(
                "campaign.condition",
                format!("unknown condition `{}`", raw.campaign.condition),
            )
        })?;
        let sweep = raw
            .sweep
            .map(|s| -> Result<SweepConfig> {
                let kind = SweepKind::parse(&s.kind)?;
                let grid = s.grid.unwrap_or_else(|| kind.default_grid());
                Ok(SweepConfig { kind, grid })
            })
            .transpose()?;

        let preset = ConditionSpec::preset(condition);
        let mut calibration = preset.calibration.clone();
        if let Some(file) = &raw.calibration_file {
            calibration = load_calibration(&base_dir.join(file))?;
        }
        let spec = ConditionSpec {
            scenario: merge(&preset.scenario, "scenario", raw.scenario)?,
            consensus: merge(&preset.consensus, "consensus", raw.consensus)?,
            channel: merge(&preset.channel, "channel", raw.channel)?,
            calibration: merge(&calibration, "calibration", raw.calibration)?,
            ..preset
        };
        let density_loss = merge(&DensityLossTable::default(), "density_loss", raw.density_loss)?;

        let default_episodes = if sweep.is_some() {
            DEFAULT_SWEEP_EPISODES
        } else {
            DEFAULT_CORE_EPISODES
        };
        let plan = RunPlan {
            master_seed: raw.campaign.master_seed.unwrap_or(DEFAULT_MASTER_SEED),
            seeds: overrides
                .seeds
                .clone()
                .or(raw.campaign.seeds)
                .unwrap_or_else(|| (0..5).collect()),
            episodes_per_seed: overrides
                .episodes_per_seed
                .or(raw.campaign.episodes_per_seed)
                .unwrap_or(default_episodes),
            parallelism: overrides.parallelism.or(raw.campaign.parallelism).unwrap_or(0),
        };
        let config = Self {
            condition,
            sweep,
            plan,
            spec,
            density_loss,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every invariant, including each sweep grid point.
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.spec.validate()?;
        self.density_loss.validate("density_loss.anchors")?;
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return Err(Error::config("sweep.grid", "must not be empty"));
            }
            for &v in &sweep.grid {
                self.spec
                    .at_grid_point(sweep.kind, v, &self.density_loss)
                    .map_err(|e| match e {
                        Error::Config { key, reason } => Error::config(
                            key,
                            format!("{reason} (at {} = {v})", sweep.kind.as_str()),
                        ),
                        other => other,
                    })?;
            }
        }
        Ok(())
    }

    /// Label for summary rows and run ids.
    pub fn label(&self) -> String {
        match &self.sweep {
            Some(s) => s.kind.label(),
            None => self.condition.as_str().to_string(),
        }
    }

    /// Canonical bytes the config hash is computed over. Parallelism and seed
    /// order do not affect results and are normalized away.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut c = self.clone();
        c.plan.parallelism = 0;
        c.plan.seeds.sort_unstable();
        serde_json::to_vec(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical_bytes())
    }

    /// Deterministic run id: label plus a config-hash prefix.
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.label(), &self.hash()[..12])
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        let mut doc = toml::Table::new();
        let mut campaign = toml::Table::new();
        campaign.insert("condition".into(), self.condition.as_str().into());
        campaign.insert("master_seed".into(), toml::Value::Integer(self.plan.master_seed as i64));
        campaign.insert(
            "seeds".into(),
            toml::Value::Array(self.plan.seeds.iter().map(|&s| toml::Value::Integer(s as i64)).collect()),
        );
        campaign.insert(
            "episodes_per_seed".into(),
            toml::Value::Integer(self.plan.episodes_per_seed as i64),
        );
        campaign.insert("parallelism".into(), toml::Value::Integer(self.plan.parallelism as i64));
        doc.insert("campaign".into(), campaign.into());
        if let Some(s) = &self.sweep {
            let mut sweep = toml::Table::new();
            sweep.insert("kind".into(), s.kind.as_str().into());
            sweep.insert(
                "grid".into(),
                toml::Value::Array(s.grid.iter().map(|&g| g.into()).collect()),
            );
            doc.insert("sweep".into(), sweep.into());
        }
        doc.insert("scenario".into(), table(&self.spec.scenario).into());
        doc.insert("consensus".into(), table(&self.spec.consensus).into());
        doc.insert("channel".into(), table(&self.spec.channel).into());
        doc.insert("calibration".into(), table(&self.spec.calibration).into());
        doc.insert("density_loss".into(), table(&self.density_loss).into());
        toml::to_string(&doc).expect("config renders")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<CampaignConfig> {
        CampaignConfig::from_toml_str(text, Path::new("."), &Overrides::default())
    }

    #[test]
    fn minimal_config_uses_presets() {
        let c = load("[campaign]\ncondition = \"swarm_6g\"\n").unwrap();
        assert_eq!(c.spec, ConditionSpec::preset(Condition::Swarm6g));
        assert_eq!(c.plan.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.plan.episodes_per_seed, DEFAULT_CORE_EPISODES);
    }

    #[test]
    fn sweeps_default_to_their_grid() {
        let c = load("[campaign]\ncondition = \"swarm_6g\"\n[sweep]\nkind = \"tau\"\n").unwrap();
        let s = c.sweep.unwrap();
        assert_eq!(s.grid.len(), 8);
        assert_eq!(c.plan.episodes_per_seed, DEFAULT_SWEEP_EPISODES);
    }

    #[test]
    fn tau_out_of_range_names_tau() {
        let err = load("[campaign]\ncondition = \"swarm_6g\"\n[consensus]\ntau = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn decreasing_anchors_name_the_table() {
        let err = load(
            "[campaign]\ncondition = \"swarm_6g\"\n[density_loss]\nanchors = [[2, 0.2], [4, 0.1]]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("density_loss"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load("[campaign]\ncondition = \"swarm_6g\"\n[scenario]\negospeed = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("egospeed"), "{err}");
        let err = load("[campaign]\ncondition = \"cloud\"\n").unwrap_err();
        assert!(err.to_string().contains("campaign.condition"));
        let err = load("[campaign]\ncondition = \"swarm_6g\"\n[sweep]\nkind = \"rain\"\n").unwrap_err();
        assert!(err.to_string().contains("sweep.kind"));
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seeds: Some(vec![9]),
            episodes_per_seed: Some(10),
            parallelism: Some(2),
        };
        let c = CampaignConfig::from_toml_str("[campaign]\ncondition = \"single_local\"\nseeds = [1, 2]\n", Path::new("."), &o)
            .unwrap();
        assert_eq!(c.plan.seeds, vec![9]);
        assert_eq!(c.plan.episodes_per_seed, 10);
    }

    #[test]
    fn hash_ignores_parallelism_and_round_trips() {
        let a = load("[campaign]\ncondition = \"swarm_6g\"\nparallelism = 1\n").unwrap();
        let b = load("[campaign]\ncondition = \"swarm_6g\"\nparallelism = 8\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let again = load(&a.to_toml()).unwrap();
        assert_eq!(again.hash(), a.hash());
    }
}
