//! JSON study configurations and their translation into core types.

use nmot_core::{
    ActionDensity, EnergyFunctional, Error, Measure1D, Mobility, Result, RhoStarRule,
    SolverOptions,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Mobility as written in config files:
/// `{"kind":"logistic","M":1.0}`, `{"kind":"linear","M":1.0}`, or
/// `{"kind":"table","M":..,"rho":[..],"m":[..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MobilitySpec {
    Linear {
        #[serde(rename = "M")]
        max_density: f64,
    },
    Logistic {
        #[serde(rename = "M")]
        max_density: f64,
    },
    Table {
        #[serde(rename = "M")]
        max_density: f64,
        rho: Vec<f64>,
        m: Vec<f64>,
    },
}

impl MobilitySpec {
    pub fn build(&self) -> Result<Mobility> {
        match self {
            MobilitySpec::Linear { max_density } => Mobility::linear(*max_density),
            MobilitySpec::Logistic { max_density } => Mobility::logistic(*max_density),
            MobilitySpec::Table {
                max_density,
                rho,
                m,
            } => Mobility::table(rho.clone(), m.clone(), *max_density),
        }
    }
}

fn default_p() -> f64 {
    2.0
}

fn default_rule() -> RhoStarRule {
    RhoStarRule::ConstArgmaxTheta
}

fn default_q() -> f64 {
    1.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub mu0: Measure1D,
    pub mu1: Measure1D,
    pub mobility: MobilitySpec,
    #[serde(default = "default_p")]
    pub p: f64,
    pub n: usize,
    #[serde(default = "default_rule")]
    pub rule: RhoStarRule,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaConfig {
    pub mu0: Measure1D,
    pub mu1: Measure1D,
    pub mobility: MobilitySpec,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_rule")]
    pub rule: RhoStarRule,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JkoConfig {
    pub mu0: Measure1D,
    #[serde(rename = "F")]
    pub functional: EnergyFunctional,
    pub tau: f64,
    pub n_steps: usize,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_q")]
    pub q: f64,
    pub mobility: MobilitySpec,
    #[serde(default = "default_rule")]
    pub rule: RhoStarRule,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtlConfig {
    pub rho_l: f64,
    pub rho_r: f64,
    #[serde(rename = "M")]
    pub max_density: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub t: f64,
    #[serde(default = "default_rule")]
    pub rule: RhoStarRule,
}

/// A parsed config together with the hash of its canonical form.
pub struct Loaded<T> {
    pub config: T,
    pub hash: String,
}

/// Read and hash a JSON config. The hash is taken over the canonical
/// (key-sorted, whitespace-free) rendering, so formatting differences do not
/// change it.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::domain(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::domain(format!("config is not valid JSON: {e}")))?;
    let canonical = serde_json::to_string(&value).expect("value re-serializes");
    let hash = hex_digest(canonical.as_bytes());
    let config: T = serde_json::from_value(value)
        .map_err(|e| Error::domain(format!("config schema error: {e}")))?;
    Ok(Loaded { config, hash })
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn action_density(spec: &MobilitySpec, p: f64) -> Result<ActionDensity> {
    ActionDensity::new(p, spec.build()?)
}
