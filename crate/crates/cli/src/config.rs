//! Run configuration: TOML file, then flag overrides, then validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use torusflux::flux::FluxKind;
use torusflux::mollify::geometric_ladder;
use torusflux::norms::Summability;
use torusflux::solver::Probe;
use torusflux::verify::{Scale, DEFAULT_SEED};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; not part of the hash.
    pub jobs: Option<usize>,
    /// Output directory; not part of the hash.
    pub out: PathBuf,
    pub generate: GenerateCfg,
    pub norms: NormsCfg,
    pub mollscan: MollscanCfg,
    pub fluxscan: FluxscanCfg,
    pub simulate: SimulateCfg,
    pub verify: VerifyCfg,
    pub report: ReportCfg,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            jobs: None,
            out: PathBuf::from("out"),
            generate: GenerateCfg::default(),
            norms: NormsCfg::default(),
            mollscan: MollscanCfg::default(),
            fluxscan: FluxscanCfg::default(),
            simulate: SimulateCfg::default(),
            verify: VerifyCfg::default(),
            report: ReportCfg::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    TaylorGreen,
    Abc,
    SingleMode,
    Lacunary,
    RandomSmooth,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateCfg {
    pub kind: GenKind,
    pub dim: usize,
    pub n: usize,
    /// File stem inside the output directory.
    pub name: String,
    /// Planted exponent of the lacunary generator.
    pub alpha: f64,
    /// Lebesgue gauge of the planted sequence.
    pub p: f64,
    /// Planted `d_j = 2^{-planted_decay · j}`; zero gives `d_j = 1`.
    pub planted_decay: f64,
    /// Spectral decay of the random generator.
    pub decay_rate: f64,
    pub abc: [f64; 3],
    pub mode_k: [i64; 3],
    pub amplitude: [f64; 3],
}

impl Default for GenerateCfg {
    fn default() -> Self {
        Self {
            kind: GenKind::Lacunary,
            dim: 2,
            n: 256,
            name: "field".into(),
            alpha: 1.0 / 3.0,
            p: 3.0,
            planted_decay: 0.25,
            decay_rate: 4.0,
            abc: [1.0, 1.0, 1.0],
            mode_k: [1, 0, 0],
            amplitude: [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NormsCfg {
    pub input: PathBuf,
    /// Smoothness `s`.
    pub alpha: f64,
    pub p: f64,
    pub q: Summability,
}

impl Default for NormsCfg {
    fn default() -> Self {
        Self { input: PathBuf::new(), alpha: 1.0 / 3.0, p: 3.0, q: Summability::CNat }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MollscanCfg {
    pub input: PathBuf,
    pub alpha: f64,
    pub p: f64,
    /// `start:stop:ratio`; empty picks the grid default.
    pub ladder: String,
    pub derivative_order: u32,
    /// Tensor commutator column when both are given.
    pub theta: Option<f64>,
    pub q: Option<f64>,
}

impl Default for MollscanCfg {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            alpha: 1.0 / 3.0,
            p: 3.0,
            ladder: String::new(),
            derivative_order: 1,
            theta: None,
            q: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FluxscanCfg {
    pub input: PathBuf,
    pub kind: FluxKind,
    /// Integrability of the field class being probed.
    pub p: f64,
    /// Levels for the LP kinds; empty means `1..=j_max`.
    pub levels: Vec<i32>,
    /// Scales for the mollified kinds; empty picks the grid default.
    pub ladder: String,
    /// With `theta`, also evaluates the Γ bound from the measured sequence.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
}

impl Default for FluxscanCfg {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            kind: FluxKind::EnergyLp,
            p: 3.0,
            levels: Vec::new(),
            ladder: String::new(),
            alpha: None,
            beta: None,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateCfg {
    pub input: PathBuf,
    pub t_final: f64,
    /// Defaults to half the CFL bound of the initial state.
    pub dt: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub probes: Vec<Probe>,
    /// Also run a half-step companion for an error estimate.
    pub richardson: bool,
}

impl Default for SimulateCfg {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            t_final: 1.0,
            dt: None,
            snapshot_every: Some(10),
            probes: Vec::new(),
            richardson: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyCfg {
    pub scale: Scale,
    /// Subset of criteria; empty runs all.
    pub criteria: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ReportCfg {
    /// Directories to merge; empty means the output directory.
    pub inputs: Vec<PathBuf>,
}


impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.jobs = None;
        c.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn parse_ladder(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("ladder {s:?} is not start:stop:ratio"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts.iter().map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
    geometric_ladder(nums[0], nums[1], nums[2]).map_err(|e| CliError::Config(e.to_string()))
}

/// Flux exponent ranges: `1 < p ≤ 3` for energy, `2 < p ≤ 3` for helicity.
pub fn check_flux_exponent(kind: FluxKind, p: f64) -> Result<(), CliError> {
    let energy = matches!(kind, FluxKind::EnergyLp | FluxKind::EnergyMoll);
    let (lo, name) = if energy { (1.0, "energy") } else { (2.0, "helicity") };
    if !(p > lo && p <= 3.0) {
        return Err(CliError::Config(format!("{name} flux needs {lo} < p <= 3, got p = {p}")));
    }
    Ok(())
}

/// `θα + β ≥ 1` whenever all three are present.
pub fn check_triple(alpha: Option<f64>, beta: Option<f64>, theta: Option<f64>) -> Result<(), CliError> {
    if let (Some(a), Some(b), Some(t)) = (alpha, beta, theta) {
        if t * a + b < 1.0 - 1e-12 {
            return Err(CliError::Config(format!("theta*alpha + beta = {} < 1", t * a + b)));
        }
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if let Some(v) = v {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Config(format!("{name} = {v} not in (0, 1)")));
            }
        }
    }
    if let Some(t) = theta {
        if !(t > 0.0 && t <= 2.0) {
            return Err(CliError::Config(format!("theta = {t} not in (0, 2]")));
        }
    }
    Ok(())
}

impl RunConfig {
    /// Sanity of every section, run before any command.
    pub fn validate(&self) -> Result<(), CliError> {
        let exp = |name: &str, p: f64| {
            if p >= 1.0 {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} = {p} must be at least 1")))
            }
        };
        let g = &self.generate;
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(CliError::Config(format!("generate.alpha = {} not in (0, 1)", g.alpha)));
        }
        if g.kind == GenKind::Lacunary && !(g.p >= 2.0) {
            return Err(CliError::Config(format!("generate.p = {} must be at least 2", g.p)));
        }
        exp("norms.p", self.norms.p)?;
        exp("mollscan.p", self.mollscan.p)?;
        let m = &self.mollscan;
        if m.theta.is_some() != m.q.is_some() {
            return Err(CliError::Config("mollscan.theta and mollscan.q go together".into()));
        }
        if let Some(q) = m.q {
            if !(q > 1.0) {
                return Err(CliError::Config(format!("mollscan.q = {q} must exceed 1")));
            }
        }
        check_triple(Some(m.alpha), None, m.theta)?;
        if !m.ladder.is_empty() {
            parse_ladder(&m.ladder)?;
        }
        let f = &self.fluxscan;
        check_flux_exponent(f.kind, f.p)?;
        check_triple(f.alpha, f.beta, f.theta)?;
        if f.theta.is_some() && f.alpha.is_none() {
            return Err(CliError::Config("fluxscan.theta needs fluxscan.alpha".into()));
        }
        if f.theta.is_some() && !f.kind.is_lp() {
            return Err(CliError::Config("the Gamma bound is indexed by N; use an LP flux kind".into()));
        }
        if !f.ladder.is_empty() {
            parse_ladder(&f.ladder)?;
        }
        if !(self.simulate.t_final > 0.0) {
            return Err(CliError::Config(format!("simulate.t_final = {} must be positive", self.simulate.t_final)));
        }
        if let Some(dt) = self.simulate.dt {
            if !(dt > 0.0) {
                return Err(CliError::Config(format!("simulate.dt = {dt} must be positive")));
            }
        }
        if let Some(&c) = self.verify.criteria.iter().find(|&&c| !(1..=11).contains(&c)) {
            return Err(CliError::Config(format!("no criterion {c}")));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(toml::from_str::<RunConfig>("[fluxscan]\nkind = \"energy_LP\"\nextra = 1\n").is_err());
        let c: RunConfig = toml::from_str("seed = 9\n[fluxscan]\nkind = \"helicity_LP\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.fluxscan.kind, FluxKind::HelicityLp);
    }

    #[test]
    fn exponent_ranges() {
        assert!(check_flux_exponent(FluxKind::EnergyLp, 1.0).is_err());
        assert!(check_flux_exponent(FluxKind::EnergyLp, 3.0).is_ok());
        assert!(check_flux_exponent(FluxKind::HelicityLp, 2.0).is_err());
        assert!(check_flux_exponent(FluxKind::HelicityMoll, 2.5).is_ok());
        assert!(check_flux_exponent(FluxKind::EnergyMoll, 3.5).is_err());
        assert!(check_triple(Some(0.4), Some(0.1), Some(2.0)).is_err());
        assert!(check_triple(Some(0.4), Some(0.2), Some(2.0)).is_ok());
        assert!(check_triple(Some(0.4), None, Some(2.0)).is_ok());
    }

    #[test]
    fn hash_ignores_out_and_jobs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.jobs = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn ladder_syntax() {
        assert_eq!(parse_ladder("0.8:0.1:2").unwrap(), vec![0.8, 0.4, 0.2, 0.1]);
        assert!(parse_ladder("0.8:0.1").is_err());
        assert!(parse_ladder("a:b:c").is_err());
    }
}
