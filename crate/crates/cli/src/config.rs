use std::path::PathBuf;

use patsnake_core::amplitude::{EnergyVariant, FrontKind};
use patsnake_core::continuation::ContSettings;
use patsnake_core::grid::{build_domain, DomainSpec};
use patsnake_core::model::{critical_values, ModelParams, DEFAULT_D};
use patsnake_core::timestep::TimestepSettings;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that produced the run; filled in on dispatch.
    pub experiment: String,
    pub model: ModelSection,
    pub domain: DomainSection,
    pub cont: ContSettings,
    pub timestep: TimestepSettings,
    pub disp: DispOptions,
    pub landau: LandauOptions,
    pub maxwell: MaxwellOptions,
    pub glfront: GlFrontOptions,
    pub branch: BranchOptions,
    pub tint: TintOptions,
    pub output_dir: PathBuf,
    /// Snapshot every this many points or steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            model: ModelSection::default(),
            domain: DomainSection::default(),
            cont: ContSettings::default(),
            timestep: TimestepSettings::default(),
            disp: DispOptions::default(),
            landau: LandauOptions::default(),
            maxwell: MaxwellOptions::default(),
            glfront: GlFrontOptions::default(),
            branch: BranchOptions::default(),
            tint: TintOptions::default(),
            output_dir: PathBuf::from("out"),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lambda0: f64,
    pub d: f64,
    pub sigma: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { lambda0: critical_values(DEFAULT_D).0, d: DEFAULT_D, sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub quasi1d: bool,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { l1: 2.0, l2: 2.0, nx: 65, ny: 49, quasi1d: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispOptions {
    pub k_min: f64,
    pub k_max: f64,
    pub k_points: usize,
}

impl Default for DispOptions {
    fn default() -> Self {
        Self { k_min: 0.0, k_max: 2.0, k_points: 401 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandauOptions {
    pub sweep: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Default for LandauOptions {
    fn default() -> Self {
        Self { sweep: SweepParameter::Lambda, from: 2.4, to: 3.3, points: 91 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxwellOptions {
    pub sigma_from: f64,
    pub sigma_to: f64,
    pub sigma_points: usize,
}

impl Default for MaxwellOptions {
    fn default() -> Self {
        Self { sigma_from: 0.0, sigma_to: 0.0, sigma_points: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlFrontOptions {
    pub kind: FrontKind,
    pub variant: EnergyVariant,
    /// Defaults to the matching Maxwell point.
    pub lambda: Option<f64>,
    /// Half-length of the interval in critical wavelengths `2π/k_c`.
    pub half_length_wavelengths: f64,
    pub n: usize,
}

impl Default for GlFrontOptions {
    fn default() -> Self {
        Self {
            kind: FrontKind::Hot,
            variant: EnergyVariant::Standard,
            lambda: None,
            half_length_wavelengths: 6.0,
            n: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Homogeneous,
    Snapshot,
    Stripes,
    HotHexagons,
    ColdHexagons,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchSpec {
    /// Index into the bifurcation events of the current branch.
    pub event: usize,
    /// `+1` enters the new branch toward increasing `u(0,0)`.
    pub direction: f64,
    pub perturbation: f64,
    pub label: Option<String>,
}

impl Default for SwitchSpec {
    fn default() -> Self {
        Self { event: 0, direction: 1.0, perturbation: 0.05, label: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchOptions {
    pub start: StartKind,
    pub snapshot: Option<PathBuf>,
    pub label: String,
    /// Initial direction in λ.
    pub direction: f64,
    /// Follow the start branch in both directions concurrently.
    pub both_directions: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_points: usize,
    pub switches: Vec<SwitchSpec>,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            start: StartKind::Homogeneous,
            snapshot: None,
            label: "branch".into(),
            direction: -1.0,
            both_directions: false,
            lambda_min: 2.4,
            lambda_max: 3.3,
            max_points: 200,
            switches: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TintStart {
    Guess,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TintOptions {
    pub start: TintStart,
    pub a: f64,
    pub b: f64,
    pub l: f64,
    pub snapshot: Option<PathBuf>,
    /// Replaces the snapshot's (or model's) λ.
    pub lambda: Option<f64>,
    /// Newton-polish the final state.
    pub polish: bool,
}

impl Default for TintOptions {
    fn default() -> Self {
        Self { start: TintStart::Guess, a: 0.3, b: 0.15, l: 12.0, snapshot: None, lambda: None, polish: true }
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.model.lambda0, self.model.d, self.model.sigma)?)
    }

    pub fn spec(&self) -> Result<DomainSpec, CliError> {
        let d = &self.domain;
        Ok(build_domain(d.l1, d.l2, d.nx, d.ny, d.quasi1d)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        match self.experiment.as_str() {
            "disp" => {
                let o = &self.disp;
                if o.k_points < 2 || !(o.k_max > o.k_min) || o.k_min < 0.0 {
                    return Err(CliError::Validation(format!(
                        "empty wavenumber range [{}, {}] with {} points",
                        o.k_min, o.k_max, o.k_points
                    )));
                }
            }
            "landau" => {
                let o = &self.landau;
                if o.points < 1 || !o.from.is_finite() || !o.to.is_finite() {
                    return Err(CliError::Validation("landau sweep needs at least one point".into()));
                }
                if o.sweep == SweepParameter::Lambda && o.from.min(o.to) <= 0.0 {
                    return Err(CliError::Validation("lambda sweep must stay positive".into()));
                }
            }
            "maxwell" => {
                if self.maxwell.sigma_points < 1 {
                    return Err(CliError::Validation("maxwell sweep needs at least one sigma".into()));
                }
            }
            "glfront" => {
                let o = &self.glfront;
                if o.n < 5 || o.n % 2 == 0 || !(o.half_length_wavelengths > 0.0) {
                    return Err(CliError::Validation("glfront needs odd n >= 5 and a positive length".into()));
                }
                if o.variant == EnergyVariant::Mixed && o.kind != FrontKind::Hot {
                    return Err(CliError::Validation("the mixed variant supports hot fronts only".into()));
                }
            }
            "cont" => {
                self.spec()?;
                self.cont.validate()?;
                let b = &self.branch;
                if !(b.lambda_min < b.lambda_max) || b.max_points < 2 {
                    return Err(CliError::Validation("branch needs lambda_min < lambda_max and max_points >= 2".into()));
                }
                if b.start == StartKind::Snapshot && b.snapshot.is_none() {
                    return Err(CliError::Validation("start = snapshot needs a snapshot path".into()));
                }
                if b.both_directions && !b.switches.is_empty() {
                    return Err(CliError::Validation("switches cannot be combined with both_directions".into()));
                }
            }
            "tint" => {
                self.spec()?;
                self.timestep.validate()?;
                if self.tint.start == TintStart::Snapshot && self.tint.snapshot.is_none() {
                    return Err(CliError::Validation("start = snapshot needs a snapshot path".into()));
                }
                if let Some(l) = self.tint.lambda {
                    if !(l > 0.0) {
                        return Err(CliError::Validation(format!("lambda override must be positive, got {l}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![from];
    }
    (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let mut c = RunConfig { experiment: "cont".into(), ..Default::default() };
        c.branch.switches.push(SwitchSpec { event: 2, label: Some("hb".into()), ..Default::default() });
        c.model.lambda0 = 0.1 + 0.2;
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"model": {"sigma": -0.3}, "cont": {"ds0": 0.02}}"#).unwrap();
        assert_eq!(c.model.sigma, -0.3);
        assert_eq!(c.model.d, 60.0);
        assert_eq!(c.cont.ds0, 0.02);
        assert_eq!(c.cont.dsmax, ContSettings::default().dsmax);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
    }

    #[test]
    fn empty_k_range_rejected() {
        let mut c = RunConfig { experiment: "disp".into(), ..Default::default() };
        c.disp.k_max = c.disp.k_min;
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(1.0, 2.0, 5);
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[4], 2.0);
        assert_eq!(linspace(3.0, 4.0, 1), vec![3.0]);
    }
}
