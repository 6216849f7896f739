//! Run configuration: one TOML file per experiment.

use std::path::Path;

use fbstab::flow::Cutoff;
use fbstab::geometry::{make_profile, BumpPerturbation, Polynomial, ProfileSpec};
use fbstab::harness::{water_wave_scenario, DatumSpec, QField, Scenario};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub command: CommandConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub profile: ProfileSpec,
    /// Bottom datum; defaults to 1, or to the critical value for the water-wave preset.
    #[serde(default)]
    pub bottom: Option<DatumSpec>,
    pub q: QField,
    pub bump: BumpSpec,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_steps")]
    pub flow_steps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub cutoff: Option<Cutoff>,
}

/// `φ = amplitude · (x-a)⁴(b-x)⁴ p(x) / max|(x-a)⁴(b-x)⁴ p(x)|`, with `p` given by
/// its monomial coefficients (default `p ≡ 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub a: f64,
    pub b: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub factor: Vec<f64>,
}

impl BumpSpec {
    pub fn build(&self) -> Result<BumpPerturbation, CliError> {
        let factor = if self.factor.is_empty() {
            Polynomial::constant(1.0)
        } else {
            Polynomial::new(self.factor.clone())
        };
        let raw = BumpPerturbation::from_factor(self.a, self.b, &factor)
            .map_err(|e| CliError::invalid("scenario.bump", e.to_string()))?;
        let peak = raw.sup_norm();
        if !(peak > 0.0) {
            return Err(CliError::invalid("scenario.bump.factor", "factor vanishes on the support"));
        }
        Ok(raw.scaled(self.amplitude / peak))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    /// Deformation parameters for `flow` and the second-variation checks.
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
    /// Samples for the energy trace of `sweep`.
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    /// Uniform samples for the finite-difference check.
    #[serde(default = "default_fd_s_grid")]
    pub fd_s_grid: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_bump_count")]
    pub bump_count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Target C^{2,α} surrogate norm of the random bumps.
    #[serde(default = "default_target_norm")]
    pub target_norm: f64,
}

impl Default for CommandConfig {
    fn default() -> Self {
        CommandConfig {
            s_values: default_s_values(),
            s_grid: default_s_grid(),
            fd_s_grid: default_fd_s_grid(),
            epsilons: default_epsilons(),
            lambdas: default_lambdas(),
            bump_count: default_bump_count(),
            seed: default_seed(),
            target_norm: default_target_norm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_modes() -> usize {
    32
}
fn default_steps() -> usize {
    fbstab::flow::DEFAULT_STEPS
}
fn default_alpha() -> f64 {
    0.5
}
fn default_s_values() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_s_grid() -> Vec<f64> {
    fbstab::harness::default_s_grid()
}
fn default_fd_s_grid() -> Vec<f64> {
    fbstab::harness::default_fd_s_grid()
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn default_lambdas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}
fn default_bump_count() -> usize {
    10
}
fn default_seed() -> u64 {
    42
}
fn default_target_norm() -> f64 {
    0.5
}
fn default_out() -> String {
    "out".into()
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub modes: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn apply(&mut self, o: Overrides) -> Result<(), CliError> {
        if let Some(nx) = o.nx {
            self.scenario.nx = nx;
        }
        if let Some(ny) = o.ny {
            self.scenario.ny = ny;
        }
        if let Some(k) = o.modes {
            self.scenario.modes = k;
        }
        if let Some(seed) = o.seed {
            self.command.seed = seed;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sc = &self.scenario;
        let cmd = &self.command;
        if self.version != CONFIG_VERSION {
            return Err(CliError::invalid("version", format!("expected {CONFIG_VERSION}")));
        }
        if sc.nx < 8 {
            return Err(CliError::invalid("scenario.nx", "Nx≥8 required"));
        }
        if sc.ny < 8 {
            return Err(CliError::invalid("scenario.ny", "Ny≥8 required"));
        }
        if sc.modes == 0 {
            return Err(CliError::invalid("scenario.modes", "K≥1 required"));
        }
        if sc.flow_steps < 4 {
            return Err(CliError::invalid("scenario.flow_steps", "at least 4 steps required"));
        }
        if !(sc.alpha > 0.0 && sc.alpha <= 1.0) {
            return Err(CliError::invalid("scenario.alpha", "α must lie in (0, 1]"));
        }
        if !(sc.bump.a < sc.bump.b && sc.bump.a >= -1.0 && sc.bump.b <= 1.0) {
            return Err(CliError::invalid("scenario.bump", "need -1 ≤ a < b ≤ 1"));
        }
        let in_unit = |v: &[f64]| v.iter().all(|s| (0.0..=1.0).contains(s));
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if cmd.s_values.is_empty() || !in_unit(&cmd.s_values) {
            return Err(CliError::invalid("command.s_values", "values must lie in [0, 1]"));
        }
        if !in_unit(&cmd.s_grid) || !increasing(&cmd.s_grid) {
            return Err(CliError::invalid("command.s_grid", "samples must increase within [0, 1]"));
        }
        if !in_unit(&cmd.fd_s_grid) || !increasing(&cmd.fd_s_grid) {
            return Err(CliError::invalid("command.fd_s_grid", "samples must increase within [0, 1]"));
        }
        if cmd.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::invalid("command.epsilons", "ε must be positive"));
        }
        if cmd.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(CliError::invalid("command.lambdas", "λ must be positive"));
        }
        if cmd.bump_count == 0 {
            return Err(CliError::invalid("command.bump_count", "at least one bump required"));
        }
        if !(cmd.target_norm > 0.0) {
            return Err(CliError::invalid("command.target_norm", "must be positive"));
        }
        if self.output.dir.is_empty() {
            return Err(CliError::invalid("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let sc = &self.scenario;
        let profile = make_profile(&sc.profile).map_err(|e| CliError::invalid("scenario.profile", e.to_string()))?;
        let bump = sc.bump.build()?;
        let mut out = match (sc.q, sc.bottom) {
            (QField::WaterWave { q, g }, None) => water_wave_scenario(q, g, profile, sc.nx, sc.ny),
            (q, bottom) => Scenario::new(
                &sc.name,
                profile,
                bottom.unwrap_or(DatumSpec::Constant { value: 1.0 }),
                q,
                bump.clone(),
                sc.nx,
                sc.ny,
            ),
        }
        .map_err(|e| CliError::invalid("scenario", e.to_string()))?;
        out.name = sc.name.clone();
        out.bump = bump;
        out.modes = sc.modes;
        out.flow_steps = sc.flow_steps;
        out.alpha = sc.alpha;
        out.cutoff = sc.cutoff;
        Ok(out)
    }

    /// The flat critical strip: `w ≡ 1`, `u* ≡ 1`, `Q ≡ 1`.
    pub fn flat_critical(nx: usize, ny: usize) -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            scenario: ScenarioConfig {
                name: "flat-critical".into(),
                profile: ProfileSpec::Constant { value: 1.0 },
                bottom: Some(DatumSpec::Constant { value: 1.0 }),
                q: QField::Constant { value: 1.0 },
                bump: BumpSpec {
                    a: -0.5,
                    b: 0.5,
                    amplitude: 0.03,
                    factor: vec![],
                },
                nx,
                ny,
                modes: default_modes().min(nx / 4),
                flow_steps: default_steps(),
                alpha: default_alpha(),
                cutoff: None,
            },
            command: CommandConfig::default(),
            output: OutputConfig::default(),
        }
    }
}
