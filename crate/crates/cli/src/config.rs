//! Scenario configuration: parsing, tolerance table and validation before any compute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use harmonium_core::density::{KGrid, QuadratureSpec, CM_MASS, RM_MASS};
use harmonium_core::response::Perturbation;
use harmonium_core::rm::{FrequencyProtocol, InteractionSpec, LineGrid};
use harmonium_core::virial::DrivenLine;
use harmonium_core::{RadialGrid, TimeGrid, TAIL_LIMIT};
use serde::{Deserialize, Serialize};

use crate::Subcommand;

/// Default limits for every check. A check passes when its value is at most the limit.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    // |E − closed form| for the relative-motion ground state (Moshinsky and free pairs)
    ("energy", 1e-6),
    // |h Σ|χ|² − 1| over all stored slices
    ("wavefunction_norm", 1e-9),
    // |∫n d³r − 2|
    ("norm", 1e-6),
    // −min n
    ("positivity", 1e-12),
    // |f(0, t) − 2|
    ("particle_number", 1e-6),
    // max |Δf|/2 against the Moshinsky closed form
    ("scattering", 1e-3),
    // max |2|φ|² − n| / max n on the evaluation mask
    ("orbital", 1e-12),
    // density mismatch after re-propagating under the inverted potential
    ("roundtrip", 1e-3),
    // residual L2 norms, worst central slice
    ("continuity", 1e-3),
    ("dvt", 1e-2),
    ("dvt_interacting", 1e-3),
    // max_x |n(x, t) − n_0(x − x_cl(t))|
    ("hpt", 1e-4),
    // largest |χ_s| before the impulse
    ("causality", 1e-10),
    // relative column change when the impulse is halved
    ("chi_linearity", 1e-2),
    // sup-norm error of the recovered drive
    ("volterra", 1e-4),
    // resolvent path against forward substitution
    ("resolvent", 1e-8),
];

fn default_k_max() -> f64 {
    6.0
}

fn default_n_k() -> usize {
    61
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub n_points: usize,
    pub t_final: f64,
    pub n_steps: usize,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_n_k")]
    pub n_k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HptConfig {
    pub drive: DrivenLine,
    pub x_max: f64,
    pub n_points: usize,
}

fn default_amplitude() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impulse {
    pub site: usize,
    pub slice: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiConfig {
    pub impulses: Vec<Impulse>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_stride")]
    pub basis_stride: usize,
}

impl ChiConfig {
    pub fn perturbations(&self) -> Vec<Perturbation> {
        self.impulses
            .iter()
            .map(|i| Perturbation {
                site: i.site,
                slice: i.slice,
                amplitude: self.amplitude,
            })
            .collect()
    }
}

/// Scalar model kernels `χ(t − t')` for the causality roundtrip.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKernel {
    /// `sin(ω τ)/ω`
    Sine { omega: f64 },
    /// `e^{−γτ} sin(ω τ)/ω`
    DampedSine { omega: f64, gamma: f64 },
}

impl ModelKernel {
    pub fn eval(&self, tau: f64) -> f64 {
        match *self {
            ModelKernel::Sine { omega } => (omega * tau).sin() / omega,
            ModelKernel::DampedSine { omega, gamma } => (-gamma * tau).exp() * (omega * tau).sin() / omega,
        }
    }
}

/// Drive `sin²(Ω t) e^{−γ t}`, switched on smoothly from zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub omega: f64,
    #[serde(default)]
    pub decay: f64,
}

impl DriveConfig {
    pub fn eval(&self, t: f64) -> f64 {
        (self.omega * t).sin().powi(2) * (-self.decay * t).exp()
    }
}

fn default_resolvent_steps() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseConfig {
    pub kernel: ModelKernel,
    pub drive: DriveConfig,
    /// The dense resolvent is O(N³); it is only formed up to this many steps.
    #[serde(default = "default_resolvent_steps")]
    pub resolvent_max_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "no_interaction")]
    pub interaction: InteractionSpec,
    pub frequency: FrequencyProtocol,
    pub grids: GridConfig,
    /// Snapshot thinning; every `stride`-th time step is stored.
    #[serde(default)]
    pub stride: Option<usize>,
    /// Checks to execute; empty runs every check of the subcommand.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub hpt: Option<HptConfig>,
    #[serde(default)]
    pub chi: Option<ChiConfig>,
    #[serde(default)]
    pub response: Option<ResponseConfig>,
}

fn no_interaction() -> InteractionSpec {
    InteractionSpec::None
}

/// A configuration problem, located in the source text when possible.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.source, line, self.message),
            None => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

/// 1-based line of the last key in `path`, each key searched after the previous one.
fn line_of(text: &str, path: &[&str]) -> Option<usize> {
    let mut pos = 0;
    for key in path {
        let needle = format!("\"{key}\"");
        pos += text[pos..].find(&needle)?;
    }
    Some(text[..pos].matches('\n').count() + 1)
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stride: Option<usize>,
    pub tolerances: Vec<String>,
    pub out: Option<PathBuf>,
}

/// A configuration that passed every pre-compute check.
#[derive(Debug, Clone)]
pub struct Validated {
    pub raw: ScenarioConfig,
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub kgrid: KGrid,
    pub stride: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: BTreeSet<String>,
    pub out: PathBuf,
    pub warnings: Vec<String>,
}

impl Validated {
    pub fn stored_times(&self) -> TimeGrid {
        self.times.thinned(self.stride).expect("stride validated")
    }

    pub fn wants(&self, check: &str) -> bool {
        self.checks.contains(check)
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

/// Checks each subcommand can run.
pub fn checks_for(cmd: Subcommand) -> &'static [&'static str] {
    match cmd {
        Subcommand::GroundState => &["energy", "wavefunction_norm"],
        Subcommand::Evolve => &["wavefunction_norm"],
        Subcommand::Density => &["norm", "positivity"],
        Subcommand::Scattering => &["particle_number"],
        Subcommand::VerifyMoshinsky => &["scattering"],
        Subcommand::InvertKs => &["orbital"],
        Subcommand::Roundtrip => &["roundtrip"],
        Subcommand::CheckContinuity => &["continuity"],
        Subcommand::CheckDvt => &["dvt"],
        Subcommand::CheckDvtInteracting => &["dvt_interacting"],
        Subcommand::CheckHpt => &["hpt"],
        Subcommand::ExtractChi => &["causality", "chi_linearity"],
        Subcommand::CausalityRoundtrip => &["causality", "volterra", "resolvent"],
    }
}

/// Largest squared width a harmonic ground state of `mass` reaches under `p`, when
/// the frequency can drop to `w_min`.
fn widest(mass: f64, w0: f64, w_min: f64) -> f64 {
    (1.0 / (mass * w0)).max(w0 / (mass * w_min * w_min))
}

pub fn validate(text: &str, source: &str, cmd: Subcommand, over: &Overrides) -> Result<Validated, ConfigError> {
    let err = |line: Option<usize>, message: String| ConfigError {
        source: source.to_string(),
        line,
        message,
    };
    let raw: ScenarioConfig = serde_json::from_str(text).map_err(|e| err(Some(e.line()), e.to_string()))?;
    let at = |path: &[&str], message: String| err(line_of(text, path), message);

    let mut tolerances: BTreeMap<String, f64> = DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (name, value) in &raw.tolerances {
        if !tolerances.contains_key(name) {
            return Err(at(&["tolerances", name], format!("unknown tolerance `{name}`")));
        }
        if !(value.is_finite() && *value >= 0.0) {
            return Err(at(&["tolerances", name], format!("tolerance `{name}` must be a non-negative number")));
        }
        tolerances.insert(name.clone(), *value);
    }
    for spec in &over.tolerances {
        let bad = || err(None, format!("--tol `{spec}`: expected <name>=<non-negative number>"));
        let (name, value) = spec.split_once('=').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(bad());
        }
        if !tolerances.contains_key(name.trim()) {
            return Err(err(None, format!("--tol: unknown tolerance `{}`", name.trim())));
        }
        tolerances.insert(name.trim().to_string(), value);
    }

    let available = checks_for(cmd);
    let checks: BTreeSet<String> = if raw.checks.is_empty() {
        available.iter().map(|s| s.to_string()).collect()
    } else {
        for c in &raw.checks {
            if !available.contains(&c.as_str()) {
                return Err(at(
                    &["checks"],
                    format!("check `{c}` is not run by `{}` (available: {})", cmd.name(), available.join(", ")),
                ));
            }
        }
        raw.checks.iter().cloned().collect()
    };

    let g = &raw.grids;
    let grid = RadialGrid::new(g.r_max, g.n_points).map_err(|e| at(&["grids", "r_max"], e.to_string()))?;
    let times = TimeGrid::new(g.t_final, g.n_steps).map_err(|e| at(&["grids", "t_final"], e.to_string()))?;
    let kgrid = KGrid::new(g.k_max, g.n_k).map_err(|e| at(&["grids"], e.to_string()))?;
    let stride = over.stride.or(raw.stride).unwrap_or(1);
    if stride == 0 || g.n_steps % stride != 0 {
        let msg = format!("stride {stride} must be positive and divide n_steps = {}", g.n_steps);
        return Err(if over.stride.is_some() { err(None, format!("--stride: {msg}")) } else { at(&["stride"], msg) });
    }

    let p = &raw.frequency;
    p.validate().map_err(|e| at(&["frequency"], e.to_string()))?;
    let w0 = p.omega0();
    let w_min = p.min_omega(g.t_final);
    raw.interaction
        .validate(w_min, RM_MASS)
        .map_err(|e| at(&["interaction"], e.to_string()))?;

    // Harmonic estimate of the density width; assembled densities are re-checked exactly.
    let shift = match raw.interaction {
        InteractionSpec::Moshinsky { k } => k / RM_MASS,
        _ => 0.0,
    };
    let w0_rm = (w0 * w0 - shift).sqrt();
    let wmin_rm = (w_min * w_min - shift).sqrt();
    let width_sq = widest(CM_MASS, w0, w_min) + widest(RM_MASS, w0_rm, wmin_rm) / 4.0;
    let tail = (-g.r_max * g.r_max / width_sq).exp();
    let needs_density = !matches!(cmd, Subcommand::CheckHpt | Subcommand::CausalityRoundtrip | Subcommand::ExtractChi);
    if needs_density && tail >= TAIL_LIMIT {
        return Err(at(
            &["grids", "r_max"],
            format!(
                "r_max = {} is too small: the density can reach n(r_max)/max n ≈ {tail:.1e} (limit {TAIL_LIMIT:.0e})",
                g.r_max
            ),
        ));
    }

    let mut warnings = Vec::new();
    let dt = times.dt();
    let h = grid.h();
    let radial_propagation = !matches!(cmd, Subcommand::CheckHpt | Subcommand::CausalityRoundtrip);
    if radial_propagation && dt > h * h * RM_MASS {
        warnings.push(format!(
            "dt = {dt:e} exceeds the stability heuristic h²μ = {:e}; Crank–Nicolson stays unitary but phase errors grow",
            h * h * RM_MASS
        ));
    }

    match cmd {
        Subcommand::VerifyMoshinsky | Subcommand::CheckDvtInteracting => {
            if !matches!(raw.interaction, InteractionSpec::Moshinsky { .. }) {
                return Err(at(&["interaction"], format!("`{}` needs a moshinsky interaction", cmd.name())));
            }
        }
        Subcommand::CheckHpt => {
            let hpt = raw.hpt.as_ref().ok_or_else(|| err(None, "`check-hpt` needs an `hpt` section".into()))?;
            LineGrid::new(hpt.x_max, hpt.n_points).map_err(|e| at(&["hpt"], e.to_string()))?;
            if !(hpt.drive.omega0 > 0.0) {
                return Err(at(&["hpt", "omega0"], "hpt drive needs omega0 > 0".into()));
            }
        }
        Subcommand::ExtractChi => {
            let chi = raw.chi.as_ref().ok_or_else(|| err(None, "`extract-chi` needs a `chi` section".into()))?;
            if chi.impulses.is_empty() {
                return Err(at(&["chi", "impulses"], "at least one impulse is required".into()));
            }
            if !(chi.amplitude > 0.0 && chi.amplitude.is_finite()) || chi.basis_stride == 0 {
                return Err(at(&["chi"], "chi needs amplitude > 0 and basis_stride ≥ 1".into()));
            }
            for i in &chi.impulses {
                if i.site == 0 || i.site + 1 >= grid.n_points() || i.slice >= times.n_steps() {
                    return Err(at(
                        &["chi", "impulses"],
                        format!("impulse at site {}, slice {} is outside the interior of the grids", i.site, i.slice),
                    ));
                }
            }
        }
        Subcommand::CausalityRoundtrip => {
            let r = raw
                .response
                .as_ref()
                .ok_or_else(|| err(None, "`causality-roundtrip` needs a `response` section".into()))?;
            let ok = match r.kernel {
                ModelKernel::Sine { omega } => omega > 0.0,
                ModelKernel::DampedSine { omega, gamma } => omega > 0.0 && gamma >= 0.0,
            };
            if !ok || !r.drive.omega.is_finite() || !r.drive.decay.is_finite() {
                return Err(at(&["response"], "response kernel needs omega > 0 (and gamma ≥ 0)".into()));
            }
        }
        _ => {}
    }

    let out = over
        .out
        .clone()
        .or_else(|| raw.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Validated {
        raw,
        grid,
        times,
        kgrid,
        stride,
        tolerances,
        checks,
        out,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_lookup_follows_the_path() {
        let text = "{\n  \"hpt\": {\n    \"n_points\": 3\n  },\n  \"grids\": {\n    \"n_points\": 5\n  }\n}";
        assert_eq!(line_of(text, &["grids", "n_points"]), Some(6));
        assert_eq!(line_of(text, &["n_points"]), Some(3));
        assert_eq!(line_of(text, &["missing"]), None);
    }

    #[test]
    fn every_check_has_a_tolerance() {
        let names: BTreeSet<&str> = DEFAULT_TOLERANCES.iter().map(|(k, _)| *k).collect();
        for cmd in Subcommand::ALL {
            for c in checks_for(cmd) {
                assert!(names.contains(c), "{c}");
            }
        }
    }
}
