//! Experiment configuration: one plain TOML file of `key = value` sections,
//! resolved together with the command-line overrides into the exact settings
//! a command runs with.
//!
//! The resolved configuration is hashed into every artifact's metadata
//! block, so reproducing an output needs nothing beyond the same file, the
//! same seed, and the same command line. Keys a command requires but cannot
//! find are reported by their full dotted name (for example
//! `scales.deltas`); unknown keys are rejected outright so typos cannot
//! silently fall back to defaults. The only environment variable honored is
//! `RENORMLAB_OUT`, an output-directory override ranking below the `--out`
//! flag and above the `output_dir` key.

use std::path::{Path, PathBuf};

use renormlab_core::coeff::{CoefficientField, MatrixMap};
use renormlab_core::error::{Error, Result};
use renormlab_core::estimator::{CorrelationSpec, ProbeSetup, SpaceTimeProbeSetup};
use renormlab_core::grid::{Field2D, Grid2D, SpaceTimeGrid};
use renormlab_core::fft::Spectral2D;
use renormlab_core::mollifier::MollifierShape;
use renormlab_core::solver::{CountertermMode, ScalarNonlinearity};
use serde::{Deserialize, Serialize};

/// Which renormalized equation a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    /// Multiplicative equation with gradient nonlinearity (spatial noise).
    Pam,
    /// Power equation with Wick-renormalized drift (space-time noise).
    Phi,
}

/// `[grid]`: discretization of the torus and of time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Spatial points per axis (power of two, ≥ 8).
    pub n: Option<usize>,
    /// Time horizon of trajectory solves.
    pub horizon: Option<f64>,
    /// Time steps over the horizon.
    pub nt: Option<usize>,
}

/// `[scales]`: the mollification and observation scales under study.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesSection {
    /// Mollification scales δ (descending dyadic recommended).
    pub deltas: Option<Vec<f64>>,
    /// Test-function scales λ.
    pub lambdas: Option<Vec<f64>>,
}

/// `[correlation]`: couples the coefficient field to the driving noise.
/// Omit the whole section for deterministic coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    /// Amplitude σ multiplying the smoothed noise (zero disables).
    pub amplitude: f64,
    /// Smoothing scale ℓ of the fixed kernel.
    pub kernel_scale: f64,
    /// Additive offset μ of the conditioning field.
    #[serde(default)]
    pub mu: f64,
}

/// `[mollifier]`: bump profile used for mollifiers and test functions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSection {
    /// Profile shape.
    pub shape: Option<MollifierShape>,
}

/// `[renormalization]`: how subtracted structure functions enter solves.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenormalizationSection {
    /// `function`, `constant`, or `none`.
    pub mode: Option<CountertermMode>,
}

/// `[pam]`: data for the multiplicative equation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PamSection {
    /// Noise coupling `g` (needs `g(u₀) ≠ 0` to excite the equation).
    pub g: Option<ScalarNonlinearity<f64>>,
    /// Gradient-product coupling `f`.
    pub f: Option<ScalarNonlinearity<f64>>,
    /// Constant initial datum.
    pub u0: Option<f64>,
}

/// `[phi]`: data for the power equation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    /// Drift degree `K` (the drift is the degree-`K` Wick power).
    pub k: Option<usize>,
}

/// `[probe]`: moment-study settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Moment order `q`.
    pub q: Option<u32>,
    /// Test-function center as grid indices `[ix, iy]`.
    pub center: Option<[usize; 2]>,
    /// Backward-Euler steps of the unit-horizon probe solve.
    pub solve_nt: Option<usize>,
    /// Space-time probes: center time as a fraction of the horizon.
    pub center_time_fraction: Option<f64>,
}

/// The whole configuration file plus applied overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Which equation `simulate` and `moments` address.
    pub equation: Option<Equation>,
    /// Master seed of the deterministic seed tree.
    pub seed: Option<u64>,
    /// Replica count for statistical commands.
    pub replicas: Option<usize>,
    /// Artifact directory (overridable by `RENORMLAB_OUT` and `--out`).
    /// Excluded from the configuration hash: where artifacts land is not
    /// part of what was computed.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scales: ScalesSection,
    /// Coefficient matrix map, tagged by `family`.
    pub coefficients: Option<MatrixMap<f64>>,
    pub correlation: Option<CorrelationSection>,
    #[serde(default)]
    pub mollifier: MollifierSection,
    #[serde(default)]
    pub renormalization: RenormalizationSection,
    #[serde(default)]
    pub pam: PamSection,
    #[serde(default)]
    pub phi: PhiSection,
    #[serde(default)]
    pub probe: ProbeSection,
}

fn missing(key: &str) -> Error {
    Error::ConfigError {
        key: key.into(),
        detail: "required by this command but not set".into(),
    }
}

impl ExperimentConfig {
    /// Parse a TOML file. Syntax and unknown-key errors carry the parser's
    /// location message.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigError {
            key: path.display().to_string(),
            detail: format!("cannot read configuration: {e}"),
        })?;
        toml::from_str(&text).map_err(|e| Error::ConfigError {
            key: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Fold command-line overrides into the configuration, producing the
    /// resolved form the artifacts hash.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        replicas: Option<usize>,
        out: Option<PathBuf>,
    ) {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if let Some(r) = replicas {
            self.replicas = Some(r);
        }
        if let Some(o) = out {
            self.output_dir = Some(o);
        } else if self.output_dir.is_none() {
            if let Ok(env_out) = std::env::var("RENORMLAB_OUT") {
                self.output_dir = Some(env_out.into());
            }
        }
    }

    pub fn equation(&self) -> Result<Equation> {
        self.equation.ok_or_else(|| missing("equation"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn replicas(&self) -> usize {
        self.replicas.unwrap_or(200)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("artifacts"))
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.n.ok_or_else(|| missing("grid.n"))?)
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon.unwrap_or(1.0)
    }

    pub fn nt(&self) -> Result<usize> {
        match self.grid.nt {
            Some(0) => Err(Error::ConfigError {
                key: "grid.nt".into(),
                detail: "needs at least one time step".into(),
            }),
            Some(nt) => Ok(nt),
            None => Ok(self.grid.n.ok_or_else(|| missing("grid.n"))?),
        }
    }

    pub fn stgrid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.grid()?, 0.0, self.horizon(), self.nt()?)
    }

    pub fn deltas(&self) -> Result<&[f64]> {
        match self.scales.deltas.as_deref() {
            Some([]) | None => Err(missing("scales.deltas")),
            Some(d) => Ok(d),
        }
    }

    pub fn lambdas(&self) -> Result<&[f64]> {
        match self.scales.lambdas.as_deref() {
            Some([]) | None => Err(missing("scales.lambdas")),
            Some(l) => Ok(l),
        }
    }

    pub fn matrix_map(&self) -> Result<MatrixMap<f64>> {
        self.coefficients.ok_or_else(|| missing("coefficients"))
    }

    pub fn mollifier_shape(&self) -> MollifierShape {
        self.mollifier.shape.unwrap_or(MollifierShape::StandardBump)
    }

    pub fn counterterm_mode(&self) -> CountertermMode {
        self.renormalization.mode.unwrap_or(CountertermMode::Function)
    }

    pub fn correlation_spec(&self) -> Option<CorrelationSpec<f64>> {
        self.correlation.as_ref().map(|c| CorrelationSpec {
            amplitude: c.amplitude,
            kernel_scale: c.kernel_scale,
            mu: c.mu,
        })
    }

    /// Reference level of the conditioning field (μ when correlated, 0
    /// otherwise) — where deterministic reports evaluate the matrix map.
    pub fn eta0(&self) -> f64 {
        self.correlation.as_ref().map_or(0.0, |c| c.mu)
    }

    pub fn pam_g(&self) -> ScalarNonlinearity<f64> {
        self.pam.g.unwrap_or(ScalarNonlinearity::ScaledTanh(0.1))
    }

    pub fn pam_f(&self) -> ScalarNonlinearity<f64> {
        self.pam.f.unwrap_or(ScalarNonlinearity::Constant(0.05))
    }

    pub fn pam_u0(&self) -> f64 {
        self.pam.u0.unwrap_or(0.5)
    }

    pub fn phi_k(&self) -> Result<usize> {
        let k = self.phi.k.ok_or_else(|| missing("phi.k"))?;
        if k == 0 {
            return Err(Error::ConfigError {
                key: "phi.k".into(),
                detail: "the drift degree must be ≥ 1 (0 has no drift to renormalize)".into(),
            });
        }
        Ok(k)
    }

    pub fn probe_q(&self) -> u32 {
        self.probe.q.unwrap_or(2)
    }

    pub fn probe_center(&self, grid: Grid2D) -> (usize, usize) {
        match self.probe.center {
            Some([ix, iy]) => (ix, iy),
            None => (grid.n() / 2, grid.n() / 2),
        }
    }

    pub fn probe_solve_nt(&self, grid: Grid2D) -> usize {
        self.probe.solve_nt.unwrap_or(grid.n() / 2)
    }

    pub fn probe_center_time_fraction(&self) -> f64 {
        self.probe.center_time_fraction.unwrap_or(0.5)
    }

    /// Reject scale lists the grid cannot resolve, before any work starts.
    ///
    /// Spatial rule: δ ≥ 2·spacing and 4·spacing ≤ λ ≤ 1. With
    /// `parabolic = true` additionally δ² ≥ 2·dt and λ² ≥ 2·dt on the
    /// configured time grid.
    pub fn validate_scales(&self, need_lambdas: bool, parabolic: bool) -> Result<()> {
        let grid = self.grid()?;
        let h = grid.spacing();
        let dt = if parabolic {
            self.horizon() / self.nt()? as f64
        } else {
            0.0
        };
        for &d in self.deltas()? {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::ConfigError {
                    key: "scales.deltas".into(),
                    detail: format!("scales must be positive and finite, got {d}"),
                });
            }
            if d < 2.0 * h {
                return Err(Error::UnresolvableScale {
                    what: "mollification scale".into(),
                    value: d,
                    limit: 2.0 * h,
                    context: format!("grid spacing {h} cannot resolve δ = {d}"),
                });
            }
            if parabolic && d * d < 2.0 * dt {
                return Err(Error::UnresolvableScale {
                    what: "mollification time scale".into(),
                    value: d * d,
                    limit: 2.0 * dt,
                    context: format!("time step {dt} cannot resolve δ² = {}", d * d),
                });
            }
        }
        if need_lambdas {
            for &l in self.lambdas()? {
                if !(l.is_finite() && l > 0.0 && l <= 1.0) {
                    return Err(Error::ConfigError {
                        key: "scales.lambdas".into(),
                        detail: format!("observation scales must lie in (0, 1], got {l}"),
                    });
                }
                if l < 4.0 * h {
                    return Err(Error::UnresolvableScale {
                        what: "observation scale".into(),
                        value: l,
                        limit: 4.0 * h,
                        context: format!("grid spacing {h} cannot resolve λ = {l}"),
                    });
                }
                if parabolic && l * l < 2.0 * dt {
                    return Err(Error::UnresolvableScale {
                        what: "observation time scale".into(),
                        value: l * l,
                        limit: 2.0 * dt,
                        context: format!("time step {dt} cannot resolve λ² = {}", l * l),
                    });
                }
            }
        }
        Ok(())
    }

    /// Deterministic coefficient field at the reference level `η₀`.
    pub fn frozen_coefficients(&self, grid: Grid2D) -> Result<CoefficientField<f64>> {
        let map = self.matrix_map()?;
        let h = Field2D::from_fn(grid, |_, _| self.eta0());
        CoefficientField::from_h(h, map)
    }

    /// Coefficient field for one noise realization: correlated when the
    /// `[correlation]` section is active, frozen otherwise.
    pub fn coefficients_for(
        &self,
        xi: &Field2D<f64>,
        sp: &mut Spectral2D<f64>,
    ) -> Result<CoefficientField<f64>> {
        let map = self.matrix_map()?;
        match self.correlation_spec() {
            Some(c) if c.amplitude != 0.0 => CoefficientField::correlated_with_noise(
                xi,
                c.kernel_scale,
                c.amplitude,
                c.mu,
                self.mollifier_shape(),
                map,
                sp,
            ),
            _ => self.frozen_coefficients(xi.grid()),
        }
    }

    /// Shared builder for the spatial probes and the variance experiment.
    pub fn probe_setup(&self) -> Result<ProbeSetup<f64>> {
        let grid = self.grid()?;
        self.validate_scales(true, false)?;
        Ok(ProbeSetup {
            grid,
            shape: self.mollifier_shape(),
            map: self.matrix_map()?,
            correlation: self.correlation_spec(),
            lambdas: self.lambdas()?.to_vec(),
            deltas: self.deltas()?.to_vec(),
            q: self.probe_q(),
            replicas: self.replicas(),
            master_seed: self.seed(),
            solve_nt: self.probe_solve_nt(grid),
            center: self.probe_center(grid),
        })
    }

    /// Builder for the space-time Wick-power probe (frozen coefficients).
    pub fn spacetime_probe_setup(&self, degree: usize) -> Result<SpaceTimeProbeSetup<f64>> {
        let grid = self.grid()?;
        self.validate_scales(true, true)?;
        if let Some(c) = &self.correlation {
            if c.amplitude != 0.0 {
                return Err(Error::ConfigError {
                    key: "correlation.amplitude".into(),
                    detail: "the space-time power probe runs with frozen coefficients; \
                             the correlated regime is exercised by the spatial probes \
                             and the variance experiment"
                        .into(),
                });
            }
        }
        Ok(SpaceTimeProbeSetup {
            grid,
            horizon: self.horizon(),
            nt: self.nt()?,
            shape: self.mollifier_shape(),
            matrix: self.matrix_map()?.eval(self.eta0()),
            lambdas: self.lambdas()?.to_vec(),
            deltas: self.deltas()?.to_vec(),
            q: self.probe_q(),
            replicas: self.replicas(),
            master_seed: self.seed(),
            center_time_fraction: self.probe_center_time_fraction(),
            center: self.probe_center(grid),
            degree,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
equation = "pam"
seed = 7
[grid]
n = 32
[scales]
deltas = [0.25, 0.125]
lambdas = [0.25]
[coefficients]
family = "constant"
matrix = { a11 = 1.0, a12 = 0.0, a22 = 1.0 }
"#;

    #[test]
    fn minimal_config_parses_and_defaults_apply() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.equation().unwrap(), Equation::Pam);
        assert_eq!(cfg.seed(), 7);
        assert_eq!(cfg.replicas(), 200);
        assert_eq!(cfg.probe_q(), 2);
        assert_eq!(cfg.counterterm_mode(), CountertermMode::Function);
        assert_eq!(cfg.mollifier_shape(), MollifierShape::StandardBump);
        assert!(cfg.validate_scales(true, false).is_ok());
        let m = cfg.matrix_map().unwrap().eval(0.3);
        assert_eq!((m.a11, m.a12, m.a22), (1.0, 0.0, 1.0));
    }

    #[test]
    fn missing_keys_are_named() {
        let cfg: ExperimentConfig = toml::from_str("equation = \"phi\"").unwrap();
        match cfg.deltas() {
            Err(Error::ConfigError { key, .. }) => assert_eq!(key, "scales.deltas"),
            other => panic!("expected ConfigError, got {other:?}"),
        }
        match cfg.phi_k() {
            Err(Error::ConfigError { key, .. }) => assert_eq!(key, "phi.k"),
            other => panic!("expected ConfigError, got {other:?}"),
        }
        let zero_k: ExperimentConfig =
            toml::from_str("equation = \"phi\"\n[phi]\nk = 0").unwrap();
        assert!(matches!(zero_k.phi_k(), Err(Error::ConfigError { .. })));
    }

    #[test]
    fn unknown_keys_and_unresolvable_scales_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("equatino = \"pam\"").is_err());
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.scales.deltas = Some(vec![0.01]); // below 2·spacing at n = 32
        assert!(matches!(
            cfg.validate_scales(false, false),
            Err(Error::UnresolvableScale { .. })
        ));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.apply_overrides(Some(99), Some(500), Some(PathBuf::from("elsewhere")));
        assert_eq!(cfg.seed(), 99);
        assert_eq!(cfg.replicas(), 500);
        assert_eq!(cfg.out_dir(), PathBuf::from("elsewhere"));
    }

    #[test]
    fn nonlinearity_and_mode_spellings_parse() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
[pam]
g = { kind = "scaled-tanh", value = 0.2 }
f = { kind = "zero" }
[renormalization]
mode = "none"
"#,
        )
        .unwrap();
        assert_eq!(cfg.pam_g(), ScalarNonlinearity::ScaledTanh(0.2));
        assert_eq!(cfg.pam_f(), ScalarNonlinearity::Zero);
        assert_eq!(cfg.counterterm_mode(), CountertermMode::Off);
    }
}
