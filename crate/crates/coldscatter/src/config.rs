//! Dimensionless unit system and validated simulation configuration.
//!
//! All quantities entering any operation are dimensionless:
//!
//! | quantity          | unit                    |
//! |-------------------|-------------------------|
//! | length            | reduced wavelength `λ̄ = 1/k₀` |
//! | time              | excited-state lifetime `1/γ`  |
//! | frequency         | natural linewidth `γ`          |
//! | velocity          | `λ̄γ`, i.e. `k₀v/γ`            |
//! | field amplitude   | Rabi frequency in units of `γ` |
//!
//! Neither `k₀` nor `γ` appears as a free runtime parameter; both equal 1.
//! Configurations are parsed from a flat key = value text file, validated in
//! one pass (every violation reported at once), and immutable afterwards.

use crate::{Error, Result};
use serde::Deserialize;

/// The dimensionless unit system, fixed once and for all.
///
/// This type carries no data; it exists to document the conventions and to
/// host the two constants that every formula silently uses.
#[derive(Debug, Clone, Copy)]
pub struct UnitSystem;

impl UnitSystem {
    /// Wavenumber of the atomic transition, `k₀ = ω₀/c`. Lengths are
    /// measured in `1/k₀`, so the numerical value is 1.
    pub const K0: f64 = 1.0;
    /// Natural decay rate of each excited Zeeman sublevel. Times are
    /// measured in `1/γ`, so the numerical value is 1.
    pub const GAMMA: f64 = 1.0;
}

/// Physical dials of the model, all in `γ` / `λ̄` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Laser detuning `δ` from the free-atom resonance (γ units).
    pub delta: f64,
    /// Zeeman splitting `Δ` between adjacent excited sublevels (γ units, ≥ 0).
    pub zeeman: f64,
    /// Rabi amplitude `Ω₀` of the incident field (γ units, > 0). In the
    /// weak-excitation linear theory every reported observable is invariant
    /// under rescaling `Ω₀`; the default 0.1 is a numerical convenience only.
    pub rabi: f64,
    /// Velocity scale `k₀v₀` of the Gaussian velocity distribution (≥ 0).
    pub v0: f64,
    /// Number density `nλ̄³` (> 0).
    pub density: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            delta: 0.0,
            zeeman: 0.0,
            rabi: 0.1,
            v0: 0.0,
            density: 0.1,
        }
    }
}

impl PhysParams {
    /// Doppler width `Δ_D = 2√(2 ln 2)·k₀v₀` (γ units).
    pub fn doppler_width(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * self.v0
    }
}

/// Sample shape: a slab probed in transmission, or a cube used for the
/// spontaneous-decay experiment (no detector).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Slab,
    Cube,
}

/// Sample box and detector placement, in `λ̄` units.
///
/// The box occupies `x, y ∈ [-L_t/2, L_t/2]`, `z ∈ [0, L]` with the beam
/// propagating along `+z`. For a slab, a square detector of side `L_d`
/// centred on the beam axis sits in the plane `z = L + detector_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub shape: Shape,
    /// Transverse box size `k₀L_t` (equals `l` for a cube).
    pub lt: f64,
    /// Thickness `k₀L` along the beam axis.
    pub l: f64,
    /// Detector side `k₀L_d` (slab only).
    pub ld: f64,
    /// Distance `k₀(z - L)` from the back face to the detector plane (slab only).
    pub detector_offset: f64,
}

impl Geometry {
    pub fn slab(lt: f64, l: f64, ld: f64, detector_offset: f64) -> Self {
        Geometry {
            shape: Shape::Slab,
            lt,
            l,
            ld,
            detector_offset,
        }
    }

    /// Cube of side `l`; carries no detector.
    pub fn cube(l: f64) -> Self {
        Geometry {
            shape: Shape::Cube,
            lt: l,
            l,
            ld: 0.0,
            detector_offset: 0.0,
        }
    }

    pub fn volume(&self) -> f64 {
        self.lt * self.lt * self.l
    }

    /// Lower box corner.
    pub fn lo(&self) -> [f64; 3] {
        [-0.5 * self.lt, -0.5 * self.lt, 0.0]
    }

    /// Upper box corner.
    pub fn hi(&self) -> [f64; 3] {
        [0.5 * self.lt, 0.5 * self.lt, self.l]
    }

    /// Geometric centre of the box.
    pub fn center(&self) -> [f64; 3] {
        [0.0, 0.0, 0.5 * self.l]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let lo = self.lo();
        let hi = self.hi();
        (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
    }
}

/// Number of atoms for a given density and box: `N = round(nλ̄³ · V)`.
///
/// Rounding to nearest is the least-biased mapping from the quoted density
/// to an integer count. A box too small to hold one atom is rejected.
pub fn atom_count(density: f64, geometry: &Geometry) -> Result<usize> {
    if !(density > 0.0) {
        return Err(Error::Config(vec![format!(
            "density must be positive, got {density}"
        )]));
    }
    let n = (density * geometry.volume()).round();
    if n < 1.0 {
        return Err(Error::Config(vec![format!(
            "box too small for one atom: round({} * {}) = 0",
            density,
            geometry.volume()
        )]));
    }
    Ok(n as usize)
}

/// Numerical plan of a run: horizons, sampling, ensemble size, seed,
/// integrator tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    /// End of integration, `γ⁻¹` units.
    pub t_end: f64,
    /// Observable sampling period (`γ⁻¹`).
    pub sample_dt: f64,
    /// Transient cut `t₀`: time averages start here (`γ⁻¹`).
    pub transient_cut: f64,
    /// Ensemble size (number of independent initial conditions).
    pub n_configs: u64,
    /// Master seed; per-configuration streams are derived from it.
    pub seed: u64,
    /// Relative tolerance of the adaptive integrator.
    pub rel_tol: f64,
    /// Absolute tolerance floor of the adaptive integrator.
    pub abs_tol: f64,
    /// Kernel refresh displacement `ε_r` (λ̄): the dipole-dipole matrix is
    /// reassembled whenever any atom has moved this far since the last
    /// assembly. Drive phases always use exact positions.
    pub kernel_refresh: f64,
    /// Detector quadrature order: the detector is sampled on an
    /// `n_d × n_d` midpoint grid.
    pub detector_grid: usize,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            t_end: 1150.0,
            sample_dt: 1.0,
            transient_cut: 150.0,
            n_configs: 100,
            seed: 1,
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            kernel_refresh: 1e-3,
            detector_grid: 32,
        }
    }
}

/// A validated, immutable simulation configuration.
///
/// Construction goes through [`validate_config`] (or [`SimConfig::from_str`] /
/// [`SimConfig::from_path`] for the text format); afterwards the parts are
/// only readable. Freely shareable across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    params: PhysParams,
    geometry: Geometry,
    plan: RunPlan,
    n_atoms: usize,
}

impl SimConfig {
    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn plan(&self) -> &RunPlan {
        &self.plan
    }

    /// Atom count derived from density and box volume at validation time.
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Copy with a different master seed (used by the `--seed` CLI override).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.plan.seed = seed;
        self
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
            context: "config".into(),
            message: e.to_string(),
        })?;
        raw.build()
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_str(&text)
    }
}

/// Validate parameters, geometry and plan together, reporting every violated
/// invariant at once. Re-validating the parts of a validated config is
/// idempotent.
pub fn validate_config(params: PhysParams, geometry: Geometry, plan: RunPlan) -> Result<SimConfig> {
    let mut errors = Vec::new();

    let finite = |v: f64| v.is_finite();

    if !finite(params.delta) {
        errors.push(format!("non-finite detuning delta = {}", params.delta));
    }
    if !(params.zeeman >= 0.0 && finite(params.zeeman)) {
        errors.push(format!("negative Zeeman splitting: {}", params.zeeman));
    }
    if !(params.rabi > 0.0 && finite(params.rabi)) {
        errors.push(format!("Rabi amplitude must be positive: {}", params.rabi));
    }
    if !(params.v0 >= 0.0 && finite(params.v0)) {
        errors.push(format!("negative velocity scale: {}", params.v0));
    }
    if !(params.density > 0.0 && finite(params.density)) {
        errors.push(format!("density must be positive: {}", params.density));
    }

    if !(geometry.l > 0.0 && finite(geometry.l)) {
        errors.push(format!("thickness l must be positive: {}", geometry.l));
    }
    if !(geometry.lt > 0.0 && finite(geometry.lt)) {
        errors.push(format!("transverse size lt must be positive: {}", geometry.lt));
    }
    match geometry.shape {
        Shape::Slab => {
            if !(geometry.ld > 0.0 && finite(geometry.ld)) {
                errors.push(format!("detector side ld must be positive: {}", geometry.ld));
            }
            if geometry.ld > geometry.lt {
                errors.push(format!(
                    "detector larger than sample: ld = {} > lt = {}",
                    geometry.ld, geometry.lt
                ));
            }
            if !(geometry.detector_offset > 0.0 && finite(geometry.detector_offset)) {
                errors.push(format!(
                    "detector plane must lie strictly outside the box: offset = {}",
                    geometry.detector_offset
                ));
            }
        }
        Shape::Cube => {
            if geometry.lt != geometry.l {
                errors.push(format!(
                    "cube requires lt = l, got lt = {}, l = {}",
                    geometry.lt, geometry.l
                ));
            }
        }
    }

    if !(plan.transient_cut >= 0.0 && finite(plan.transient_cut)) {
        errors.push(format!("transient_cut must be >= 0: {}", plan.transient_cut));
    }
    if !(plan.t_end > plan.transient_cut) {
        errors.push(format!(
            "t_end must exceed transient_cut: t_end = {}, transient_cut = {}",
            plan.t_end, plan.transient_cut
        ));
    }
    if !(plan.sample_dt > 0.0 && finite(plan.sample_dt)) {
        errors.push(format!("sample_dt must be positive: {}", plan.sample_dt));
    }
    if plan.n_configs < 1 {
        errors.push("n_configs must be at least 1".into());
    }
    if !(plan.rel_tol > 0.0 && finite(plan.rel_tol)) {
        errors.push(format!("rel_tol must be positive: {}", plan.rel_tol));
    }
    if !(plan.abs_tol >= 0.0 && finite(plan.abs_tol)) {
        errors.push(format!("abs_tol must be >= 0: {}", plan.abs_tol));
    }
    if !(plan.kernel_refresh > 0.0 && finite(plan.kernel_refresh)) {
        errors.push(format!(
            "kernel_refresh must be positive: {}",
            plan.kernel_refresh
        ));
    }
    if plan.detector_grid < 1 {
        errors.push("detector_grid must be at least 1".into());
    }

    // Atom count only makes sense once density and geometry are sane.
    let n_atoms = if errors.is_empty() {
        match atom_count(params.density, &geometry) {
            Ok(n) => n,
            Err(Error::Config(mut msgs)) => {
                errors.append(&mut msgs);
                0
            }
            Err(e) => return Err(e),
        }
    } else {
        0
    };

    if errors.is_empty() {
        Ok(SimConfig {
            params,
            geometry,
            plan,
            n_atoms,
        })
    } else {
        Err(Error::Config(errors))
    }
}

/// On-disk schema: a flat key = value file. The key set is fixed; unknown
/// keys are errors. Numerical-plan keys fall back to [`RunPlan`] defaults,
/// `delta`/`zeeman`/`rabi`/`v0` to [`PhysParams`] defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    delta: Option<f64>,
    zeeman: Option<f64>,
    rabi: Option<f64>,
    v0: Option<f64>,
    density: f64,
    lt: Option<f64>,
    l: f64,
    ld: Option<f64>,
    detector_offset: Option<f64>,
    shape: String,
    t_end: Option<f64>,
    sample_dt: Option<f64>,
    transient_cut: Option<f64>,
    n_configs: Option<u64>,
    seed: Option<u64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    kernel_refresh: Option<f64>,
    detector_grid: Option<usize>,
}

impl RawConfig {
    fn build(self) -> Result<SimConfig> {
        let defaults = PhysParams::default();
        let params = PhysParams {
            delta: self.delta.unwrap_or(defaults.delta),
            zeeman: self.zeeman.unwrap_or(defaults.zeeman),
            rabi: self.rabi.unwrap_or(defaults.rabi),
            v0: self.v0.unwrap_or(defaults.v0),
            density: self.density,
        };

        let geometry = match self.shape.as_str() {
            "slab" => {
                let lt = self.lt.ok_or_else(|| {
                    Error::Config(vec!["slab requires the lt key".into()])
                })?;
                Geometry::slab(
                    lt,
                    self.l,
                    self.ld.unwrap_or(0.5 * lt),
                    self.detector_offset.unwrap_or(12.0),
                )
            }
            "cube" => {
                if self.ld.is_some() || self.detector_offset.is_some() {
                    return Err(Error::Config(vec![
                        "cube geometry carries no detector: remove ld / detector_offset".into(),
                    ]));
                }
                if let Some(lt) = self.lt {
                    if lt != self.l {
                        return Err(Error::Config(vec![format!(
                            "cube requires lt = l, got lt = {lt}, l = {}",
                            self.l
                        )]));
                    }
                }
                Geometry::cube(self.l)
            }
            other => {
                return Err(Error::Config(vec![format!(
                    "unknown shape {other:?} (expected \"slab\" or \"cube\")"
                )]))
            }
        };

        let dp = RunPlan::default();
        let plan = RunPlan {
            t_end: self.t_end.unwrap_or(dp.t_end),
            sample_dt: self.sample_dt.unwrap_or(dp.sample_dt),
            transient_cut: self.transient_cut.unwrap_or(dp.transient_cut),
            n_configs: self.n_configs.unwrap_or(dp.n_configs),
            seed: self.seed.unwrap_or(dp.seed),
            rel_tol: self.rel_tol.unwrap_or(dp.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(dp.abs_tol),
            kernel_refresh: self.kernel_refresh.unwrap_or(dp.kernel_refresh),
            detector_grid: self.detector_grid.unwrap_or(dp.detector_grid),
        };

        validate_config(params, geometry, plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_slab() -> (PhysParams, Geometry, RunPlan) {
        let params = PhysParams {
            delta: 0.5,
            zeeman: 100.0,
            rabi: 0.1,
            v0: 0.025,
            density: 0.2,
        };
        let geometry = Geometry::slab(50.0, 6.0, 25.0, 12.0);
        (params, geometry, RunPlan::default())
    }

    #[test]
    fn atom_count_examples() {
        // cube k0L = 16 at density 0.1: round(0.1 * 4096) = 410
        assert_eq!(atom_count(0.1, &Geometry::cube(16.0)).unwrap(), 410);
        // paper slab 50 x 50 x 6 at density 0.2
        assert_eq!(
            atom_count(0.2, &Geometry::slab(50.0, 6.0, 25.0, 12.0)).unwrap(),
            3000
        );
        // one atom in a unit cube at density 1
        assert_eq!(atom_count(1.0, &Geometry::cube(1.0)).unwrap(), 1);
    }

    #[test]
    fn atom_count_rejects_empty_box() {
        assert!(atom_count(1e-3, &Geometry::cube(1.0)).is_err());
        assert!(atom_count(0.0, &Geometry::cube(10.0)).is_err());
        assert!(atom_count(-0.1, &Geometry::cube(10.0)).is_err());
    }

    #[test]
    fn atom_count_monotone() {
        let mut prev = 0;
        for k in 1..40 {
            let d = 0.05 * k as f64;
            let n = atom_count(d, &Geometry::cube(8.0)).unwrap();
            assert!(n >= prev, "density {d}: {n} < {prev}");
            prev = n;
        }
        let mut prev = 0;
        for k in 1..40 {
            let l = 2.0 + 0.5 * k as f64;
            let n = atom_count(0.1, &Geometry::cube(l)).unwrap();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn paper_defaults_validate() {
        let (p, g, r) = paper_slab();
        let cfg = validate_config(p, g, r).unwrap();
        assert_eq!(cfg.n_atoms(), 3000);
        assert!((cfg.params().doppler_width() - 2.0 * (2.0 * f64::ln(2.0)).sqrt() * 0.025).abs() < 1e-15);
    }

    #[test]
    fn validation_collects_all_errors() {
        let (mut p, mut g, r) = paper_slab();
        p.v0 = -0.01;
        g.ld = 60.0; // larger than lt = 50
        let err = validate_config(p, g, r).unwrap_err();
        match err {
            Error::Config(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("negative velocity scale")));
                assert!(msgs.iter().any(|m| m.contains("detector larger than sample")));
                assert_eq!(msgs.len(), 2);
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn revalidation_is_idempotent() {
        let (p, g, r) = paper_slab();
        let cfg = validate_config(p, g, r).unwrap();
        let again = validate_config(*cfg.params(), *cfg.geometry(), cfg.plan().clone()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn doppler_width_of_v0_001() {
        let p = PhysParams {
            v0: 0.01,
            ..PhysParams::default()
        };
        // 2 sqrt(2 ln 2) * 0.01 ≈ 0.0235; gamma / Δ_D ≈ 42, "tens of times"
        // smaller than the linewidth.
        assert!((p.doppler_width() - 0.023548200450309493).abs() < 1e-15);
        assert!(1.0 / p.doppler_width() > 40.0);
    }

    #[test]
    fn parse_flat_file() {
        let text = r#"
            shape = "slab"
            density = 0.2
            lt = 50.0
            l = 6.0
            ld = 25.0
            detector_offset = 12.0
            delta = 0.5
            zeeman = 100.0
            v0 = 0.025
            seed = 7
        "#;
        let cfg = SimConfig::from_str(text).unwrap();
        assert_eq!(cfg.n_atoms(), 3000);
        assert_eq!(cfg.plan().seed, 7);
        assert_eq!(cfg.plan().t_end, 1150.0); // default
        assert_eq!(cfg.plan().detector_grid, 32); // default
    }

    #[test]
    fn parse_rejects_unknown_keys() {
        let text = "shape = \"cube\"\ndensity = 0.1\nl = 10.0\nbogus_key = 3\n";
        let err = SimConfig::from_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key"), "message was: {msg}");
    }

    #[test]
    fn parse_cube_rejects_detector_keys() {
        let text = "shape = \"cube\"\ndensity = 0.1\nl = 10.0\nld = 5.0\n";
        assert!(SimConfig::from_str(text).is_err());
    }

    #[test]
    fn cube_geometry_is_square() {
        let g = Geometry::cube(16.0);
        assert_eq!(g.lt, 16.0);
        assert_eq!(g.volume(), 4096.0);
        assert_eq!(g.center(), [0.0, 0.0, 8.0]);
        assert!(g.contains([0.0, 0.0, 0.0]));
        assert!(!g.contains([0.0, 0.0, -0.1]));
    }
}
