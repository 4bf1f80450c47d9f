//! Ready-made model setups shared by the runner, the CLI and the tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{
    self, ActionAnglePair, EquilibriumCriterion, PhaseBox, SurfaceReport, SymbolGenerator, Trajectory,
};
use crate::error::{Error, Result};
use crate::friedrichs::{
    build_one_excitation_hamiltonian, offdiagonal_envelope, reduced_density, AlphaConvention, CoherentPairDynamics,
    CoherentPairInit, FriedrichsConfig, Propagator, SpectralDensity,
};
use crate::linalg::{self, CMatrix, CVector};
use crate::modes::{self, privileged_state, OperatorModes};
use crate::mpb;
use crate::poles::{self, ComplexPole, PoleCatalogue};
use crate::state::DensityMatrix;
use crate::wwm::{self, Derivatives, PositionGrid};

/// Oscillator at the centre of a flat band, prepared in
/// `sqrt(1-p)|0⟩ + sqrt(p)|1⟩` with the bath in its vacuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatBandParams {
    pub g: f64,
    pub width: f64,
    pub omega: f64,
    pub modes: usize,
    pub hbar: f64,
    pub excited_population: f64,
}

impl Default for FlatBandParams {
    fn default() -> Self {
        Self { g: 0.05, width: 2.0, omega: 1.0, modes: 400, hbar: 1.0, excited_population: 0.05 }
    }
}

impl FlatBandParams {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.g >= 0.0 && self.g.is_finite()) {
            out.push(("g".into(), format!("must be finite and >= 0, got {}", self.g)));
        }
        if !(self.width > 0.0) {
            out.push(("width".into(), format!("must be > 0, got {}", self.width)));
        }
        if !self.omega.is_finite() {
            out.push(("omega".into(), "must be finite".into()));
        }
        if self.modes < 2 {
            out.push(("modes".into(), format!("must be >= 2, got {}", self.modes)));
        }
        if !(self.hbar > 0.0) {
            out.push(("hbar".into(), format!("must be > 0, got {}", self.hbar)));
        }
        if !(0.0..=1.0).contains(&self.excited_population) {
            out.push(("excited_population".into(), format!("must lie in [0, 1], got {}", self.excited_population)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FlatBand {
    pub params: FlatBandParams,
    pub density: SpectralDensity,
    pub config: FriedrichsConfig,
    propagator: Propagator,
}

impl FlatBand {
    pub fn new(params: FlatBandParams) -> Result<Self> {
        if let Some((path, message)) = params.violations().into_iter().next() {
            return Err(Error::Config { path, message });
        }
        let density = SpectralDensity::flat_band(params.g, params.omega, params.width);
        let config = FriedrichsConfig::from_density(params.omega, &density, params.modes, params.hbar);
        let h = build_one_excitation_hamiltonian(&config)?;
        let propagator = Propagator::new(&h, params.hbar)?;
        Ok(Self { params, density, config, propagator })
    }

    /// Resonance of the system oscillator, in energy units.
    pub fn pole(&self) -> Result<ComplexPole> {
        let p = &self.params;
        let seed = poles::golden_rule_seed(&self.density, p.omega);
        let z = poles::find_pole(&self.density, p.omega, seed)?;
        Ok(ComplexPole { omega: p.hbar * z.omega, gamma: p.hbar * z.gamma })
    }

    /// The one-excitation ladder: a single pole.
    pub fn catalogue(&self) -> Result<PoleCatalogue> {
        poles::pole_ladder(self.pole()?, 1)
    }

    pub fn relaxation_time(&self) -> Result<f64> {
        poles::relaxation_time(&self.catalogue()?, self.params.hbar)
    }

    pub fn recurrence_time(&self) -> f64 {
        self.config.recurrence_time()
    }

    pub fn survival_amplitude(&self, t: f64) -> Complex64 {
        self.propagator.survival_amplitude(t)
    }

    /// Full state on `system ⊗ environment` with the environment spanned by
    /// the vacuum and the one-quantum bath states.
    pub fn full_state(&self, t: f64) -> CVector {
        let env = self.params.modes + 1;
        let alpha = (1.0 - self.params.excited_population).sqrt();
        let beta = self.params.excited_population.sqrt();
        let column = self.propagator.column(t);
        let mut psi = CVector::zeros(2 * env);
        psi[0] = Complex64::new(alpha, 0.0);
        psi[env] = column[0] * beta;
        for k in 1..env {
            psi[k] = column[k] * beta;
        }
        psi
    }

    pub fn reduced_state(&self, t: f64) -> Result<DensityMatrix> {
        reduced_density(&self.full_state(t), 2, self.params.modes + 1)
    }

    pub fn reduced_series(&self, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        times.iter().map(|&t| self.reduced_state(t)).collect()
    }
}

/// Superposition of two coherent states of the same oscillator, separated
/// by `separation` and placed symmetrically about the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherentPairParams {
    pub g: f64,
    pub width: f64,
    pub omega: f64,
    pub modes: usize,
    pub hbar: f64,
    pub mass: f64,
    pub separation: f64,
    pub a: f64,
    pub b: f64,
    pub fock_cutoff: usize,
    pub convention: AlphaConvention,
}

impl Default for CoherentPairParams {
    fn default() -> Self {
        Self {
            g: 0.05,
            width: 2.0,
            omega: 1.0,
            modes: 400,
            hbar: 1.0,
            mass: 1.0,
            separation: 1.0,
            a: std::f64::consts::FRAC_1_SQRT_2,
            b: std::f64::consts::FRAC_1_SQRT_2,
            fock_cutoff: 40,
            convention: AlphaConvention::Stated,
        }
    }
}

impl CoherentPairParams {
    fn band(&self) -> FlatBandParams {
        FlatBandParams {
            g: self.g,
            width: self.width,
            omega: self.omega,
            modes: self.modes,
            hbar: self.hbar,
            excited_population: 0.0,
        }
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = self.band().violations();
        if !(self.mass > 0.0) {
            out.push(("mass".into(), format!("must be > 0, got {}", self.mass)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            out.push(("separation".into(), format!("must be finite and >= 0, got {}", self.separation)));
        }
        if self.a == 0.0 && self.b == 0.0 {
            out.push(("a".into(), "a and b cannot both vanish".into()));
        }
        if self.fock_cutoff < 1 {
            out.push(("fock_cutoff".into(), "must be >= 1".into()));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CoherentPair {
    pub params: CoherentPairParams,
    pub band: FlatBand,
    pub dynamics: CoherentPairDynamics,
}

impl CoherentPair {
    pub fn new(params: CoherentPairParams) -> Result<Self> {
        if let Some((path, message)) = params.violations().into_iter().next() {
            return Err(Error::Config { path, message });
        }
        let band = FlatBand::new(params.band())?;
        let mut cfg = band.config.clone();
        cfg.mass = params.mass;
        cfg.fock_cutoff = params.fock_cutoff;
        let omega_eff = band.pole()?.omega / params.hbar;
        let init = CoherentPairInit {
            x1: -0.5 * params.separation,
            x2: 0.5 * params.separation,
            a: Complex64::new(params.a, 0.0),
            b: Complex64::new(params.b, 0.0),
        };
        let dynamics = CoherentPairDynamics::new(&init, &cfg, omega_eff, params.convention)?;
        Ok(Self { params, band, dynamics })
    }

    pub fn reduced_state(&self, t: f64) -> Result<DensityMatrix> {
        self.dynamics.reduced_state(self.band.survival_amplitude(t))
    }

    /// Off-diagonal envelope in the co-moving coherent basis.
    pub fn envelope(&self, times: &[f64]) -> Result<Vec<f64>> {
        if self.params.separation == 0.0 {
            // both branches are the same state: nothing to decohere
            let (a, b) = (self.params.a, self.params.b);
            return Ok(vec![2.0 * (a * b).abs() / ((a + b) * (a + b)); times.len()]);
        }
        let mut states = Vec::with_capacity(times.len());
        let mut pairs = Vec::with_capacity(times.len());
        for &t in times {
            let u = self.band.survival_amplitude(t);
            states.push(self.dynamics.reduced_state(u)?);
            pairs.push(self.dynamics.basis_pair(u));
        }
        offdiagonal_envelope(&states, &pairs)
    }

    /// Initial decay rate of the envelope, fitted on `[0, window]`.
    pub fn decoherence_rate(&self, window: f64, samples: usize) -> Result<f64> {
        let times = uniform_times(window, samples);
        let env = self.envelope(&times)?;
        Ok(-crate::modes::log_slope(&times, &env)?)
    }

    /// `1/rate` from a fit over the first tenth of the relaxation time.
    pub fn decoherence_time(&self) -> Result<f64> {
        let window = 0.1 * self.band.relaxation_time()?;
        let rate = self.decoherence_rate(window, 60)?;
        if !(rate > 0.0) {
            return Err(Error::NoRelaxation);
        }
        Ok(1.0 / rate)
    }

    /// `2ħ²/(m ω L²)`, the ratio `t_D/t_R` predicted for this geometry.
    pub fn predicted_ratio(&self) -> f64 {
        let p = &self.params;
        2.0 * p.hbar * p.hbar / (p.mass * p.omega * p.separation * p.separation)
    }
}

/// Settings for turning the flat-band preferred basis into a phase-space
/// trajectory. Times are in units of the relaxation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryParams {
    pub mass: f64,
    pub horizon: f64,
    pub fit_samples: usize,
    pub steps: usize,
    pub outputs: usize,
    /// Action at the centre of the initial box, in units of ħ.
    pub box_action: f64,
    pub grid_points: usize,
    /// Half width of the position grid in oscillator lengths.
    pub grid_extent: f64,
    pub equilibrium_relative: f64,
    pub equilibrium_window: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            horizon: 5.0,
            fit_samples: 400,
            steps: 6000,
            outputs: 300,
            box_action: 0.5,
            grid_points: 48,
            grid_extent: 6.0,
            equilibrium_relative: 1e-3,
            equilibrium_window: 0.5,
        }
    }
}

impl TrajectoryParams {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let positive = [
            ("mass", self.mass),
            ("horizon", self.horizon),
            ("box_action", self.box_action),
            ("grid_extent", self.grid_extent),
            ("equilibrium_relative", self.equilibrium_relative),
            ("equilibrium_window", self.equilibrium_window),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push((name.to_string(), format!("must be finite and > 0, got {v}")));
            }
        }
        if self.fit_samples < 16 {
            out.push(("fit_samples".into(), format!("must be >= 16, got {}", self.fit_samples)));
        }
        if self.outputs < 2 || self.steps < self.outputs || !self.steps.is_multiple_of(self.outputs) {
            out.push(("steps".into(), "must be a positive multiple of outputs (outputs >= 2)".into()));
        }
        if self.grid_points < 16 {
            out.push(("grid_points".into(), format!("must be >= 16, got {}", self.grid_points)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalRun {
    pub relaxation_time: f64,
    pub decoherence_time: f64,
    pub slow_modes: usize,
    pub trajectory: Trajectory,
    pub report: SurfaceReport,
}

impl FlatBand {
    /// Privileged states on `[0, horizon·t_R]`, their moving basis and its
    /// generator, lifted to the oscillator phase space through the two
    /// lowest eigenfunctions, then the box-averaged action and angle.
    pub fn classical_trajectory(&self, tp: &TrajectoryParams) -> Result<ClassicalRun> {
        if let Some((path, message)) = tp.violations().into_iter().next() {
            return Err(Error::Config { path, message });
        }
        let hbar = self.params.hbar;
        let omega = self.params.omega;
        let tr = self.relaxation_time()?;
        let fit_times = uniform_times(tp.horizon * tr, tp.fit_samples);
        let states = self.reduced_series(&fit_times)?;
        let channels = self.catalogue()?.density_channels();
        let ops = OperatorModes::fit(&fit_times, &states, &channels, hbar)?;
        let eff = ops.effective_gamma()?;
        let td = modes::decoherence_time(&eff, hbar)?;
        let m = eff.slow_count();

        let times = uniform_times(tp.horizon * tr, tp.steps + 1);
        let ps = times.iter().map(|&t| Ok(privileged_state(&ops, m, t)?.state)).collect::<Result<Vec<_>>>()?;
        let basis = mpb::moving_preferred_basis(&times, &ps)?;
        let gens = mpb::effective_generator(&basis, hbar)?;
        let ops_basis = linalg::hermitian_basis(2);
        let coefficients = gens
            .generators
            .iter()
            .map(|g| {
                let g = g.as_ref().ok_or_else(|| Error::Contract("degenerate preferred basis".into()))?;
                Ok(ops_basis.iter().map(|h| linalg::trace(&(g * h)).re).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;

        let length = (hbar / (tp.mass * omega)).sqrt() * tp.grid_extent;
        let grid = PositionGrid::new(-length, length, tp.grid_points, hbar)?;
        let lift = oscillator_lift(&grid, 2, tp.mass, omega);
        let symbols = ops_basis
            .iter()
            .map(|h| Ok(wwm::wigner_transform(&(&lift * h * lift.adjoint()), &grid)?.map(|v| linalg::c(v.re))))
            .collect::<Result<Vec<_>>>()?;
        let gen = SymbolGenerator::new(&symbols, times.clone(), coefficients, Derivatives::Spectral)?;
        let rho0 = DensityMatrix::from_nearly_valid(&lift * states[0].matrix() * lift.adjoint())?;
        let rho_w = wwm::state_wigner(&rho0, &grid)?;
        let pair = ActionAnglePair::harmonic(grid.phase_space(), tp.mass, omega);
        let x0 = (2.0 * tp.box_action * hbar / (tp.mass * omega)).sqrt();
        let init = PhaseBox::coherent((x0, 0.0), tp.mass, omega, hbar)?;
        let stride = tp.steps / tp.outputs;
        let out_times: Vec<f64> = times.iter().step_by(stride).copied().collect();
        let trajectory = classical::evolve_phase_space(&gen, &pair, &rho_w, &init, &out_times, stride)?;
        let criterion = EquilibriumCriterion { relative: tp.equilibrium_relative, window: tp.equilibrium_window * tr };
        let report = classical::trajectory_surfaces(&trajectory, &criterion)?;
        Ok(ClassicalRun { relaxation_time: tr, decoherence_time: td, slow_modes: m, trajectory, report })
    }
}

/// Columns are the lowest `levels` oscillator eigenfunctions on the grid,
/// mapping a truncated-oscillator operator `A` to `V A V†`.
pub fn oscillator_lift(grid: &PositionGrid, levels: usize, mass: f64, omega: f64) -> CMatrix {
    let mut v = CMatrix::zeros(grid.n, levels);
    for k in 0..levels {
        v.set_column(k, &classical::oscillator_eigenstate(grid, k, mass, omega));
    }
    v
}

/// `n` uniformly spaced samples on `[0, t_max]`.
pub fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}
