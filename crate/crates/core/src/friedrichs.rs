//! Discretized Lee-Friedrichs model: one oscillator coupled bilinearly to a
//! bath of oscillators, evolved exactly through the spectral decomposition
//! of its one-excitation Hamiltonian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::state::DensityMatrix;

/// Oscillator frequency, bath grid and couplings of a discretized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedrichsConfig {
    pub omega: f64,
    pub bath_grid: Vec<f64>,
    pub couplings: Vec<f64>,
    pub hbar: f64,
    pub mass: f64,
    pub fock_cutoff: usize,
}

impl FriedrichsConfig {
    /// Bath sampled from `density` on a uniform midpoint grid with
    /// `λ_k = sqrt(J(ω_k) Δω)`.
    pub fn from_density(omega: f64, density: &SpectralDensity, modes: usize, hbar: f64) -> Self {
        let (bath_grid, couplings) = density.discretize(modes);
        Self { omega, bath_grid, couplings, hbar, mass: 1.0, fock_cutoff: 40 }
    }

    /// All invariant violations, each tagged with its field path.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |path: &str, msg: String| out.push((path.to_string(), msg));
        if !self.omega.is_finite() {
            push("omega", "must be finite".into());
        }
        if !(self.hbar > 0.0) {
            push("hbar", format!("must be > 0, got {}", self.hbar));
        }
        if !(self.mass > 0.0) {
            push("mass", format!("must be > 0, got {}", self.mass));
        }
        if self.fock_cutoff < 1 {
            push("fock_cutoff", "must be >= 1".into());
        }
        if self.bath_grid.len() != self.couplings.len() {
            push(
                "couplings",
                format!("length {} differs from bath_grid length {}", self.couplings.len(), self.bath_grid.len()),
            );
        }
        if self.bath_grid.windows(2).any(|w| !(w[1] > w[0])) {
            push("bath_grid", "must be strictly increasing".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((path, message)) => Err(Error::Config { path, message }),
        }
    }

    pub fn bath_spacing(&self) -> Option<f64> {
        let g = &self.bath_grid;
        (g.len() >= 2).then(|| (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64)
    }

    /// Poincaré recurrence time `2π/Δω` of the discretized bath.
    pub fn recurrence_time(&self) -> f64 {
        self.bath_spacing().map(|d| 2.0 * std::f64::consts::PI / d).unwrap_or(f64::INFINITY)
    }
}

/// Bath spectral density `J(ω) = n(ω)|λ_ω|²`, polynomial on its support and
/// zero outside. The polynomial is its own analytic continuation, which is
/// what the second-sheet self-energy needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients of powers of `(ω - center)`, constant term first.
    pub coeffs: Vec<f64>,
}

impl SpectralDensity {
    pub fn flat(level: f64, lo: f64, hi: f64) -> Self {
        Self { lo, hi, coeffs: vec![level] }
    }

    /// Flat band of width `width` centred on `omega` with `J = g²`.
    pub fn flat_band(g: f64, omega: f64, width: f64) -> Self {
        Self::flat(g * g, omega - width / 2.0, omega + width / 2.0)
    }

    pub fn zero(lo: f64, hi: f64) -> Self {
        Self::flat(0.0, lo, hi)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo) {
            return Err(Error::Config {
                path: "density".into(),
                message: format!("empty support [{}, {}]", self.lo, self.hi),
            });
        }
        let n = 256;
        for k in 0..=n {
            let w = self.lo + (self.hi - self.lo) * k as f64 / n as f64;
            if self.polynomial(w) < -1e-14 {
                return Err(Error::Config { path: "density.coeffs".into(), message: format!("J({w}) is negative") });
            }
        }
        Ok(())
    }

    fn polynomial(&self, w: f64) -> f64 {
        let x = w - self.center();
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w < self.lo || w > self.hi {
            0.0
        } else {
            self.polynomial(w)
        }
    }

    /// Analytic continuation of `J` to complex arguments.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let x = z - self.center();
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * x + a)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0.0)
    }

    /// The same density expressed in energy variables: `J_E(E) = ħ J(E/ħ)`
    /// on `[ħ lo, ħ hi]`. The pole engine works in whichever variable the
    /// density is written in.
    pub fn to_energy(&self, hbar: f64) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(k, &a)| a * hbar / hbar.powi(k as i32)).collect();
        Self { lo: self.lo * hbar, hi: self.hi * hbar, coeffs }
    }

    /// Uniform midpoint grid of `modes` frequencies with couplings
    /// `sqrt(J(ω_k) Δω)`.
    pub fn discretize(&self, modes: usize) -> (Vec<f64>, Vec<f64>) {
        let dw = (self.hi - self.lo) / modes as f64;
        let grid: Vec<f64> = (0..modes).map(|k| self.lo + (k as f64 + 0.5) * dw).collect();
        let couplings = grid.iter().map(|&w| (self.eval(w).max(0.0) * dw).sqrt()).collect();
        (grid, couplings)
    }
}

/// One-excitation Hamiltonian: index 0 is the excited system oscillator,
/// index `k` the `k`-th excited bath mode.
pub fn build_one_excitation_hamiltonian(cfg: &FriedrichsConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = 1 + cfg.bath_grid.len();
    let hb = cfg.hbar;
    let mut h = DMatrix::zeros(n, n);
    h[(0, 0)] = hb * cfg.omega;
    for (k, (&w, &lam)) in cfg.bath_grid.iter().zip(&cfg.couplings).enumerate() {
        h[(k + 1, k + 1)] = hb * w;
        h[(0, k + 1)] = hb * lam;
        h[(k + 1, 0)] = hb * lam;
    }
    Ok(h)
}

/// Exact propagator `exp(-iHt/ħ)` of a time-independent real symmetric
/// Hamiltonian.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
    hbar: f64,
}

impl Propagator {
    pub fn new(h: &DMatrix<f64>, hbar: f64) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension("Hamiltonian must be square".into()));
        }
        let scale = h.amax().max(1.0);
        let asym = (h - h.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::Contract(format!("Hamiltonian not Hermitian (defect {asym:e})")));
        }
        if !(hbar > 0.0) {
            return Err(Error::Contract("hbar must be positive".into()));
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self { energies: eig.eigenvalues, vectors: eig.eigenvectors, hbar })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    /// `⟨i| exp(-iHt/ħ) |j⟩`.
    pub fn element(&self, i: usize, j: usize, t: f64) -> Complex64 {
        (0..self.dim())
            .map(|n| {
                let phase = Complex64::from_polar(1.0, -self.energies[n] * t / self.hbar);
                phase * (self.vectors[(i, n)] * self.vectors[(j, n)])
            })
            .sum()
    }

    /// Evolves `psi` to time `t`.
    pub fn evolve(&self, psi: &CVector, t: f64) -> CVector {
        let n = self.dim();
        let mut coeffs = CVector::zeros(n);
        for m in 0..n {
            let overlap: Complex64 = (0..n).map(|i| psi[i] * self.vectors[(i, m)]).sum();
            coeffs[m] = overlap * Complex64::from_polar(1.0, -self.energies[m] * t / self.hbar);
        }
        CVector::from_fn(n, |i, _| (0..n).map(|m| coeffs[m] * self.vectors[(i, m)]).sum())
    }

    /// Amplitudes of the evolved excited-system state on every basis site.
    pub fn column(&self, t: f64) -> CVector {
        let n = self.dim();
        let weights: Vec<Complex64> = (0..n)
            .map(|m| Complex64::from_polar(1.0, -self.energies[m] * t / self.hbar) * self.vectors[(0, m)])
            .collect();
        CVector::from_fn(n, |i, _| (0..n).map(|m| weights[m] * self.vectors[(i, m)]).sum())
    }

    pub fn survival_amplitude(&self, t: f64) -> Complex64 {
        self.element(0, 0, t)
    }
}

/// `A(t) = ⟨1,vac| exp(-iHt/ħ) |1,vac⟩`.
pub fn survival_amplitude(h: &DMatrix<f64>, hbar: f64, t: f64) -> Result<Complex64> {
    if t < 0.0 {
        return Err(Error::Contract(format!("negative time {t}")));
    }
    Ok(Propagator::new(h, hbar)?.survival_amplitude(t))
}

/// Partial trace over the environment of a pure state on `S ⊗ E`
/// (system index major).
pub fn reduced_density(full_state: &CVector, system_dim: usize, env_dim: usize) -> Result<DensityMatrix> {
    if full_state.len() != system_dim * env_dim {
        return Err(Error::Dimension(format!(
            "state has {} components, expected {}x{}",
            full_state.len(),
            system_dim,
            env_dim
        )));
    }
    let norm = full_state.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Contract(format!("full state norm {norm}")));
    }
    let rho = CMatrix::from_fn(system_dim, system_dim, |i, j| {
        (0..env_dim).map(|k| full_state[i * env_dim + k] * full_state[j * env_dim + k].conj()).sum()
    });
    DensityMatrix::from_nearly_valid(rho)
}

/// Partial trace of an operator on `S ⊗ E` over `E`.
pub fn partial_trace_env(op: &CMatrix, system_dim: usize, env_dim: usize) -> Result<CMatrix> {
    if op.nrows() != system_dim * env_dim || op.ncols() != op.nrows() {
        return Err(Error::Dimension("operator does not match S ⊗ E".into()));
    }
    Ok(CMatrix::from_fn(system_dim, system_dim, |i, j| {
        (0..env_dim).map(|k| op[(i * env_dim + k, j * env_dim + k)]).sum()
    }))
}

/// Map from initial position to coherent amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AlphaConvention {
    /// `α = m ω x / sqrt(2 m ħ² ω)`.
    #[default]
    Stated,
    /// `α = sqrt(m ω / 2ħ) x`.
    Standard,
}

impl AlphaConvention {
    pub fn alpha(self, x: f64, mass: f64, omega: f64, hbar: f64) -> f64 {
        match self {
            Self::Stated => mass * omega * x / (2.0 * mass * hbar * hbar * omega).sqrt(),
            Self::Standard => (mass * omega / (2.0 * hbar)).sqrt() * x,
        }
    }
}

/// Two coherent states `a|α₁⟩ + b|α₂⟩` prepared at rest at `x1`, `x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentPairInit {
    pub x1: f64,
    pub x2: f64,
    pub a: Complex64,
    pub b: Complex64,
}

impl CoherentPairInit {
    pub fn separation(&self) -> f64 {
        (self.x2 - self.x1).abs()
    }
}

/// Coherent state truncated to `cutoff` Fock levels plus its norm deficit.
pub fn coherent_state(alpha: Complex64, cutoff: usize) -> (CVector, f64) {
    let mut v = CVector::zeros(cutoff);
    let mut term = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..cutoff {
        if n > 0 {
            term *= alpha / (n as f64).sqrt();
        }
        v[n] = term;
    }
    let deficit = 1.0 - v.norm_squared();
    (v, deficit.max(0.0))
}

fn truncated_coherent(alpha: Complex64, cutoff: usize) -> Result<CVector> {
    let (v, deficit) = coherent_state(alpha, cutoff);
    if deficit > 1e-8 {
        return Err(Error::Truncation { deficit });
    }
    Ok(v)
}

/// Normalized `a|α₁⟩ + b|α₂⟩` in the truncated Fock space of the system.
pub fn coherent_pair_state(
    init: &CoherentPairInit,
    cfg: &FriedrichsConfig,
    omega_eff: f64,
    convention: AlphaConvention,
) -> Result<CVector> {
    let a1 = convention.alpha(init.x1, cfg.mass, omega_eff, cfg.hbar);
    let a2 = convention.alpha(init.x2, cfg.mass, omega_eff, cfg.hbar);
    let v1 = truncated_coherent(c(a1), cfg.fock_cutoff)?;
    let v2 = truncated_coherent(c(a2), cfg.fock_cutoff)?;
    let psi = v1 * init.a + v2 * init.b;
    let norm = psi.norm();
    if norm < 1e-12 {
        return Err(Error::Contract("coherent pair cancels to zero".into()));
    }
    Ok(psi / c(norm))
}

/// Exact reduced dynamics of a coherent-state superposition under the
/// bilinear coupling. A product of coherent states stays one:
/// `|α⟩|0⟩ → |α u(t)⟩ ⊗ |α v_k(t)⟩`, with `u` the survival amplitude and
/// `Σ|v_k|² = 1 - |u|²`, so the bath enters only through `|u|`.
#[derive(Debug, Clone)]
pub struct CoherentPairDynamics {
    pub alphas: [Complex64; 2],
    pub weights: [Complex64; 2],
    pub cutoff: usize,
}

impl CoherentPairDynamics {
    pub fn new(
        init: &CoherentPairInit,
        cfg: &FriedrichsConfig,
        omega_eff: f64,
        convention: AlphaConvention,
    ) -> Result<Self> {
        let a1 = c(convention.alpha(init.x1, cfg.mass, omega_eff, cfg.hbar));
        let a2 = c(convention.alpha(init.x2, cfg.mass, omega_eff, cfg.hbar));
        truncated_coherent(a1, cfg.fock_cutoff)?;
        truncated_coherent(a2, cfg.fock_cutoff)?;
        Ok(Self { alphas: [a1, a2], weights: [init.a, init.b], cutoff: cfg.fock_cutoff })
    }

    /// Coherent basis pair `|α₁u⟩, |α₂u⟩` at survival amplitude `u`.
    pub fn basis_pair(&self, u: Complex64) -> (CVector, CVector) {
        (coherent_state(self.alphas[0] * u, self.cutoff).0, coherent_state(self.alphas[1] * u, self.cutoff).0)
    }

    /// Environment overlap `⟨α_j v|α_i v⟩` for bath weight `s = Σ|v_k|²`.
    pub fn bath_overlap(&self, i: usize, j: usize, s: f64) -> Complex64 {
        let (ai, aj) = (self.alphas[i], self.alphas[j]);
        ((-(ai.norm_sqr() + aj.norm_sqr()) * s / 2.0) + aj.conj() * ai * s).exp()
    }

    pub fn reduced_state(&self, u: Complex64) -> Result<DensityMatrix> {
        let s = (1.0 - u.norm_sqr()).max(0.0);
        let (x, y) = self.basis_pair(u);
        let vecs = [x, y];
        let mut rho = CMatrix::zeros(self.cutoff, self.cutoff);
        for i in 0..2 {
            for j in 0..2 {
                let coeff = self.weights[i] * self.weights[j].conj() * self.bath_overlap(i, j, s);
                rho += linalg::outer(&vecs[i], &vecs[j]) * coeff;
            }
        }
        DensityMatrix::from_nearly_valid(rho)
    }
}

/// Magnitude of the cross terms of each state in the (non-orthogonal)
/// basis pair given per sample, scaled by the t = 0 pair geometry
/// `‖|x₀⟩⟨y₀| + |y₀⟩⟨x₀|‖_F`.
pub fn offdiagonal_envelope(series: &[DensityMatrix], pairs: &[(CVector, CVector)]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("density-matrix series".into()));
    }
    if pairs.len() != series.len() {
        return Err(Error::Dimension(format!("{} basis pairs for {} states", pairs.len(), series.len())));
    }
    let (x0, y0) = &pairs[0];
    let geometry = linalg::frobenius(&(linalg::outer(x0, y0) + linalg::outer(y0, x0)));
    series
        .iter()
        .zip(pairs)
        .map(|(rho, (x, y))| {
            let basis = [x, y];
            let gram = nalgebra::Matrix2::from_fn(|i, j| basis[i].dotc(basis[j]));
            let inv = gram.try_inverse().ok_or_else(|| Error::Contract("basis pair is linearly dependent".into()))?;
            let m = nalgebra::Matrix2::from_fn(|i, j| basis[i].dotc(&(rho.matrix() * basis[j])));
            let coeffs = inv * m * inv;
            Ok(coeffs[(0, 1)].norm() * geometry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(lambda: f64) -> FriedrichsConfig {
        FriedrichsConfig {
            omega: 1.0,
            bath_grid: vec![1.0],
            couplings: vec![lambda],
            hbar: 1.0,
            mass: 1.0,
            fock_cutoff: 10,
        }
    }

    #[test]
    fn decoupled_hamiltonian_is_diagonal() {
        let cfg = FriedrichsConfig {
            omega: 1.0,
            bath_grid: vec![0.5, 0.8, 1.3],
            couplings: vec![0.0; 3],
            hbar: 2.0,
            mass: 1.0,
            fock_cutoff: 4,
        };
        let h = build_one_excitation_hamiltonian(&cfg).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.6, 2.6]));
        assert_eq!(h, want);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let h = build_one_excitation_hamiltonian(&two_level(0.1)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]));
        let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 0.9).abs() < 1e-14 && (e[1] - 1.1).abs() < 1e-14);
    }

    #[test]
    fn mismatched_couplings_rejected() {
        let mut cfg = two_level(0.1);
        cfg.couplings.push(0.2);
        assert!(matches!(
            build_one_excitation_hamiltonian(&cfg),
            Err(Error::Config { ref path, .. }) if path == "couplings"
        ));
    }

    #[test]
    fn survival_at_zero_and_decoupled() {
        let h = build_one_excitation_hamiltonian(&two_level(0.0)).unwrap();
        assert!((survival_amplitude(&h, 1.0, 0.0).unwrap() - c(1.0)).norm() < 1e-14);
        for &t in &[0.3, 2.0, 17.5] {
            let a = survival_amplitude(&h, 1.0, t).unwrap();
            assert!((a - Complex64::from_polar(1.0, -t)).norm() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(survival_amplitude(&h, 1.0, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn product_state_reduces_to_pure() {
        let psi_s = CVector::from_vec(vec![c(0.6), Complex64::new(0.0, 0.8)]);
        let phi_e = CVector::from_vec(vec![c(1.0 / 3f64.sqrt()); 3]);
        let full = CVector::from_fn(6, |i, _| psi_s[i / 3] * phi_e[i % 3]);
        let rho = reduced_density(&full, 2, 3).unwrap();
        let want = linalg::outer(&psi_s, &psi_s);
        assert!((rho.matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn entangled_pair_is_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // |1⟩_S|0⟩_E + |0⟩_S|1⟩_E
        let full = CVector::from_vec(vec![c(0.0), c(s), c(s), c(0.0)]);
        let rho = reduced_density(&full, 2, 2).unwrap();
        assert!((rho.matrix() - CMatrix::identity(2, 2) * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn reduced_density_dimension_error() {
        let full = CVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(reduced_density(&full, 2, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn coherent_pair_single_when_b_zero() {
        let cfg = two_level(0.0);
        let init = CoherentPairInit { x1: 1.0, x2: -1.0, a: c(1.0), b: c(0.0) };
        let psi = coherent_pair_state(&init, &cfg, 1.0, AlphaConvention::Stated).unwrap();
        let (v, _) = coherent_state(c(std::f64::consts::FRAC_1_SQRT_2), 10);
        assert!((psi - v.normalize()).norm() < 1e-12);
    }

    #[test]
    fn coherent_pair_degenerate_equals_single() {
        let cfg = two_level(0.0);
        let init = CoherentPairInit { x1: 0.7, x2: 0.7, a: c(0.3), b: c(0.9) };
        let psi = coherent_pair_state(&init, &cfg, 1.0, AlphaConvention::Stated).unwrap();
        let (v, _) = coherent_state(c(0.7 / 2f64.sqrt()), 10);
        assert!((psi - v.normalize()).norm() < 1e-12);
    }

    #[test]
    fn cat_state_matches_series() {
        // Oracle: term-by-term e^{-|α|²/2} αⁿ/√n! with factorials computed directly.
        let mut cfg = two_level(0.0);
        cfg.fock_cutoff = 30;
        let init = CoherentPairInit { x1: 1.0, x2: -1.0, a: c(1.0), b: c(1.0) };
        let psi = coherent_pair_state(&init, &cfg, 1.0, AlphaConvention::Stated).unwrap();
        let alpha = std::f64::consts::FRAC_1_SQRT_2;
        let series = |al: f64, n: usize| {
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            (-al * al / 2.0).exp() * al.powi(n as i32) / fact.sqrt()
        };
        let raw: Vec<f64> = (0..30).map(|n| series(alpha, n) + series(-alpha, n)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for n in 0..30 {
            assert!((psi[n].re - raw[n] / norm).abs() < 1e-13, "n = {n}");
            if n % 2 == 1 {
                assert!(psi[n].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn truncation_error_reports_deficit() {
        let mut cfg = two_level(0.0);
        cfg.fock_cutoff = 3;
        let init = CoherentPairInit { x1: 3.0, x2: -3.0, a: c(1.0), b: c(1.0) };
        match coherent_pair_state(&init, &cfg, 1.0, AlphaConvention::Stated) {
            Err(Error::Truncation { deficit }) => assert!(deficit > 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_conventions_agree_at_unit_hbar() {
        let s = AlphaConvention::Stated.alpha(1.3, 2.0, 0.7, 1.0);
        let t = AlphaConvention::Standard.alpha(1.3, 2.0, 0.7, 1.0);
        assert!((s - t).abs() < 1e-14);
        let s = AlphaConvention::Stated.alpha(1.3, 2.0, 0.7, 0.25);
        let t = AlphaConvention::Standard.alpha(1.3, 2.0, 0.7, 0.25);
        assert!((s / t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_constant_for_identical_states() {
        let cfg = two_level(0.0);
        let init = CoherentPairInit { x1: 0.5, x2: 0.5, a: c(0.6), b: c(0.8) };
        let dynamics = CoherentPairDynamics::new(&init, &cfg, 1.0, AlphaConvention::Stated).unwrap();
        // L = 0: bath overlap is exactly 1 at every bath weight.
        for s in [0.0, 0.3, 0.9] {
            assert!((dynamics.bath_overlap(0, 1, s) - c(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn envelope_errors() {
        assert!(matches!(offdiagonal_envelope(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn envelope_at_zero_matches_geometry() {
        let cfg = FriedrichsConfig { fock_cutoff: 30, ..two_level(0.0) };
        let init = CoherentPairInit { x1: -1.0, x2: 1.0, a: c(0.6), b: c(0.8) };
        let dynamics = CoherentPairDynamics::new(&init, &cfg, 1.0, AlphaConvention::Stated).unwrap();
        let rho = dynamics.reduced_state(c(1.0)).unwrap();
        let pair = dynamics.basis_pair(c(1.0));
        let env = offdiagonal_envelope(&[rho], std::slice::from_ref(&pair)).unwrap();
        // normalized weights: the state is (a|α₁⟩ + b|α₂⟩)/N with N² = 1 + 2ab⟨α₁|α₂⟩
        let overlap = pair.0.dotc(&pair.1).re;
        let n2 = 0.36 + 0.64 + 2.0 * 0.48 * overlap;
        let geometry = linalg::frobenius(&(linalg::outer(&pair.0, &pair.1) + linalg::outer(&pair.1, &pair.0)));
        assert!((env[0] - 0.48 / n2 * geometry).abs() < 1e-10);
    }
}
