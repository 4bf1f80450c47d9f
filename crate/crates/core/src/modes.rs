//! Decay-mode decomposition of expectation values and the privileged state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::poles::PoleCatalogue;
use crate::state::DensityMatrix;

/// One decaying term `A cos(ν t + φ) e^{-γ t/ħ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub amplitude: f64,
    pub phase: f64,
    pub freq: f64,
    pub gamma: f64,
}

impl Mode {
    /// The oscillating coefficient without the decay factor.
    pub fn coefficient(&self, t: f64) -> f64 {
        self.amplitude * (self.freq * t + self.phase).cos()
    }

    pub fn initial_weight(&self) -> f64 {
        self.coefficient(0.0)
    }

    pub fn value(&self, t: f64, hbar: f64) -> f64 {
        self.coefficient(t) * (-self.gamma * t / hbar).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDecomposition {
    pub equilibrium: f64,
    pub modes: Vec<Mode>,
    pub hbar: f64,
    pub residual_rms: f64,
    /// Set when the residual exceeds 1e-3 of the series range.
    pub poor_fit: bool,
}

impl ModeDecomposition {
    pub fn value(&self, t: f64) -> f64 {
        self.equilibrium + self.modes.iter().map(|m| m.value(t, self.hbar)).sum::<f64>()
    }

    /// Equilibrium plus the first `keep` modes only.
    pub fn truncated_value(&self, t: f64, keep: usize) -> f64 {
        self.equilibrium + self.modes.iter().take(keep).map(|m| m.value(t, self.hbar)).sum::<f64>()
    }
}

/// Fits `equilibrium + Σ_i (c_i cos ν_i t + s_i sin ν_i t) e^{-γ_i t/ħ}` by
/// linear least squares, with `ν_i = ω_i/ħ` and `γ_i` taken from the
/// catalogue. Non-oscillating channels contribute one column.
pub fn fit_modes(times: &[f64], values: &[f64], catalogue: &PoleCatalogue, hbar: f64) -> Result<ModeDecomposition> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!("{} times vs {} values", times.len(), values.len())));
    }
    if catalogue.is_empty() {
        return Err(Error::Empty("pole catalogue".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::Contract(format!("hbar must be positive, got {hbar}")));
    }
    let freqs: Vec<f64> = catalogue.poles().iter().map(|p| p.omega / hbar).collect();
    let unknowns = 1 + freqs.iter().map(|&f| if f == 0.0 { 1 } else { 2 }).sum::<usize>();
    if times.len() < unknowns {
        return Err(Error::Underdetermined { samples: times.len(), unknowns });
    }

    let design = DMatrix::from_fn(times.len(), unknowns, |r, col| {
        let t = times[r];
        if col == 0 {
            return 1.0;
        }
        let mut k = 1;
        for (p, &nu) in catalogue.poles().iter().zip(&freqs) {
            let decay = (-p.gamma * t / hbar).exp();
            if col == k {
                return decay * (nu * t).cos();
            }
            if nu != 0.0 {
                if col == k + 1 {
                    return decay * (nu * t).sin();
                }
                k += 2;
            } else {
                k += 1;
            }
        }
        unreachable!()
    });
    let rhs = DVector::from_column_slice(values);
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-14).map_err(|e| Error::Contract(format!("least squares failed: {e}")))?;

    let mut modes = Vec::with_capacity(freqs.len());
    let mut k = 1;
    for (p, &nu) in catalogue.poles().iter().zip(&freqs) {
        let c = coef[k];
        let (s, width) = if nu != 0.0 { (coef[k + 1], 2) } else { (0.0, 1) };
        k += width;
        let amplitude = c.hypot(s);
        let phase = if amplitude == 0.0 { 0.0 } else { (-s).atan2(c) };
        modes.push(Mode { amplitude, phase, freq: nu, gamma: p.gamma });
    }

    let fitted = &design * &coef;
    let residual_rms = ((&fitted - &rhs).norm_squared() / times.len() as f64).sqrt();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let tol = (1e-3 * (hi - lo)).max(1e-12);
    Ok(ModeDecomposition { equilibrium: coef[0], modes, hbar, residual_rms, poor_fit: residual_rms > tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMode {
    pub gamma_eff: f64,
    pub slow: Vec<usize>,
    pub fast: Vec<usize>,
}

impl EffectiveMode {
    pub fn slow_count(&self) -> usize {
        self.slow.len()
    }
}

/// `γ_eff = Σ a_i(0) γ_i / Σ a_i(0)`; slow modes are those with `γ_i ≤ γ_eff`.
pub fn effective_gamma(decomp: &ModeDecomposition) -> Result<EffectiveMode> {
    let weights: Vec<f64> = decomp.modes.iter().map(Mode::initial_weight).collect();
    let gammas: Vec<f64> = decomp.modes.iter().map(|m| m.gamma).collect();
    effective_gamma_from_weights(&weights, &gammas)
}

pub fn effective_gamma_from_weights(weights: &[f64], gammas: &[f64]) -> Result<EffectiveMode> {
    if weights.len() != gammas.len() {
        return Err(Error::Dimension(format!("{} weights vs {} widths", weights.len(), gammas.len())));
    }
    let total: f64 = weights.iter().sum();
    let scale: f64 = weights.iter().map(|w| w.abs()).sum();
    if scale == 0.0 || total.abs() <= 1e-14 * scale {
        return Err(Error::DegenerateWeights);
    }
    let gamma_eff = weights.iter().zip(gammas).map(|(w, g)| w * g).sum::<f64>() / total;
    let cut = gamma_eff + 1e-12 * gamma_eff.abs();
    let (slow, fast) = (0..gammas.len()).partition(|&i| gammas[i] <= cut);
    Ok(EffectiveMode { gamma_eff, slow, fast })
}

pub fn decoherence_time(eff: &EffectiveMode, hbar: f64) -> Result<f64> {
    if !(eff.gamma_eff > 0.0) {
        return Err(Error::Contract(format!("gamma_eff must be positive, got {}", eff.gamma_eff)));
    }
    Ok(hbar / eff.gamma_eff)
}

/// Decompositions of a complete set of Hermitian observables, all fitted
/// against the same catalogue, so mode `i` is the same channel everywhere.
#[derive(Debug, Clone)]
pub struct OperatorModes {
    observables: Vec<CMatrix>,
    decomps: Vec<ModeDecomposition>,
    gram_inv: DMatrix<f64>,
}

impl OperatorModes {
    pub fn new(observables: Vec<CMatrix>, decomps: Vec<ModeDecomposition>) -> Result<Self> {
        if observables.len() != decomps.len() {
            return Err(Error::Dimension(format!(
                "{} observables vs {} decompositions",
                observables.len(),
                decomps.len()
            )));
        }
        let first = observables.first().ok_or_else(|| Error::Empty("observable set".into()))?;
        let d = linalg::check_square(first, "observable")?;
        if observables.iter().any(|o| o.nrows() != d || o.ncols() != d) {
            return Err(Error::Dimension("observables differ in size".into()));
        }
        let n_modes = decomps[0].modes.len();
        if decomps.iter().any(|m| m.modes.len() != n_modes) {
            return Err(Error::Dimension("decompositions differ in mode count".into()));
        }
        let n = observables.len();
        let gram = DMatrix::from_fn(n, n, |a, b| linalg::trace(&(&observables[a] * &observables[b])).re);
        let rank = gram.clone().svd(false, false).rank(1e-10 * gram.norm().max(1.0));
        if rank < d * d {
            return Err(Error::NotExhaustive { rank, required: d * d });
        }
        let gram_inv = gram.pseudo_inverse(1e-12).map_err(|e| Error::Contract(format!("gram inverse: {e}")))?;
        Ok(Self { observables, decomps, gram_inv })
    }

    /// Fits every element of an orthonormal Hermitian basis along the series.
    pub fn fit(times: &[f64], states: &[DensityMatrix], catalogue: &PoleCatalogue, hbar: f64) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::Empty("state series".into()))?;
        let basis = linalg::hermitian_basis(first.dim());
        let decomps = basis
            .iter()
            .map(|b| {
                let series: Vec<f64> = states.iter().map(|s| s.expectation(b).re).collect();
                fit_modes(times, &series, catalogue, hbar)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(basis, decomps)
    }

    pub fn decompositions(&self) -> &[ModeDecomposition] {
        &self.decomps
    }

    pub fn observables(&self) -> &[CMatrix] {
        &self.observables
    }

    pub fn mode_count(&self) -> usize {
        self.decomps[0].modes.len()
    }

    pub fn worst_residual(&self) -> f64 {
        self.decomps.iter().map(|d| d.residual_rms).fold(0.0, f64::max)
    }

    fn assemble(&self, expectations: &[f64]) -> CMatrix {
        let x = &self.gram_inv * DVector::from_column_slice(expectations);
        let d = self.observables[0].nrows();
        self.observables.iter().zip(x.iter()).fold(CMatrix::zeros(d, d), |acc, (o, &w)| acc + o * linalg::c(w))
    }

    /// The operator equilibrium `ρ_{S*}`.
    pub fn equilibrium(&self) -> CMatrix {
        let e: Vec<f64> = self.decomps.iter().map(|d| d.equilibrium).collect();
        self.assemble(&e)
    }

    /// Operator amplitude of mode `i` at `t = 0`.
    pub fn mode_operator(&self, i: usize) -> CMatrix {
        let e: Vec<f64> = self.decomps.iter().map(|d| d.modes[i].initial_weight()).collect();
        self.assemble(&e)
    }

    /// Weights `a_i(0) = ‖Â_i(0)‖_F` so that the effective width is basis
    /// independent.
    pub fn effective_gamma(&self) -> Result<EffectiveMode> {
        let weights: Vec<f64> = (0..self.mode_count()).map(|i| linalg::frobenius(&self.mode_operator(i))).collect();
        let gammas: Vec<f64> = self.decomps[0].modes.iter().map(|m| m.gamma).collect();
        effective_gamma_from_weights(&weights, &gammas)
    }

    /// Unrepaired `ρ_{S*} + Σ_{i<keep} â_i(t) e^{-γ_i t/ħ}`.
    pub fn truncated_operator(&self, keep: usize, t: f64) -> CMatrix {
        let e: Vec<f64> = self.decomps.iter().map(|d| d.truncated_value(t, keep)).collect();
        self.assemble(&e)
    }
}

#[derive(Debug, Clone)]
pub struct PrivilegedState {
    pub state: DensityMatrix,
    /// Trace distance moved by the positivity repair.
    pub repair_distance: f64,
}

/// Keeps the `m` slowest modes and projects the result onto the state space
/// by clipping negative eigenvalues and renormalizing.
pub fn privileged_state(modes: &OperatorModes, m: usize, t: f64) -> Result<PrivilegedState> {
    if m > modes.mode_count() {
        return Err(Error::Contract(format!("asked for {m} slow modes, only {} exist", modes.mode_count())));
    }
    let raw = linalg::hermitian_part(&modes.truncated_operator(m, t));
    let (vals, vecs) = linalg::eigh(&raw);
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Contract("privileged state has no positive weight".into()));
    }
    let d = raw.nrows();
    let diag = CMatrix::from_fn(d, d, |i, j| if i == j { linalg::c(clipped[i] / total) } else { linalg::c(0.0) });
    let repaired = &vecs * diag * vecs.adjoint();
    let repair_distance = 0.5 * linalg::trace_norm(&(&repaired - &raw));
    Ok(PrivilegedState { state: DensityMatrix::from_nearly_valid(repaired)?, repair_distance })
}

/// Least-squares slope of `ln y` against `t`; all samples must be positive.
pub fn log_slope(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Underdetermined { samples: times.len().min(values.len()), unknowns: 2 });
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Contract("log slope needs positive samples".into()));
    }
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let ml = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in times.iter().zip(values) {
        sxy += (t - mt) * (v.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poles::ComplexPole;
    use num_complex::Complex64;

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    fn cat(poles: &[(f64, f64)]) -> PoleCatalogue {
        PoleCatalogue::new(poles.iter().map(|&(omega, gamma)| ComplexPole { omega, gamma }).collect()).unwrap()
    }

    #[test]
    fn constant_series() {
        let t = grid(50, 10.0);
        let v = vec![0.42; t.len()];
        let d = fit_modes(&t, &v, &cat(&[(1.0, 0.5)]), 1.0).unwrap();
        assert!((d.equilibrium - 0.42).abs() < 1e-12);
        assert!(d.modes[0].amplitude < 1e-12);
        assert!(!d.poor_fit);
    }

    #[test]
    fn single_mode_round_trip() {
        let t = grid(400, 10.0);
        let v: Vec<f64> = t.iter().map(|&t| 0.3 + 0.7 * (-t).exp() * (2.0 * t).cos()).collect();
        let d = fit_modes(&t, &v, &cat(&[(2.0, 1.0)]), 1.0).unwrap();
        let m = d.modes[0];
        assert!((d.equilibrium - 0.3).abs() < 1e-6);
        assert!((m.amplitude - 0.7).abs() < 1e-6);
        assert!(m.phase.abs() < 1e-6);
        assert!((m.freq - 2.0).abs() < 1e-12 && (m.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_mode_round_trip() {
        let t = grid(600, 25.0);
        let v: Vec<f64> = t
            .iter()
            .map(|&t| -0.1 + 0.4 * (-0.2 * t).exp() * (1.3 * t + 0.5).cos() + 0.25 * (-1.5 * t).exp())
            .collect();
        let d = fit_modes(&t, &v, &cat(&[(1.3, 0.2), (0.0, 1.5)]), 1.0).unwrap();
        assert!((d.modes[0].amplitude - 0.4).abs() < 1e-4);
        assert!((d.modes[0].phase - 0.5).abs() < 1e-4);
        assert!((d.modes[1].amplitude - 0.25).abs() < 1e-4);
    }

    #[test]
    fn hbar_rescales_time() {
        let hbar = 0.5;
        let t = grid(300, 10.0);
        let v: Vec<f64> = t.iter().map(|&t| (-0.4 * t / hbar).exp() * (0.6 * t / hbar).cos()).collect();
        let d = fit_modes(&t, &v, &cat(&[(0.6, 0.4)]), hbar).unwrap();
        assert!((d.modes[0].amplitude - 1.0).abs() < 1e-8);
        assert!((d.value(t[90]) - v[90]).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        let t = grid(2, 1.0);
        assert!(matches!(
            fit_modes(&t, &[1.0, 0.5], &cat(&[(1.0, 1.0)]), 1.0),
            Err(Error::Underdetermined { samples: 2, unknowns: 3 })
        ));
    }

    #[test]
    fn poor_fit_is_flagged() {
        let t = grid(200, 10.0);
        let v: Vec<f64> = t.iter().map(|&t| (5.0 * t).sin()).collect();
        let d = fit_modes(&t, &v, &cat(&[(0.0, 1.0)]), 1.0).unwrap();
        assert!(d.poor_fit);
    }

    #[test]
    fn effective_gamma_examples() {
        let e = effective_gamma_from_weights(&[0.3, 0.9, 2.0], &[0.7, 0.7, 0.7]).unwrap();
        assert!((e.gamma_eff - 0.7).abs() < 1e-15);
        assert_eq!(e.slow_count(), 3);
        let e = effective_gamma_from_weights(&[1.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!((e.gamma_eff, e.slow_count()), (2.0, 1));
        let e = effective_gamma_from_weights(&[3.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!((e.gamma_eff, e.slow.clone(), e.fast.clone()), (1.5, vec![0], vec![1]));
        assert_eq!(effective_gamma_from_weights(&[1.0, -1.0], &[1.0, 2.0]), Err(Error::DegenerateWeights));
    }

    #[test]
    fn decoherence_times() {
        let e = effective_gamma_from_weights(&[1.0], &[2.0]).unwrap();
        assert_eq!(decoherence_time(&e, 1.0).unwrap(), 0.5);
        let z = EffectiveMode { gamma_eff: 0.0, slow: vec![], fast: vec![] };
        assert!(decoherence_time(&z, 1.0).is_err());
    }

    fn qubit_series(t: &[f64], gamma: f64, nu: f64) -> Vec<DensityMatrix> {
        // amplitude-damped qubit with β² = 0.2
        let (a2, b2) = (0.8f64, 0.2f64);
        t.iter()
            .map(|&t| {
                let p = b2 * (-gamma * t).exp();
                let coh = (a2 * b2).sqrt() * (-0.5 * gamma * t).exp();
                let c = Complex64::from_polar(coh, nu * t);
                DensityMatrix::from_nearly_valid(CMatrix::from_row_slice(
                    2,
                    2,
                    &[linalg::c(1.0 - p), c, c.conj(), linalg::c(p)],
                ))
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn operator_modes_of_damped_qubit() {
        let t = grid(400, 40.0);
        let states = qubit_series(&t, 0.3, 1.1);
        let c = cat(&[(1.1, 0.15), (0.0, 0.3)]);
        let ops = OperatorModes::fit(&t, &states, &c, 1.0).unwrap();
        assert!(ops.worst_residual() < 1e-10);
        let eq = ops.equilibrium();
        assert!((eq[(0, 0)].re - 1.0).abs() < 1e-9 && eq[(1, 1)].norm() < 1e-9);
        let all = privileged_state(&ops, 2, 3.7).unwrap();
        let k = t.iter().position(|&x| (x - 3.7).abs() < 0.06).unwrap();
        let exact = &qubit_series(&[t[k]], 0.3, 1.1)[0];
        let full = privileged_state(&ops, 2, t[k]).unwrap();
        assert!(full.state.trace_distance(exact) < 1e-9);
        assert!(all.repair_distance < 1e-9);
        let none = privileged_state(&ops, 0, 2.0).unwrap();
        assert!((none.state.matrix() - &eq).norm() < 1e-9);

        let eff = ops.effective_gamma().unwrap();
        // weights √2·√(0.16) for the coherence and √2·0.2 for the populations
        let w = [(2.0f64 * 0.16).sqrt(), 2f64.sqrt() * 0.2];
        let want = (w[0] * 0.15 + w[1] * 0.3) / (w[0] + w[1]);
        assert!((eff.gamma_eff - want).abs() < 1e-8);
        assert_eq!(eff.slow, vec![0]);
    }

    #[test]
    fn non_exhaustive_observables() {
        let z = CMatrix::from_row_slice(2, 2, &[linalg::c(1.0), linalg::c(0.0), linalg::c(0.0), linalg::c(-1.0)]);
        let d = ModeDecomposition { equilibrium: 0.0, modes: vec![], hbar: 1.0, residual_rms: 0.0, poor_fit: false };
        assert!(matches!(OperatorModes::new(vec![z], vec![d]), Err(Error::NotExhaustive { rank: 1, required: 4 })));
    }

    #[test]
    fn log_slope_of_exponential() {
        let t = grid(20, 3.0);
        let v: Vec<f64> = t.iter().map(|&t| 2.0 * (-0.7 * t).exp()).collect();
        assert!((log_slope(&t, &v).unwrap() + 0.7).abs() < 1e-12);
    }
}
