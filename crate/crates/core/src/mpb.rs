//! Moving preferred basis, its generator, and linear-entropy diagnostics.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::state::DensityMatrix;

/// Eigenvalue gap below which eigenvector matching is ambiguous.
pub const DEGENERACY_GAP: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MovingPreferredBasis {
    pub times: Vec<f64>,
    /// Columns are the basis vectors at each time.
    pub frames: Vec<CMatrix>,
    pub weights: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
}

impl MovingPreferredBasis {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn projector(&self, k: usize, i: usize) -> CMatrix {
        let v = self.frames[k].column(i).into_owned();
        linalg::outer(&v, &v)
    }

    pub fn has_degeneracy(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Diagonalizes each state. Vectors at step `k+1` are matched to step `k` by
/// largest overlap and rephased so that overlap is real and positive; the
/// first frame is ordered by decreasing weight with its largest component
/// real and positive.
pub fn moving_preferred_basis(times: &[f64], states: &[DensityMatrix]) -> Result<MovingPreferredBasis> {
    if times.len() != states.len() {
        return Err(Error::Dimension(format!("{} times vs {} states", times.len(), states.len())));
    }
    let d = states.first().ok_or_else(|| Error::Empty("state series".into()))?.dim();
    let mut frames: Vec<CMatrix> = Vec::with_capacity(states.len());
    let mut weights = Vec::with_capacity(states.len());
    let mut degenerate = Vec::with_capacity(states.len());
    for rho in states {
        if rho.dim() != d {
            return Err(Error::Dimension("state dimensions change along the series".into()));
        }
        let (vals, vecs) = linalg::eigh(rho.matrix());
        degenerate.push(vals.windows(2).any(|w| w[1] - w[0] < DEGENERACY_GAP));
        let order: Vec<usize> = match frames.last() {
            None => (0..d).rev().collect(),
            Some(prev) => match_columns(prev, &vecs),
        };
        let mut frame = CMatrix::zeros(d, d);
        let mut w = Vec::with_capacity(d);
        for (slot, &src) in order.iter().enumerate() {
            let v = vecs.column(src).into_owned();
            let reference = match frames.last() {
                Some(prev) => prev.column(slot).dotc(&v),
                None => {
                    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                    big.conj()
                }
            };
            let phase =
                if reference.norm() > 0.0 { reference.conj() / reference.norm() } else { Complex64::new(1.0, 0.0) };
            frame.set_column(slot, &(v * phase));
            w.push(vals[src].clamp(0.0, 1.0));
        }
        frames.push(frame);
        weights.push(w);
    }
    Ok(MovingPreferredBasis { times: times.to_vec(), frames, weights, degenerate })
}

/// Greedy assignment of new columns to previous slots by `|⟨prev|new⟩|`.
fn match_columns(prev: &CMatrix, new: &CMatrix) -> Vec<usize> {
    let d = prev.ncols();
    let overlap = prev.adjoint() * new;
    let mut pairs: Vec<(usize, usize, f64)> =
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| (i, j, overlap[(i, j)].norm())).collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut order = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for (i, j, _) in pairs {
        if order[i] == usize::MAX && !used[j] {
            order[i] = j;
            used[j] = true;
        }
    }
    order
}

/// `ℵ(t) = iħ U̇ U†` with `U(t) = F(t) F(0)†`; entries are `None` where the
/// basis is degenerate.
#[derive(Debug, Clone)]
pub struct GeneratorSeries {
    pub times: Vec<f64>,
    pub generators: Vec<Option<CMatrix>>,
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::Underdetermined { samples: times.len(), unknowns: 3 });
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Contract("times must increase".into()));
    }
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(times[0].abs())) {
        return Err(Error::Contract("times must be uniformly spaced".into()));
    }
    Ok(dt)
}

/// Second-order derivative of a uniformly sampled series at index `k`.
pub(crate) fn derivative(samples: &[CMatrix], k: usize, dt: f64) -> CMatrix {
    let n = samples.len();
    let d = if k == 0 {
        &samples[1] * linalg::c(4.0) - &samples[0] * linalg::c(3.0) - &samples[2]
    } else if k == n - 1 {
        &samples[n - 1] * linalg::c(3.0) - &samples[n - 2] * linalg::c(4.0) + &samples[n - 3]
    } else {
        &samples[k + 1] - &samples[k - 1]
    };
    d * linalg::c(0.5 / dt)
}

pub fn effective_generator(mpb: &MovingPreferredBasis, hbar: f64) -> Result<GeneratorSeries> {
    let dt = uniform_step(&mpb.times)?;
    let f0 = mpb.frames[0].adjoint();
    let us: Vec<CMatrix> = mpb.frames.iter().map(|f| f * &f0).collect();
    let n = us.len();
    let ih = Complex64::new(0.0, hbar);
    let generators = (0..n)
        .map(|k| {
            let stencil = match k {
                0 => 0..3,
                k if k == n - 1 => n - 3..n,
                k => k - 1..k + 2,
            };
            if stencil.into_iter().any(|j| mpb.degenerate[j]) {
                return None;
            }
            let du = derivative(&us, k, dt);
            Some(linalg::hermitian_part(&(du * us[k].adjoint() * ih)))
        })
        .collect();
    Ok(GeneratorSeries { times: mpb.times.clone(), generators })
}

/// `‖dΠ_i/dt + (i/ħ)[ℵ, Π_i]‖_F`, maximized over basis vectors.
pub fn projector_evolution_residual(
    mpb: &MovingPreferredBasis,
    generators: &GeneratorSeries,
    hbar: f64,
) -> Result<Vec<Option<f64>>> {
    let dt = uniform_step(&mpb.times)?;
    let d = mpb.frames[0].ncols();
    let projectors: Vec<Vec<CMatrix>> = (0..d).map(|i| (0..mpb.len()).map(|k| mpb.projector(k, i)).collect()).collect();
    let factor = Complex64::new(0.0, 1.0 / hbar);
    Ok(generators
        .generators
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let g = g.as_ref()?;
            Some(
                projectors
                    .iter()
                    .map(|series| {
                        let dp = derivative(series, k, dt);
                        linalg::frobenius(&(dp + linalg::commutator(g, &series[k]) * factor))
                    })
                    .fold(0.0, f64::max),
            )
        })
        .collect())
}

/// `S_lin = tr(ρ - ρ²)`.
pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    1.0 - rho.purity()
}

/// `dS_lin/dt = -2 tr(ρ ρ̇)` with second-order finite differences.
pub fn entropy_production(times: &[f64], states: &[DensityMatrix]) -> Result<Vec<f64>> {
    if times.len() != states.len() {
        return Err(Error::Dimension(format!("{} times vs {} states", times.len(), states.len())));
    }
    let dt = uniform_step(times)?;
    let mats: Vec<CMatrix> = states.iter().map(|s| s.matrix().clone()).collect();
    Ok((0..mats.len()).map(|k| -2.0 * linalg::trace(&(&mats[k] * derivative(&mats, k, dt))).re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn rotated_pure(theta: f64) -> DensityMatrix {
        let v = crate::linalg::CVector::from_vec(vec![c((theta / 2.0).cos()), c((theta / 2.0).sin())]);
        DensityMatrix::pure(&v).unwrap()
    }

    fn mixed_rotated(theta: f64, p: f64) -> DensityMatrix {
        let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let r = CMatrix::from_row_slice(2, 2, &[c(cs), c(-sn), c(sn), c(cs)]);
        let d = CMatrix::from_row_slice(2, 2, &[c(p), c(0.0), c(0.0), c(1.0 - p)]);
        DensityMatrix::new(&r * d * r.adjoint()).unwrap()
    }

    #[test]
    fn diagonal_constant_series() {
        let d = CMatrix::from_row_slice(2, 2, &[c(0.7), c(0.0), c(0.0), c(0.3)]);
        let rho = DensityMatrix::new(d).unwrap();
        let t = [0.0, 0.1, 0.2, 0.3];
        let mpb = moving_preferred_basis(&t, &vec![rho; 4]).unwrap();
        for (f, w) in mpb.frames.iter().zip(&mpb.weights) {
            assert!((f - CMatrix::identity(2, 2)).norm() < 1e-12);
            assert!((w[0] - 0.7).abs() < 1e-12 && (w[1] - 0.3).abs() < 1e-12);
        }
        assert!(!mpb.has_degeneracy());
        let g = effective_generator(&mpb, 1.0).unwrap();
        assert!(g.generators.iter().all(|g| g.as_ref().unwrap().norm() < 1e-12));
    }

    #[test]
    fn frames_track_rotation() {
        let step = 0.01;
        let t: Vec<f64> = (0..50).map(|k| k as f64 * step).collect();
        let states: Vec<_> = t.iter().map(|&t| mixed_rotated(0.8 * t, 0.9)).collect();
        let mpb = moving_preferred_basis(&t, &states).unwrap();
        for k in 1..mpb.len() {
            let o = mpb.frames[k - 1].adjoint() * &mpb.frames[k];
            // deviation from identity: 2 sin(δθ/4) per column
            assert!((&o - CMatrix::identity(2, 2)).norm() < 0.8 * step);
            assert!(o[(0, 0)].im.abs() < 1e-12 && o[(0, 0)].re > 0.0);
        }
        for (k, f) in mpb.frames.iter().enumerate() {
            assert!((f.adjoint() * f - CMatrix::identity(2, 2)).norm() < 1e-10);
            let w = &mpb.weights[k];
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn maximally_mixed_flags_degeneracy() {
        let rho = DensityMatrix::maximally_mixed(2);
        let mpb = moving_preferred_basis(&[0.0, 1.0, 2.0], &vec![rho; 3]).unwrap();
        assert!(mpb.degenerate.iter().all(|&d| d));
        let g = effective_generator(&mpb, 1.0).unwrap();
        assert!(g.generators.iter().all(Option::is_none));
    }

    #[test]
    fn generator_of_uniform_rotation() {
        let omega = 0.7;
        let hbar = 1.3;
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.05).collect();
        let states: Vec<_> = t.iter().map(|&t| mixed_rotated(omega * t, 0.8)).collect();
        let mpb = moving_preferred_basis(&t, &states).unwrap();
        let gens = effective_generator(&mpb, hbar).unwrap();
        // U = exp(-iΩtσ_y/2) so iħU̇U† = ħΩσ_y/2
        let want =
            CMatrix::from_row_slice(2, 2, &[c(0.0), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5), c(0.0)])
                * c(hbar * omega);
        for g in &gens.generators {
            let g = g.as_ref().unwrap();
            assert!(linalg::hermiticity_defect(g) < 1e-8);
            // second-order differences: error ~ ħΩ (Ω dt)²
            assert!((g - &want).norm() < hbar * omega * (omega * 0.05f64).powi(2));
        }
    }

    #[test]
    fn projector_identity_converges_quadratically() {
        let run = |dt: f64| {
            let t: Vec<f64> = (0..=20).map(|k| 1.0 + k as f64 * dt).collect();
            let states: Vec<_> = t.iter().map(|&t| mixed_rotated(t * t, 0.75)).collect();
            let mpb = moving_preferred_basis(&t, &states).unwrap();
            let g = effective_generator(&mpb, 1.0).unwrap();
            projector_evolution_residual(&mpb, &g, 1.0).unwrap()[10].unwrap()
        };
        let (coarse, fine) = (run(0.02), run(0.01));
        let slope = (coarse / fine).log2();
        assert!((slope - 2.0).abs() < 0.3, "{slope}");
    }

    #[test]
    fn linear_entropy_values() {
        assert!(linear_entropy(&rotated_pure(0.4)).abs() < 1e-12);
        assert!((linear_entropy(&DensityMatrix::maximally_mixed(3)) - 2.0 / 3.0).abs() < 1e-12);
        let half = DensityMatrix::maximally_mixed(2);
        assert!((linear_entropy(&half) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_production_cases() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.05).collect();
        let constant = vec![mixed_rotated(0.3, 0.6); t.len()];
        assert!(entropy_production(&t, &constant).unwrap().iter().all(|v| v.abs() < 1e-14));
        let unitary: Vec<_> = t.iter().map(|&t| mixed_rotated(2.0 * t, 0.6)).collect();
        let rates = entropy_production(&t, &unitary).unwrap();
        assert!(rates.iter().all(|v| v.abs() < 1e-2), "{rates:?}");
        // depolarizing: p(t) = 1/2 + e^{-t}/2, S = (1 - e^{-2t})/2
        let mix: Vec<_> = t.iter().map(|&t| mixed_rotated(0.0, 0.5 + 0.5 * (-t).exp())).collect();
        let rates = entropy_production(&t, &mix).unwrap();
        for (k, &r) in rates.iter().enumerate().skip(1).take(t.len() - 2) {
            assert!((r - (-2.0 * t[k]).exp()).abs() < 5e-3);
        }
        assert!(entropy_production(&t[..2], &mix[..2]).is_err());
    }
}
