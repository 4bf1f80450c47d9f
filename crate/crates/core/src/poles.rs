//! Resonance poles of the analytically continued resolvent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friedrichs::SpectralDensity;
use crate::quadrature::Quadrature;

/// Resonance `z = omega - (i/2) gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPole {
    pub omega: f64,
    pub gamma: f64,
}

impl ComplexPole {
    pub fn from_z(z: Complex64) -> Self {
        Self { omega: z.re, gamma: -2.0 * z.im }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.omega, -0.5 * self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleCatalogue {
    poles: Vec<ComplexPole>,
    ladder_base: Option<ComplexPole>,
}

impl PoleCatalogue {
    /// Sorts by width; widths must be non-negative.
    pub fn new(mut poles: Vec<ComplexPole>) -> Result<Self> {
        if let Some(p) = poles.iter().find(|p| !(p.gamma >= 0.0)) {
            return Err(Error::Contract(format!("negative width {}", p.gamma)));
        }
        poles.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.omega.total_cmp(&b.omega)));
        Ok(Self { poles, ladder_base: None })
    }

    pub fn poles(&self) -> &[ComplexPole] {
        &self.poles
    }

    pub fn ladder_base(&self) -> Option<ComplexPole> {
        self.ladder_base
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    /// Decay channels of a density matrix: the coherence between two levels
    /// with complex energies `z_i`, `z_j` evolves as `exp(-i(z_i - z_j*)t/ħ)`.
    /// The ground level `z = 0` is included, so a single pole `z₀` yields the
    /// coherence channel `(ω₀, γ₀/2)` and the population channel `(0, γ₀)`.
    pub fn density_channels(&self) -> PoleCatalogue {
        let mut levels = vec![ComplexPole { omega: 0.0, gamma: 0.0 }];
        levels.extend(self.poles.iter().copied());
        let mut channels: Vec<ComplexPole> = Vec::new();
        for (i, a) in levels.iter().enumerate() {
            for b in levels.iter().take(i + 1) {
                let ch = ComplexPole { omega: (a.omega - b.omega).abs(), gamma: 0.5 * (a.gamma + b.gamma) };
                if ch.gamma <= 0.0 {
                    continue;
                }
                let dup = channels.iter().any(|c| {
                    (c.omega - ch.omega).abs() <= 1e-12 * (1.0 + ch.omega.abs())
                        && (c.gamma - ch.gamma).abs() <= 1e-12 * (1.0 + ch.gamma)
                });
                if !dup {
                    channels.push(ch);
                }
            }
        }
        PoleCatalogue::new(channels).expect("channel widths are non-negative")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    First,
    Second,
}

/// Σ_I(z) = ∫ J(ω)/(z - ω) dω, written as `J(z) log((z-a)/(z-b))` plus the
/// integral of the smooth divided difference, so nothing singular is ever
/// handed to the quadrature.
pub fn self_energy(z: Complex64, density: &SpectralDensity, sheet: Sheet) -> Result<Complex64> {
    self_energy_with(z, density, sheet, Quadrature::default())
}

pub fn self_energy_with(z: Complex64, density: &SpectralDensity, sheet: Sheet, quad: Quadrature) -> Result<Complex64> {
    if density.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (a, b) = (density.lo, density.hi);
    let on_support = z.re > a && z.re < b;
    if z.im == 0.0 && on_support && sheet == Sheet::First {
        return Err(Error::BranchCut { re: z.re, im: z.im });
    }
    let jz = density.eval_complex(z);
    let log_term = if z.im == 0.0 && on_support {
        // boundary value from above
        Complex64::new(((z.re - a) / (b - z.re)).ln(), -std::f64::consts::PI)
    } else {
        (z - a).ln() - (z - b).ln()
    };
    let remainder: Complex64 = quad.integrate_split(a, b, &[z.re], |w| -divided_difference(density, w, z));
    let first = jz * log_term + remainder;
    let continued = sheet == Sheet::Second && z.im < 0.0;
    if continued {
        Ok(first - Complex64::new(0.0, 2.0 * std::f64::consts::PI) * jz)
    } else {
        Ok(first)
    }
}

/// `(J(w) - J(z)) / (w - z)` expanded term by term, exact at `w = z`.
fn divided_difference(density: &SpectralDensity, w: f64, z: Complex64) -> Complex64 {
    let x = Complex64::new(w - density.center(), 0.0);
    let zz = z - density.center();
    let mut total = Complex64::new(0.0, 0.0);
    // Σ_k c_k Σ_{j<k} x^j z^{k-1-j}
    let mut h = Complex64::new(0.0, 0.0);
    for (k, &ck) in density.coeffs.iter().enumerate() {
        if k == 0 {
            continue;
        }
        // h_k = Σ_{j<k} x^j z^{k-1-j} = x^{k-1} + z h_{k-1}
        h = x.powu(k as u32 - 1) + zz * h;
        total += h * ck;
    }
    total
}

/// Resonance of `z - ω - Σ_II(z) = 0` near `guess`, by Newton iteration with
/// a central-difference derivative and step halving on overshoot.
pub fn find_pole(density: &SpectralDensity, omega: f64, guess: Complex64) -> Result<ComplexPole> {
    find_pole_with(density, omega, guess, Quadrature::default())
}

pub fn find_pole_with(
    density: &SpectralDensity,
    omega: f64,
    guess: Complex64,
    quad: Quadrature,
) -> Result<ComplexPole> {
    const MAX_ITER: usize = 100;
    const TOL: f64 = 1e-10;
    let f = |z: Complex64| -> Result<Complex64> { Ok(z - omega - self_energy_with(z, density, Sheet::Second, quad)?) };
    let mut z = guess;
    let mut fz = f(z)?;
    for _ in 0..MAX_ITER {
        if fz.norm() < TOL {
            return Ok(ComplexPole::from_z(z));
        }
        let h = 1e-6 * z.norm().max(1e-3);
        let dfdz = (f(z + h)? - f(z - h)?) / (2.0 * h);
        let mut step = -fz / dfdz;
        let mut next = z + step;
        let mut fnext = f(next)?;
        let mut halvings = 0;
        while fnext.norm() > fz.norm() && halvings < 30 {
            step *= 0.5;
            next = z + step;
            fnext = f(next)?;
            halvings += 1;
        }
        z = next;
        fz = fnext;
    }
    if fz.norm() < TOL {
        return Ok(ComplexPole::from_z(z));
    }
    Err(Error::NoConvergence { iterations: MAX_ITER, residual: fz.norm() })
}

/// Perturbative seed `ω - iπJ(ω)`.
pub fn golden_rule_seed(density: &SpectralDensity, omega: f64) -> Complex64 {
    Complex64::new(omega, -std::f64::consts::PI * density.eval(omega))
}

/// `z_n = n z₀` for `n = 1..=n_max`.
pub fn pole_ladder(z0: ComplexPole, n_max: usize) -> Result<PoleCatalogue> {
    if n_max < 1 {
        return Err(Error::Contract("ladder needs n_max >= 1".into()));
    }
    let poles = (1..=n_max).map(|n| ComplexPole { omega: n as f64 * z0.omega, gamma: n as f64 * z0.gamma }).collect();
    let mut cat = PoleCatalogue::new(poles)?;
    cat.ladder_base = Some(z0);
    Ok(cat)
}

/// `t_R = ħ / min γ`.
pub fn relaxation_time(catalogue: &PoleCatalogue, hbar: f64) -> Result<f64> {
    let min = catalogue.poles().iter().map(|p| p.gamma).fold(f64::INFINITY, f64::min);
    if catalogue.is_empty() {
        return Err(Error::Empty("pole catalogue".into()));
    }
    if !(min > 0.0) {
        return Err(Error::NoRelaxation);
    }
    Ok(hbar / min)
}

/// Marks samples where the local log-derivative of the survival probability
/// departs from `-γ₀/ħ` by more than 30 %: the non-exponential (Khalfin)
/// regime, which is flagged but not modelled.
pub fn khalfin_flags(times: &[f64], survival: &[f64], gamma0: f64, hbar: f64) -> Vec<bool> {
    let n = times.len().min(survival.len());
    let rate = gamma0 / hbar;
    (0..n)
        .map(|k| {
            if n < 3 || survival[k] <= 0.0 {
                return true;
            }
            let (i, j) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            if survival[i] <= 0.0 || survival[j] <= 0.0 {
                return true;
            }
            let slope = (survival[j].ln() - survival[i].ln()) / (times[j] - times[i]);
            ((-slope) - rate).abs() > 0.3 * rate
        })
        .collect()
}
