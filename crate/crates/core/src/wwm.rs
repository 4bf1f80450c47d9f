//! Weyl-Wigner-Moyal engine for one degree of freedom.
//!
//! Operators live on a position grid of `n` points. Their symbols live on a
//! `2n × 2n` phase-space grid: the half-grid midpoints in `x`, and momenta
//! spaced `πħ/L` across the Nyquist range in `p`, which is fine enough that
//! every matrix element owns one Fourier coefficient. Symbols keep kernel
//! separations up to half the box, so the round trip is exact for operators
//! of that bandwidth.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::state::DensityMatrix;

/// Uniform periodic position grid `x_j = x_min + j dx`, `dx = (x_max - x_min)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub hbar: f64,
}

impl PositionGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize, hbar: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Contract(format!("position grid needs an even n >= 8, got {n}")));
        }
        if !(x_max > x_min) || !(hbar > 0.0) {
            return Err(Error::Contract("position grid needs x_max > x_min and hbar > 0".into()));
        }
        Ok(Self { x_min, x_max, n, hbar })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    /// Symbol momentum `p_q = (q - n) πħ/L`, `q < 2n`.
    pub fn p(&self, q: usize) -> f64 {
        (q as f64 - self.n as f64) * PI * self.hbar / (self.x_max - self.x_min)
    }

    /// Symbol grid: midpoints in `x`, full momentum range in `p`.
    pub fn phase_space(&self) -> PhaseSpaceGrid {
        let p_max = PI * self.hbar / self.dx();
        PhaseSpaceGrid {
            x_min: self.x_min,
            x_max: self.x_max,
            p_min: -p_max,
            p_max,
            n_x: 2 * self.n,
            n_p: 2 * self.n,
            hbar: self.hbar,
        }
    }

    pub fn position_operator(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| if i == j { linalg::c(self.x(i)) } else { linalg::c(0.0) })
    }

    /// Spectral momentum on the box padded to twice its length, restricted
    /// back to the grid. Padding removes the wrap-around coupling between
    /// the two edges, and the operator equals the Weyl quantization of `p`.
    pub fn momentum_operator(&self) -> CMatrix {
        self.momentum_function(|p| p)
    }

    /// `F(P̂)` in the same padded construction.
    pub fn momentum_function(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.n;
        let row: Vec<Complex64> = (0..2 * n)
            .map(|d| {
                (0..2 * n)
                    .map(|q| {
                        let k = q as f64 - n as f64;
                        Complex64::from_polar(f(self.p(q)) / (2 * n) as f64, PI * k * d as f64 / n as f64)
                    })
                    .sum()
            })
            .collect();
        CMatrix::from_fn(n, n, |j, l| row[(j + 2 * n - l) % (2 * n)])
    }

    /// Normalized state vector from samples of a wavefunction.
    pub fn sample_state(&self, psi: impl Fn(f64) -> Complex64) -> crate::linalg::CVector {
        let v = crate::linalg::CVector::from_fn(self.n, |j, _| psi(self.x(j)));
        let norm = v.norm();
        v / linalg::c(norm)
    }
}

/// Periodic rectangle `[x_min, x_max) × [p_min, p_max)` sampled on an
/// `n_x × n_p` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_x: usize,
    pub n_p: usize,
    pub hbar: f64,
}

impl PhaseSpaceGrid {
    pub fn new(x: (f64, f64), p: (f64, f64), n_x: usize, n_p: usize, hbar: f64) -> Result<Self> {
        let g = Self { x_min: x.0, x_max: x.1, p_min: p.0, p_max: p.1, n_x, n_p, hbar };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 16 || self.n_p < 16 {
            return Err(Error::Contract(format!(
                "phase-space grid needs at least 16 points per axis, got {}x{}",
                self.n_x, self.n_p
            )));
        }
        if !(self.x_max > self.x_min && self.p_max > self.p_min && self.hbar > 0.0) {
            return Err(Error::Contract("degenerate phase-space grid".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }

    pub fn cell(&self) -> f64 {
        self.dx() * self.dp()
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.p_max - self.p_min)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn with_hbar(&self, hbar: f64) -> Self {
        Self { hbar, ..*self }
    }

    fn same_as(&self, other: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.n_x == other.n_x
            && self.n_p == other.n_p
            && close(self.x_min, other.x_min)
            && close(self.x_max, other.x_max)
            && close(self.p_min, other.p_min)
            && close(self.p_max, other.p_max)
            && close(self.hbar, other.hbar)
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Samples `f(x_i, p_j)`, stored with `p` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceFunction {
    pub grid: PhaseSpaceGrid,
    pub values: Vec<Complex64>,
}

impl PhaseSpaceFunction {
    pub fn from_fn(grid: PhaseSpaceGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.n_x * grid.n_p);
        for i in 0..grid.n_x {
            for j in 0..grid.n_p {
                values.push(f(grid.x(i), grid.p(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_real_fn(grid: PhaseSpaceGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, p| Complex64::new(f(x, p), 0.0))
    }

    pub fn constant(grid: PhaseSpaceGrid, c: f64) -> Self {
        Self { grid, values: vec![Complex64::new(c, 0.0); grid.n_x * grid.n_p] }
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid.n_p + j]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.cell()
    }

    /// `sqrt(∫∫|f|² dx dp)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

fn fft_plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Trigonometric interpolation from the coarse grid to the `2n` half grid,
/// built from the same plane waves as the momentum operator.
fn interpolation_matrix(n: usize) -> CMatrix {
    let half = (n / 2) as f64;
    // depends on b - 2j only
    let kernel: Vec<Complex64> = (0..2 * n)
        .map(|r| {
            (0..n).map(|q| Complex64::from_polar(1.0 / n as f64, PI * (q as f64 - half) * r as f64 / n as f64)).sum()
        })
        .collect();
    CMatrix::from_fn(2 * n, n, |b, j| kernel[(b + 2 * n - 2 * j) % (2 * n)])
}

/// Operator kernel on the half grid, `K(x_b, x_c) dx`.
fn refine(op: &CMatrix, n: usize) -> CMatrix {
    let s = interpolation_matrix(n);
    &s * op * s.adjoint()
}

/// Kernel along the anti-diagonal through half-grid row `a`, indexed by
/// `m mod 2n` for separations `|m| <= n/2`; the two end points carry half
/// weight so the symbol of a Hermitian operator is real.
fn antidiagonal(fine: &CMatrix, n: usize, a: usize) -> Vec<Complex64> {
    let two_n = 2 * n as isize;
    let half = (n / 2) as isize;
    let mut h = vec![Complex64::new(0.0, 0.0); 2 * n];
    for m in -half..=half {
        let b = (a as isize + m).rem_euclid(two_n) as usize;
        let c = (a as isize - m).rem_euclid(two_n) as usize;
        let w = if m.abs() == half { 0.5 } else { 1.0 };
        h[m.rem_euclid(two_n) as usize] = fine[(b, c)] * w;
    }
    h
}

/// Weyl symbol `f(x,p) = ∫⟨x+y/2|F|x-y/2⟩ e^{-ipy/ħ} dy`, operator
/// convention (the identity maps to 1).
pub fn wigner_transform(op: &CMatrix, grid: &PositionGrid) -> Result<PhaseSpaceFunction> {
    let n = grid.n;
    if op.nrows() != n || op.ncols() != n {
        return Err(Error::GridMismatch(format!("{}x{} operator on a {n}-point grid", op.nrows(), op.ncols())));
    }
    let fine = refine(op, n);
    let (forward, _) = fft_plans(2 * n);
    let ps = grid.phase_space();
    let mut values = Vec::with_capacity(4 * n * n);
    for a in 0..2 * n {
        // e^{-iπ(q - n)m/n} = (-1)^m e^{-2πiqm/2n}
        let mut h = antidiagonal(&fine, n, a);
        for v in h.iter_mut().skip(1).step_by(2) {
            *v = -*v;
        }
        forward.process(&mut h);
        values.extend(h);
    }
    Ok(PhaseSpaceFunction { grid: ps, values })
}

/// State convention: `ρ_W = symbol / 2πħ`, after checking the state stays
/// away from the edges of the box in position and momentum.
pub fn state_wigner(rho: &DensityMatrix, grid: &PositionGrid) -> Result<PhaseSpaceFunction> {
    let mass = boundary_mass(rho.matrix(), grid);
    if mass > 1e-8 {
        return Err(Error::BoundaryMass { mass, limit: 1e-8 });
    }
    let f = wigner_transform(rho.matrix(), grid)?;
    Ok(f.scale(Complex64::new(1.0 / (2.0 * PI * grid.hbar), 0.0)))
}

/// Probability within `n/16` points of the position edges plus that within
/// `n/16` momenta of the Nyquist edges.
pub fn boundary_mass(rho: &CMatrix, grid: &PositionGrid) -> f64 {
    let n = grid.n;
    let band = (n / 16).max(1);
    let edge = |k: usize| k < band || k >= n - band;
    let position: f64 = (0..n).filter(|&j| edge(j)).map(|j| rho[(j, j)].re.abs()).sum();
    let momentum: f64 = (0..n)
        .filter(|&q| edge(q))
        .map(|q| {
            // ⟨p_q|ρ|p_q⟩ with plane waves e^{2πi(q-n/2)j/n}/√n
            let k = q as f64 - (n / 2) as f64;
            let w: Vec<Complex64> = (0..n)
                .map(|j| Complex64::from_polar(1.0 / (n as f64).sqrt(), 2.0 * PI * k * j as f64 / n as f64))
                .collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                for l in 0..n {
                    acc += w[j].conj() * rho[(j, l)] * w[l];
                }
            }
            acc.re.abs()
        })
        .sum();
    position + momentum
}

/// Inverse of the symbol map: `F[j,l] = (1/2n) Σ_q f((x_j+x_l)/2, p_q) e^{ip_q(x_j-x_l)/ħ}`.
pub fn weyl_quantize(f: &PhaseSpaceFunction, grid: &PositionGrid) -> Result<CMatrix> {
    let ps = grid.phase_space();
    f.grid.check_same(&ps)?;
    let n = grid.n;
    let (_, inverse) = fft_plans(2 * n);
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(2 * n);
    for a in 0..2 * n {
        let mut h: Vec<Complex64> = (0..2 * n).map(|q| f.at(a, q)).collect();
        inverse.process(&mut h);
        for (d, v) in h.iter_mut().enumerate() {
            let sign = if d % 2 == 1 { -1.0 } else { 1.0 };
            *v *= sign / (2 * n) as f64;
        }
        rows.push(h);
    }
    Ok(CMatrix::from_fn(n, n, |j, l| rows[j + l][(j + 2 * n - l) % (2 * n)]))
}

/// `∫∫ ρ_W O dx dp`.
pub fn trace_pairing(rho_w: &PhaseSpaceFunction, o_w: &PhaseSpaceFunction) -> Result<f64> {
    Ok(rho_w.mul(o_w)?.integral().re)
}

/// How derivatives of sampled symbols are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Derivatives {
    /// FFT on the periodic grid; needs smooth, periodic samples.
    #[default]
    Spectral,
    /// Ninth-point stencils, one-sided near the edges; exact on polynomials
    /// up to degree eight, so usable for non-periodic symbols like `x p`.
    FiniteDifference,
}

/// Fraction of spectral weight in the outer quarter of each axis.
pub fn spectral_tail(f: &PhaseSpaceFunction) -> f64 {
    let spec = fft2(f, false);
    let (nx, np) = (f.grid.n_x, f.grid.n_p);
    let outer = |k: usize, n: usize| {
        let s = if k <= n / 2 { k } else { n - k };
        s > 3 * n / 8
    };
    let mut tail: f64 = 0.0;
    let mut total: f64 = 0.0;
    for i in 0..nx {
        for j in 0..np {
            let v = spec[i * np + j].norm();
            total = total.max(v);
            if outer(i, nx) || outer(j, np) {
                tail = tail.max(v);
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn fft2(f: &PhaseSpaceFunction, inverse: bool) -> Vec<Complex64> {
    let (nx, np) = (f.grid.n_x, f.grid.n_p);
    let mut data = f.values.clone();
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(np), planner.plan_fft_inverse(nx))
    } else {
        (planner.plan_fft_forward(np), planner.plan_fft_forward(nx))
    };
    for chunk in data.chunks_mut(np) {
        row.process(chunk);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); nx];
    for j in 0..np {
        for i in 0..nx {
            column[i] = data[i * np + j];
        }
        col.process(&mut column);
        for i in 0..nx {
            data[i * np + j] = column[i];
        }
    }
    data
}

fn wavenumber(k: usize, n: usize, length: f64) -> f64 {
    let s = if k < n / 2 {
        k as f64
    } else if k == n / 2 {
        0.0
    } else {
        k as f64 - n as f64
    };
    2.0 * PI * s / length
}

fn spectral_derivative(f: &PhaseSpaceFunction, ax: usize, ap: usize) -> PhaseSpaceFunction {
    if ax == 0 && ap == 0 {
        return f.clone();
    }
    let g = f.grid;
    let mut spec = fft2(f, false);
    let lx = g.x_max - g.x_min;
    let lp = g.p_max - g.p_min;
    let i = Complex64::new(0.0, 1.0);
    for a in 0..g.n_x {
        let kx = i * wavenumber(a, g.n_x, lx);
        let fx = kx.powu(ax as u32);
        for b in 0..g.n_p {
            let kp = i * wavenumber(b, g.n_p, lp);
            spec[a * g.n_p + b] *= fx * kp.powu(ap as u32);
        }
    }
    let norm = 1.0 / (g.n_x * g.n_p) as f64;
    let values = fft2(&PhaseSpaceFunction { grid: g, values: spec }, true).into_iter().map(|v| v * norm).collect();
    PhaseSpaceFunction { grid: g, values }
}

/// Finite-difference weights for the first derivative at `x0` from the
/// given nodes (Fornberg's recursion).
fn fd_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

const STENCIL: usize = 9;

fn fd_axis(values: &[Complex64], n: usize, h: f64) -> Vec<Complex64> {
    let half = STENCIL / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - STENCIL);
            let nodes: Vec<f64> = (start..start + STENCIL).map(|k| k as f64).collect();
            let w = fd_weights(i as f64, &nodes);
            (0..STENCIL).map(|k| values[start + k] * w[k]).sum::<Complex64>() / h
        })
        .collect()
}

fn fd_derivative(f: &PhaseSpaceFunction, ax: usize, ap: usize) -> PhaseSpaceFunction {
    let g = f.grid;
    let mut values = f.values.clone();
    for _ in 0..ap {
        for chunk in values.chunks_mut(g.n_p) {
            let d = fd_axis(chunk, g.n_p, g.dp());
            chunk.copy_from_slice(&d);
        }
    }
    for _ in 0..ax {
        let mut column = vec![Complex64::new(0.0, 0.0); g.n_x];
        for j in 0..g.n_p {
            for i in 0..g.n_x {
                column[i] = values[i * g.n_p + j];
            }
            let d = fd_axis(&column, g.n_x, g.dx());
            for i in 0..g.n_x {
                values[i * g.n_p + j] = d[i];
            }
        }
    }
    PhaseSpaceFunction { grid: g, values }
}

/// `∂_x^ax ∂_p^ap f`.
pub fn derivative(f: &PhaseSpaceFunction, ax: usize, ap: usize, scheme: Derivatives) -> PhaseSpaceFunction {
    match scheme {
        Derivatives::Spectral => spectral_derivative(f, ax, ap),
        Derivatives::FiniteDifference => fd_derivative(f, ax, ap),
    }
}

const SMOOTHNESS_LIMIT: f64 = 1e-8;

fn check_smooth(f: &PhaseSpaceFunction) -> Result<()> {
    let ratio = spectral_tail(f);
    if ratio > SMOOTHNESS_LIMIT {
        return Err(Error::NotSmooth { ratio });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moyal series `Σ_{k≤K} (iħ/2)^k/k! Σ_j C(k,j) (-1)^j ∂_x^{k-j}∂_p^j f ∂_x^j∂_p^{k-j} g`
/// with spectral derivatives; rejects samples that are not resolved.
pub fn star_product(f: &PhaseSpaceFunction, g: &PhaseSpaceFunction, order: usize) -> Result<PhaseSpaceFunction> {
    check_smooth(f)?;
    check_smooth(g)?;
    star_product_with(f, g, order, Derivatives::Spectral)
}

pub fn star_product_with(
    f: &PhaseSpaceFunction,
    g: &PhaseSpaceFunction,
    order: usize,
    scheme: Derivatives,
) -> Result<PhaseSpaceFunction> {
    f.grid.check_same(&g.grid)?;
    let hbar = f.grid.hbar;
    let mut total = f.mul(g)?;
    let mut factorial = 1.0;
    for k in 1..=order {
        factorial *= k as f64;
        let pref = Complex64::new(0.0, hbar / 2.0).powu(k as u32) / factorial;
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let df = derivative(f, k - j, j, scheme);
            let dg = derivative(g, j, k - j, scheme);
            let term = df.mul(&dg)?.scale(pref * binomial(k, j) * sign);
            total = total.add(&term)?;
        }
    }
    Ok(total)
}

/// `(f⋆g - g⋆f)/(iħ)`.
pub fn moyal_bracket(f: &PhaseSpaceFunction, g: &PhaseSpaceFunction, order: usize) -> Result<PhaseSpaceFunction> {
    check_smooth(f)?;
    check_smooth(g)?;
    moyal_bracket_with(f, g, order, Derivatives::Spectral)
}

pub fn moyal_bracket_with(
    f: &PhaseSpaceFunction,
    g: &PhaseSpaceFunction,
    order: usize,
    scheme: Derivatives,
) -> Result<PhaseSpaceFunction> {
    let fg = star_product_with(f, g, order, scheme)?;
    let gf = star_product_with(g, f, order, scheme)?;
    Ok(fg.sub(&gf)?.scale(Complex64::new(0.0, -1.0 / f.grid.hbar)))
}

/// `∂_x f ∂_p g - ∂_p f ∂_x g`.
pub fn poisson_bracket(
    f: &PhaseSpaceFunction,
    g: &PhaseSpaceFunction,
    scheme: Derivatives,
) -> Result<PhaseSpaceFunction> {
    let a = derivative(f, 1, 0, scheme).mul(&derivative(g, 0, 1, scheme))?;
    let b = derivative(f, 0, 1, scheme).mul(&derivative(g, 1, 0, scheme))?;
    a.sub(&b)
}

/// Result of comparing the environment-integrated symbol of `O_S ⊗ I_E`
/// with the symbol of `O_S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSymbolReport {
    /// `∫ dx_E dp_E` of the identity's symbol; its inverse normalizes.
    pub normalization: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Two-particle symbol of `O_S ⊗ I_E` computed from the full kernel, then
/// integrated over the environment phase space.
pub fn reduced_symbol_check(
    o_s: &CMatrix,
    system: &PositionGrid,
    environment: &PositionGrid,
) -> Result<ReducedSymbolReport> {
    let (ns, ne) = (system.n, environment.n);
    if ns * ne > 64 * 64 {
        return Err(Error::Contract(format!("bipartite grid {ns}x{ne} is too large")));
    }
    if o_s.nrows() != ns || o_s.ncols() != ns {
        return Err(Error::GridMismatch("system operator does not match its grid".into()));
    }
    let integrate = |op: &CMatrix| -> Vec<Complex64> {
        let full = linalg::kron(op, &CMatrix::identity(ne, ne));
        let s = linalg::kron(&interpolation_matrix(ns), &interpolation_matrix(ne));
        let fine = &s * full * s.adjoint();
        let cell_e = environment.phase_space().cell();
        let index = |a: usize, b: usize| a * (2 * ne) + b;
        let mut out = Vec::with_capacity(4 * ns * ns);
        for a_s in 0..2 * ns {
            for q_s in 0..2 * ns {
                let ps = system.p(q_s);
                let mut acc = Complex64::new(0.0, 0.0);
                for a_e in 0..2 * ne {
                    for q_e in 0..2 * ne {
                        let pe = environment.p(q_e);
                        acc += two_particle_symbol(&fine, (ns, ne), (a_s, a_e), (ps, pe), (system, environment), index)
                            * cell_e;
                    }
                }
                out.push(acc);
            }
        }
        out
    };
    let ident = integrate(&CMatrix::identity(ns, ns));
    let normalization = ident.iter().map(|v| v.re).sum::<f64>() / ident.len() as f64;
    let reduced: Vec<Complex64> = integrate(o_s).into_iter().map(|v| v / normalization).collect();
    let direct = wigner_transform(o_s, system)?;
    let max_deviation = reduced.iter().zip(&direct.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(ReducedSymbolReport { normalization, max_deviation, passed: max_deviation <= 1e-6 })
}

#[allow(clippy::type_complexity)]
fn two_particle_symbol(
    fine: &CMatrix,
    (ns, ne): (usize, usize),
    (a_s, a_e): (usize, usize),
    (ps, pe): (f64, f64),
    (sys, env): (&PositionGrid, &PositionGrid),
    index: impl Fn(usize, usize) -> usize,
) -> Complex64 {
    let window = |n: usize| {
        let half = (n / 2) as isize;
        (-half..=half).map(move |m| (m, if m.abs() == half { 0.5 } else { 1.0 }))
    };
    let wrap = |v: isize, n: usize| v.rem_euclid(2 * n as isize) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    for (ms, ws) in window(ns) {
        for (me, we) in window(ne) {
            let row = index(wrap(a_s as isize + ms, ns), wrap(a_e as isize + me, ne));
            let col = index(wrap(a_s as isize - ms, ns), wrap(a_e as isize - me, ne));
            let phase = -(ps * ms as f64 * sys.dx() + pe * me as f64 * env.dx()) / sys.hbar;
            acc += fine[(row, col)] * Complex64::from_polar(ws * we, phase);
        }
    }
    acc
}
