//! Classical structure carried by preferred-basis projectors: characteristic
//! domains, coarse-grained box averages, action-angle variables and the
//! trajectories generated by the frame generator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::wwm::{self, Derivatives, PhaseSpaceFunction, PhaseSpaceGrid, PositionGrid};

/// Midpoint between the two limit values of a characteristic function.
pub const DOMAIN_THRESHOLD: f64 = 0.5;

/// Weyl symbol of a projector, operator convention (integrates to `2πħ` per
/// rank).
pub fn projector_symbol(proj: &CMatrix, grid: &PositionGrid) -> Result<PhaseSpaceFunction> {
    linalg::check_square(proj, "projector")?;
    let scale = linalg::frobenius(proj).max(1.0);
    if linalg::hermiticity_defect(proj) > 1e-10 * scale {
        return Err(Error::Contract("projector is not Hermitian".into()));
    }
    let defect = linalg::frobenius(&(proj * proj - proj));
    if defect > 1e-10 * scale {
        return Err(Error::Contract(format!("projector is not idempotent (defect {defect:e})")));
    }
    let sym = wwm::wigner_transform(proj, grid)?;
    Ok(sym.map(|v| linalg::c(v.re)))
}

/// `(mω x² + p²/(mω))/2`.
pub fn harmonic_action(x: f64, p: f64, mass: f64, omega: f64) -> f64 {
    let mw = mass * omega;
    0.5 * (mw * x * x + p * p / mw)
}

/// Clockwise polar angle in the scaled plane, so that `{Φ, I} = 1` and the
/// harmonic flow advances it at rate `ω`.
pub fn harmonic_angle(x: f64, p: f64, mass: f64, omega: f64) -> f64 {
    let mw = mass * omega;
    (-p / mw.sqrt()).atan2(x * mw.sqrt())
}

/// Oscillator eigenfunction `ψ_n` sampled on the grid and normalized there.
pub fn oscillator_eigenstate(grid: &PositionGrid, n: usize, mass: f64, omega: f64) -> CVector {
    let k = (mass * omega / grid.hbar).sqrt();
    grid.sample_state(|x| {
        let y = k * x;
        // normalized Hermite recurrence, kept bounded by the Gaussian factor
        let mut prev = 0.0;
        let mut cur = (-0.5 * y * y).exp();
        for j in 0..n {
            let next = (2.0 / (j + 1) as f64).sqrt() * y * cur - (j as f64 / (j + 1) as f64).sqrt() * prev;
            prev = cur;
            cur = next;
        }
        linalg::c(cur)
    })
}

/// `Σ_{n∈band} 2(-1)^n e^{-u/2} L_n(u)` for consecutive bands
/// `[bounds[k], bounds[k+1])`. The Laguerre recurrence is rescaled as it
/// grows so that large `u` and large `n` do not overflow.
pub fn band_profiles(u: f64, bounds: &[usize]) -> Vec<f64> {
    let bands = bounds.len().saturating_sub(1);
    let mut out = vec![0.0; bands];
    if bands == 0 {
        return out;
    }
    let top = bounds[bands];
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    let mut log_scale = -0.5 * u;
    let mut band = 0;
    for n in 0..top {
        while band < bands && n >= bounds[band + 1] {
            band += 1;
        }
        if n >= bounds[0] && band < bands {
            let sign = if n % 2 == 0 { 2.0 } else { -2.0 };
            out[band] += sign * cur * log_scale.exp();
        }
        let next = (((2 * n + 1) as f64 - u) * cur - n as f64 * prev) / (n + 1) as f64;
        prev = cur;
        cur = next;
        let s = cur.abs().max(prev.abs());
        if s > 1e150 {
            prev /= s;
            cur /= s;
            log_scale += s.ln();
        }
    }
    out
}

/// Level bounds for action bands: level `n` (action `ħ(n+1/2)`) belongs to
/// band `k` when `edges[k] <= ħ(n+1/2) < edges[k+1]`.
pub fn band_levels(edges: &[f64], hbar: f64) -> Result<Vec<usize>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
        return Err(Error::Contract("action edges must be non-negative and increasing".into()));
    }
    let bounds: Vec<usize> = edges.iter().map(|&e| (e / hbar - 0.5).ceil().max(0.0) as usize).collect();
    if bounds.windows(2).any(|w| w[1] == w[0]) {
        return Err(Error::Contract(format!("an action band holds no level at hbar = {hbar}")));
    }
    Ok(bounds)
}

/// Symbols of the projectors onto the oscillator levels in each action
/// band, evaluated from the closed-form Laguerre expression.
pub fn band_projector_symbols(
    grid: &PhaseSpaceGrid,
    edges: &[f64],
    mass: f64,
    omega: f64,
) -> Result<Vec<PhaseSpaceFunction>> {
    let bounds = band_levels(edges, grid.hbar)?;
    let bands = bounds.len() - 1;
    let mut values = vec![Vec::with_capacity(grid.n_x * grid.n_p); bands];
    for i in 0..grid.n_x {
        for j in 0..grid.n_p {
            let u = 4.0 * harmonic_action(grid.x(i), grid.p(j), mass, omega) / grid.hbar;
            for (k, v) in band_profiles(u, &bounds).into_iter().enumerate() {
                values[k].push(linalg::c(v));
            }
        }
    }
    Ok(values.into_iter().map(|values| PhaseSpaceFunction { grid: *grid, values }).collect())
}

/// `∫∫|Π(Π-1)| dx dp`: how far a symbol is from a characteristic function.
pub fn characteristic_defect(sym: &PhaseSpaceFunction) -> f64 {
    sym.values.iter().map(|v| (v.re * (v.re - 1.0)).abs()).sum::<f64>() * sym.grid.cell()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub grid: PhaseSpaceGrid,
    pub mask: Vec<bool>,
    /// Fraction of the grid area covered.
    pub volume: f64,
    pub connected: bool,
}

impl Domain {
    pub fn from_mask(grid: PhaseSpaceGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.n_x * grid.n_p {
            return Err(Error::Dimension(format!("mask of {} cells on a {}x{} grid", mask.len(), grid.n_x, grid.n_p)));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyDomain);
        }
        let connected = components(&mask, grid.n_x, grid.n_p) == 1;
        let volume = count as f64 * grid.cell() / grid.area();
        Ok(Self { grid, mask, volume, connected })
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.grid.n_p + j]
    }

    pub fn overlap(&self, other: &Self) -> Result<usize> {
        self.grid.check_same(&other.grid)?;
        Ok(self.mask.iter().zip(&other.mask).filter(|(a, b)| **a && **b).count())
    }
}

/// 4-neighbour components of a mask, without wrapping at the edges.
fn components(mask: &[bool], nx: usize, np: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (i, j) = (c / np, c % np);
            let mut visit = |k: usize| {
                if mask[k] && !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            };
            if i > 0 {
                visit(c - np);
            }
            if i + 1 < nx {
                visit(c + np);
            }
            if j > 0 {
                visit(c - 1);
            }
            if j + 1 < np {
                visit(c + 1);
            }
        }
    }
    count
}

/// Cells where the symbol reaches `threshold`.
pub fn characteristic_domain(sym: &PhaseSpaceFunction, threshold: f64) -> Result<Domain> {
    let scale = sym.max_abs().max(1.0);
    if sym.max_imag() > 1e-8 * scale {
        return Err(Error::Contract(format!("symbol is not real (imaginary part {:e})", sym.max_imag())));
    }
    let mask = sym.values.iter().map(|v| v.re >= threshold).collect();
    Domain::from_mask(sym.grid, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub volumes: Vec<f64>,
    pub total_volume: f64,
    /// `(i, j, shared cells)` for every pair.
    pub overlaps: Vec<(usize, usize, usize)>,
    /// Largest overlap as a fraction of the smaller domain.
    pub worst_overlap_fraction: f64,
    pub violations: Vec<String>,
}

impl PartitionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Disjointness and total-volume bound of a domain family.
pub fn check_partition(domains: &[Domain], volume_tol: f64) -> Result<PartitionReport> {
    let mut overlaps = Vec::new();
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, a) in domains.iter().enumerate() {
        for (j, b) in domains.iter().enumerate().skip(i + 1) {
            let shared = a.overlap(b)?;
            worst = worst.max(shared as f64 / a.count().min(b.count()) as f64);
            if shared > 0 {
                violations.push(format!("domains {i} and {j} share {shared} cells"));
            }
            overlaps.push((i, j, shared));
        }
    }
    let volumes: Vec<f64> = domains.iter().map(|d| d.volume).collect();
    let total_volume: f64 = volumes.iter().sum();
    if total_volume > 1.0 + volume_tol {
        violations.push(format!("total volume {total_volume} exceeds 1"));
    }
    Ok(PartitionReport { volumes, total_volume, overlaps, worst_overlap_fraction: worst, violations })
}

/// Coarse-graining cell centred at `center` with widths `σ_x, σ_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub center: (f64, f64),
    pub widths: (f64, f64),
}

impl PhaseBox {
    pub fn new(center: (f64, f64), widths: (f64, f64), hbar: f64) -> Result<Self> {
        if !(widths.0 > 0.0 && widths.1 > 0.0) {
            return Err(Error::Contract("box widths must be positive".into()));
        }
        if widths.0 * widths.1 < 0.5 * hbar * (1.0 - 1e-12) {
            return Err(Error::Contract(format!(
                "box area {} is below the uncertainty floor {}",
                widths.0 * widths.1,
                0.5 * hbar
            )));
        }
        Ok(Self { center, widths })
    }

    /// Minimum-uncertainty box of an oscillator around `center`.
    pub fn coherent(center: (f64, f64), mass: f64, omega: f64, hbar: f64) -> Result<Self> {
        let mw = mass * omega;
        Self::new(center, ((0.5 * hbar / mw).sqrt(), (0.5 * hbar * mw).sqrt()), hbar)
    }

    fn contains(&self, x: f64, p: f64) -> bool {
        (x - self.center.0).abs() <= 0.5 * self.widths.0 && (p - self.center.1).abs() <= 0.5 * self.widths.1
    }

    /// Grid cells whose nodes fall in the box.
    pub fn cells(&self, grid: &PhaseSpaceGrid) -> Result<Vec<(usize, usize)>> {
        let (hx, hp) = (0.5 * self.widths.0, 0.5 * self.widths.1);
        let last_x = grid.x(grid.n_x - 1);
        let last_p = grid.p(grid.n_p - 1);
        if self.center.0 - hx < grid.x_min
            || self.center.0 + hx > last_x
            || self.center.1 - hp < grid.p_min
            || self.center.1 + hp > last_p
        {
            return Err(Error::Contract(format!("box {self:?} is not inside the grid")));
        }
        let mut out = Vec::new();
        for i in 0..grid.n_x {
            for j in 0..grid.n_p {
                if self.contains(grid.x(i), grid.p(j)) {
                    out.push((i, j));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Contract("box holds no grid node".into()));
        }
        Ok(out)
    }
}

/// `(1/σ_xσ_p) ∫_box f ρ_W dx dp` as a Riemann sum.
pub fn box_average(f: &PhaseSpaceFunction, rho_w: &PhaseSpaceFunction, b: &PhaseBox) -> Result<f64> {
    f.grid.check_same(&rho_w.grid)?;
    let cells = b.cells(&f.grid)?;
    let sum: f64 = cells.iter().map(|&(i, j)| (f.at(i, j) * rho_w.at(i, j)).re).sum();
    Ok(sum * f.grid.cell() / (b.widths.0 * b.widths.1))
}

/// Conjugate pair built from a nested family of annular domains.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAnglePair {
    pub pi: PhaseSpaceFunction,
    pub phi: PhaseSpaceFunction,
    pub mass: f64,
    pub omega: f64,
    /// Action range `[lo, hi]` of each domain, inner first.
    pub bands: Vec<(f64, f64)>,
}

impl ActionAnglePair {
    /// The exact harmonic pair on a grid.
    pub fn harmonic(grid: PhaseSpaceGrid, mass: f64, omega: f64) -> Self {
        Self {
            pi: PhaseSpaceFunction::from_real_fn(grid, |x, p| harmonic_action(x, p, mass, omega)),
            phi: PhaseSpaceFunction::from_real_fn(grid, |x, p| harmonic_angle(x, p, mass, omega)),
            mass,
            omega,
            bands: Vec::new(),
        }
    }

    pub fn action(&self, x: f64, p: f64) -> f64 {
        harmonic_action(x, p, self.mass, self.omega)
    }

    pub fn angle(&self, x: f64, p: f64) -> f64 {
        harmonic_angle(x, p, self.mass, self.omega)
    }

    /// Largest `|{Φ, Π} - 1|` from centred differences, skipping cells
    /// within `min_radius` grid cells of the centre and, when bands are
    /// known, cells outside them.
    pub fn bracket_residual(&self, min_radius: f64) -> f64 {
        let g = self.pi.grid;
        let (dx, dp) = (g.dx(), g.dp());
        let wrap = |a: f64| (a + PI).rem_euclid(2.0 * PI) - PI;
        let mut worst: f64 = 0.0;
        for i in 1..g.n_x - 1 {
            for j in 1..g.n_p - 1 {
                let (x, p) = (g.x(i), g.p(j));
                if (x / dx).hypot(p / dp) <= min_radius {
                    continue;
                }
                let action = self.action(x, p);
                if !self.bands.is_empty() && !self.bands.iter().any(|&(lo, hi)| action >= lo && action <= hi) {
                    continue;
                }
                let phi_x = wrap(self.phi.at(i + 1, j).re - self.phi.at(i - 1, j).re) / (2.0 * dx);
                let phi_p = wrap(self.phi.at(i, j + 1).re - self.phi.at(i, j - 1).re) / (2.0 * dp);
                let pi_x = (self.pi.at(i + 1, j).re - self.pi.at(i - 1, j).re) / (2.0 * dx);
                let pi_p = (self.pi.at(i, j + 1).re - self.pi.at(i, j - 1).re) / (2.0 * dp);
                worst = worst.max((phi_x * pi_p - phi_p * pi_x - 1.0).abs());
            }
        }
        worst
    }
}

/// Action range of a domain and the fraction of that radial band it fills.
fn annulus_fit(d: &Domain, mass: f64, omega: f64) -> (f64, f64, f64) {
    let g = d.grid;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..g.n_x {
        for j in 0..g.n_p {
            if d.contains(i, j) {
                let a = harmonic_action(g.x(i), g.p(j), mass, omega);
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
    }
    let mut band = 0usize;
    for i in 0..g.n_x {
        for j in 0..g.n_p {
            let a = harmonic_action(g.x(i), g.p(j), mass, omega);
            if a >= lo && a <= hi {
                band += 1;
            }
        }
    }
    (lo, hi, d.count() as f64 / band as f64)
}

/// Action and angle for domains that are nested annuli about the origin of
/// the oscillator plane. Other geometries are not supported.
pub fn action_angle_from_domains(domains: &[Domain], mass: f64, omega: f64) -> Result<ActionAnglePair> {
    let first = domains.first().ok_or_else(|| Error::Empty("domain family".into()))?;
    let mut bands = Vec::with_capacity(domains.len());
    for (k, d) in domains.iter().enumerate() {
        d.grid.check_same(&first.grid)?;
        let (lo, hi, fill) = annulus_fit(d, mass, omega);
        if !d.connected || fill < 0.9 {
            return Err(Error::UnsupportedGeometry(format!(
                "domain {k} is not an annulus about the origin (fills {fill:.3} of its band)"
            )));
        }
        bands.push((lo, hi));
    }
    bands.sort_by(|a, b| a.0.total_cmp(&b.0));
    // one grid cell of slack on shared edges
    let slack = harmonic_action(first.grid.dx(), first.grid.dp(), mass, omega) * 4.0;
    for w in bands.windows(2) {
        if w[1].0 < w[0].1 - slack * (1.0 + w[0].1.sqrt()) {
            return Err(Error::UnsupportedGeometry("domains are not radially ordered".into()));
        }
    }
    let mut pair = ActionAnglePair::harmonic(first.grid, mass, omega);
    pair.bands = bands;
    Ok(pair)
}

/// `ℵ(x,p,t) = Σ_a c_a(t) B_a(x,p)` with the coefficients interpolated
/// linearly between samples and the basis gradients precomputed.
#[derive(Debug, Clone)]
pub struct SymbolGenerator {
    grid: PhaseSpaceGrid,
    times: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    grad_x: Vec<Vec<f64>>,
    grad_p: Vec<Vec<f64>>,
}

impl SymbolGenerator {
    pub fn new(
        basis: &[PhaseSpaceFunction],
        times: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        scheme: Derivatives,
    ) -> Result<Self> {
        let first = basis.first().ok_or_else(|| Error::Empty("generator basis".into()))?;
        if times.is_empty() || times.len() != coefficients.len() {
            return Err(Error::Dimension(format!("{} times vs {} coefficient rows", times.len(), coefficients.len())));
        }
        if coefficients.iter().any(|c| c.len() != basis.len()) {
            return Err(Error::Dimension("coefficient rows must match the basis".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("times must increase".into()));
        }
        let mut grad_x = Vec::with_capacity(basis.len());
        let mut grad_p = Vec::with_capacity(basis.len());
        for b in basis {
            first.grid.check_same(&b.grid)?;
            if b.max_imag() > 1e-8 * b.max_abs().max(1.0) {
                return Err(Error::Contract("generator symbols must be real".into()));
            }
            grad_x.push(wwm::derivative(b, 1, 0, scheme).real_values());
            grad_p.push(wwm::derivative(b, 0, 1, scheme).real_values());
        }
        Ok(Self { grid: first.grid, times, coefficients, grad_x, grad_p })
    }

    /// A time-independent generator.
    pub fn stationary(symbol: &PhaseSpaceFunction, scheme: Derivatives) -> Result<Self> {
        Self::new(std::slice::from_ref(symbol), vec![0.0], vec![vec![1.0]], scheme)
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    fn coefficients_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.coefficients[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.coefficients[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.coefficients[k].iter().zip(&self.coefficients[k + 1]).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// `(∂ℵ/∂p, -∂ℵ/∂x)` by bilinear interpolation; `None` off the grid.
    pub fn velocity(&self, x: f64, p: f64, t: f64) -> Option<(f64, f64)> {
        let g = &self.grid;
        let fx = (x - g.x_min) / g.dx();
        let fp = (p - g.p_min) / g.dp();
        if !(fx >= 0.0 && fp >= 0.0 && fx <= (g.n_x - 1) as f64 && fp <= (g.n_p - 1) as f64) {
            return None;
        }
        let i = (fx.floor() as usize).min(g.n_x - 2);
        let j = (fp.floor() as usize).min(g.n_p - 2);
        let (a, b) = (fx - i as f64, fp - j as f64);
        let lerp = |v: &[f64]| {
            let at = |di: usize, dj: usize| v[(i + di) * g.n_p + j + dj];
            (1.0 - a) * ((1.0 - b) * at(0, 0) + b * at(0, 1)) + a * ((1.0 - b) * at(1, 0) + b * at(1, 1))
        };
        let c = self.coefficients_at(t);
        let mut vx = 0.0;
        let mut vp = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                vx += ck * lerp(&self.grad_p[k]);
                vp -= ck * lerp(&self.grad_x[k]);
            }
        }
        Some((vx, vp))
    }
}

/// Box-averaged action and unwrapped angle along the characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub pi_bar: Vec<f64>,
    pub phi_bar: Vec<f64>,
}

impl Trajectory {
    /// `max |Π̄(t) - Π̄(0)| / |Π̄(0)|` over samples with `t <= t_max`.
    pub fn action_drift(&self, t_max: f64) -> f64 {
        let p0 = self.pi_bar[0];
        self.times
            .iter()
            .zip(&self.pi_bar)
            .filter(|(t, _)| **t <= t_max)
            .map(|(_, p)| (p - p0).abs())
            .fold(0.0, f64::max)
            / p0.abs()
    }

    /// True when the angle never moves backwards (up to `tol`) or never
    /// moves forwards.
    pub fn angle_monotone(&self, tol: f64) -> bool {
        let up = self.phi_bar.windows(2).all(|w| w[1] >= w[0] - tol);
        let down = self.phi_bar.windows(2).all(|w| w[1] <= w[0] + tol);
        up || down
    }
}

/// Moves every grid node of `init` along `ż = (∂ℵ/∂p, -∂ℵ/∂x)` with RK4 and
/// reports `(1/σ_xσ_p) Σ G(z(t)) ρ_W(z(0)) dA`, where `G` is the action or the
/// angle unwrapped along each path. Liouville's theorem lets the initial
/// weights stand for the transported density.
pub fn evolve_phase_space(
    gen: &SymbolGenerator,
    pair: &ActionAnglePair,
    rho_w: &PhaseSpaceFunction,
    init: &PhaseBox,
    times: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    let grid = gen.grid;
    grid.check_same(&rho_w.grid)?;
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("need at least two increasing times".into()));
    }
    let substeps = substeps.max(1);
    let cells = init.cells(&grid)?;
    let norm = grid.cell() / (init.widths.0 * init.widths.1);
    let weights: Vec<f64> = cells.iter().map(|&(i, j)| rho_w.at(i, j).re * norm).collect();
    let mut points: Vec<(f64, f64)> = cells.iter().map(|&(i, j)| (grid.x(i), grid.p(j))).collect();
    let mut angles: Vec<f64> = points.iter().map(|&(x, p)| pair.angle(x, p)).collect();
    let wrap = |a: f64| (a + PI).rem_euclid(2.0 * PI) - PI;

    let average = |points: &[(f64, f64)], angles: &[f64]| {
        let mut pi = 0.0;
        let mut phi = 0.0;
        for ((&(x, p), &a), &w) in points.iter().zip(angles).zip(&weights) {
            pi += w * pair.action(x, p);
            phi += w * a;
        }
        (pi, phi)
    };
    let (pi0, phi0) = average(&points, &angles);
    let mut pi_bar = vec![pi0];
    let mut phi_bar = vec![phi0];
    let mut t = times[0];
    for &target in &times[1..] {
        let h = (target - t) / substeps as f64;
        for _ in 0..substeps {
            for (z, a) in points.iter_mut().zip(angles.iter_mut()) {
                let next = rk4_step(gen, *z, t, h).ok_or(Error::LeftGrid { time: t })?;
                *a += wrap(pair.angle(next.0, next.1) - pair.angle(z.0, z.1));
                *z = next;
            }
            t += h;
        }
        t = target;
        let (pi, phi) = average(&points, &angles);
        pi_bar.push(pi);
        phi_bar.push(phi);
    }
    Ok(Trajectory { times: times.to_vec(), pi_bar, phi_bar })
}

fn rk4_step(gen: &SymbolGenerator, z: (f64, f64), t: f64, h: f64) -> Option<(f64, f64)> {
    let k1 = gen.velocity(z.0, z.1, t)?;
    let k2 = gen.velocity(z.0 + 0.5 * h * k1.0, z.1 + 0.5 * h * k1.1, t + 0.5 * h)?;
    let k3 = gen.velocity(z.0 + 0.5 * h * k2.0, z.1 + 0.5 * h * k2.1, t + 0.5 * h)?;
    let k4 = gen.velocity(z.0 + h * k3.0, z.1 + h * k3.1, t + h)?;
    Some((
        z.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        z.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    ))
}

/// Settling thresholds for the averaged action and angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCriterion {
    /// Fraction of the initial scale below which a rate counts as zero.
    pub relative: f64,
    /// How long both rates must stay below threshold.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    /// `(t, Π̄, Φ̄, settled)` rows.
    pub curve: Vec<(f64, f64, f64, bool)>,
    /// Start of the first window over which both rates stay small.
    pub equilibrium_time: Option<f64>,
    pub angle_threshold: f64,
    pub action_threshold: f64,
}

fn rates(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// The `(t, Π̄, Φ̄)` curve with an equilibrium flag. The angle scale is the
/// initial winding rate `|dΦ̄/dt(0)|`; the action scale is `|Π̄(0)|` per
/// unit of that rate.
pub fn trajectory_surfaces(traj: &Trajectory, criterion: &EquilibriumCriterion) -> Result<SurfaceReport> {
    let n = traj.times.len();
    if n < 2 || traj.pi_bar.len() != n || traj.phi_bar.len() != n {
        return Err(Error::Dimension("trajectory series must share a time grid of length >= 2".into()));
    }
    let d_pi = rates(&traj.times, &traj.pi_bar);
    let d_phi = rates(&traj.times, &traj.phi_bar);
    let rate0 = d_phi[0].abs();
    let angle_threshold = criterion.relative * rate0;
    let action_threshold = criterion.relative * traj.pi_bar[0].abs() * rate0;
    let small: Vec<bool> =
        (0..n).map(|k| d_phi[k].abs() <= angle_threshold && d_pi[k].abs() <= action_threshold).collect();
    // first sample at or after k whose rates are not small
    let mut next_bad = vec![n; n + 1];
    for k in (0..n).rev() {
        next_bad[k] = if small[k] { next_bad[k + 1] } else { k };
    }
    let t_last = traj.times[n - 1];
    let settled: Vec<bool> = (0..n)
        .map(|k| {
            let until = traj.times[k] + criterion.window;
            match next_bad[k] {
                j if j == n => t_last >= until,
                j => traj.times[j] > until,
            }
        })
        .collect();
    let equilibrium_time = settled.iter().position(|&s| s).map(|k| traj.times[k]);
    let curve = (0..n)
        .map(|k| (traj.times[k], traj.pi_bar[k], traj.phi_bar[k], equilibrium_time.is_some_and(|t| traj.times[k] >= t)))
        .collect();
    Ok(SurfaceReport { curve, equilibrium_time, angle_threshold, action_threshold })
}
