//! Benchmark fixtures.

use mpb_core::linalg::CMatrix;
use mpb_core::modes::OperatorModes;
use mpb_core::scenario::{uniform_times, FlatBand, FlatBandParams};
use mpb_core::state::DensityMatrix;
use mpb_core::wwm::{PhaseSpaceFunction, PhaseSpaceGrid, PositionGrid};

pub fn flat_band() -> FlatBand {
    FlatBand::new(FlatBandParams::default()).expect("default flat band")
}

/// Reduced states sampled over five relaxation times.
pub fn reduced_series(fb: &FlatBand, samples: usize) -> (Vec<f64>, Vec<DensityMatrix>) {
    let tr = fb.relaxation_time().expect("decaying pole");
    let times = uniform_times(5.0 * tr, samples);
    let states = fb.reduced_series(&times).expect("reduced series");
    (times, states)
}

pub fn operator_modes(fb: &FlatBand, samples: usize) -> OperatorModes {
    let (times, states) = reduced_series(fb, samples);
    let channels = fb.catalogue().expect("catalogue").density_channels();
    OperatorModes::fit(&times, &states, &channels, fb.config.hbar).expect("mode fit")
}

pub fn position_grid(n: usize) -> PositionGrid {
    PositionGrid::new(-8.0, 8.0, n, 1.0).expect("grid")
}

/// Pure displaced Gaussian on `grid`.
pub fn gaussian(grid: &PositionGrid) -> CMatrix {
    let psi = grid.sample_state(|x| num_complex::Complex64::from_polar((-(x - 0.7).powi(2) / 2.0).exp(), 0.4 * x));
    let psi = psi.normalize();
    &psi * psi.adjoint()
}

/// Smooth symbols that vanish at the box edges.
pub fn symbol_pair(n: usize, hbar: f64) -> (PhaseSpaceFunction, PhaseSpaceFunction) {
    let g = PhaseSpaceGrid::new((-6.0, 6.0), (-6.0, 6.0), n, n, hbar).expect("grid");
    let f = PhaseSpaceFunction::from_real_fn(g, |x, p| (-((x - 0.5).powi(2) + p * p) / 2.0).exp());
    let k = PhaseSpaceFunction::from_real_fn(g, |x, p| (-(x * x + (p - 0.3).powi(2)) / 1.5).exp() * (1.0 + 0.3 * x));
    (f, k)
}
