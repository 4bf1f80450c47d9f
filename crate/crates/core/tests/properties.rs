use num_complex::Complex64;
use proptest::prelude::*;

use mpb_core::classical::{box_average, PhaseBox};
use mpb_core::linalg::{self, c, CMatrix};
use mpb_core::modes::{effective_gamma_from_weights, privileged_state, OperatorModes};
use mpb_core::mpb::{linear_entropy, moving_preferred_basis};
use mpb_core::runner::{Cell, Table};
use mpb_core::scenario::{uniform_times, FlatBand, FlatBandParams};
use mpb_core::state::DensityMatrix;
use mpb_core::wwm::{self, PhaseSpaceFunction, PhaseSpaceGrid, PositionGrid};

fn grid() -> PositionGrid {
    PositionGrid::new(-6.0, 6.0, 32, 0.5).unwrap()
}

/// Hermitian operator with kernel entries only within `band` of the diagonal.
fn banded(entries: &[(f64, f64)], band: usize) -> CMatrix {
    let n = grid().n;
    let mut m = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..(i + band + 1).min(n) {
            let (re, im) = entries[k % entries.len()];
            k += 1;
            let v = if i == j { c(re) } else { Complex64::new(re, im) };
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_eff_lies_between_the_widths(
        w in prop::collection::vec(0.01..10.0f64, 1..8),
        g in prop::collection::vec(0.001..5.0f64, 8),
        scale in prop_oneof![0.001..1000.0f64, -1000.0..-0.001f64],
    ) {
        let g = &g[..w.len()];
        let eff = effective_gamma_from_weights(&w, g).unwrap();
        let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.iter().cloned().fold(0.0, f64::max);
        prop_assert!(eff.gamma_eff >= lo * (1.0 - 1e-12) && eff.gamma_eff <= hi * (1.0 + 1e-12));
        prop_assert!(eff.slow_count() >= 1);
        prop_assert_eq!(eff.slow.len() + eff.fast.len(), w.len());
        let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let again = effective_gamma_from_weights(&scaled, g).unwrap();
        prop_assert_eq!(&again.slow, &eff.slow);
        prop_assert!((again.gamma_eff - eff.gamma_eff).abs() <= 1e-10 * eff.gamma_eff);
    }

    #[test]
    fn hermitian_operators_have_real_symbols(e in entries(), band in 0usize..8) {
        let g = grid();
        let op = banded(&e, band);
        let f = wwm::wigner_transform(&op, &g).unwrap();
        prop_assert!(f.max_imag() < 1e-10 * (1.0 + f.max_abs()));
        let back = wwm::weyl_quantize(&f, &g).unwrap();
        prop_assert!((back - &op).norm() < 1e-9 * (1.0 + op.norm()));
    }

    #[test]
    fn symbol_map_is_linear(a in entries(), b in entries(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let g = grid();
        let (oa, ob) = (banded(&a, 4), banded(&b, 2));
        let combo = &oa * c(s) + &ob * c(t);
        let lhs = wwm::wigner_transform(&combo, &g).unwrap();
        let rhs = wwm::wigner_transform(&oa, &g)
            .unwrap()
            .scale(c(s))
            .add(&wwm::wigner_transform(&ob, &g).unwrap().scale(c(t)))
            .unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn box_average_is_linear_in_the_observable(
        cx in -1.0..1.0f64,
        cp in -1.0..1.0f64,
        s in -2.0..2.0f64,
        k1 in 0.1..2.0f64,
        k2 in 0.1..2.0f64,
    ) {
        let g = PhaseSpaceGrid::new((-4.0, 4.0), (-4.0, 4.0), 64, 64, 0.1).unwrap();
        let rho = PhaseSpaceFunction::from_real_fn(g, |x, p| (-(x * x + p * p)).exp());
        let f = PhaseSpaceFunction::from_real_fn(g, move |x, p| (k1 * x).sin() + p * p);
        let h = PhaseSpaceFunction::from_real_fn(g, move |x, p| (k2 * p).cos() * x);
        let b = PhaseBox::new((cx, cp), (0.6, 0.6), g.hbar).unwrap();
        let combo = f.add(&h.scale(c(s))).unwrap();
        let lhs = box_average(&combo, &rho, &b).unwrap();
        let rhs = box_average(&f, &rho, &b).unwrap() + s * box_average(&h, &rho, &b).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn linear_entropy_bounds(v in prop::collection::vec((0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 3)) {
        // random full-rank 3x3 state from a Gram matrix
        let a = CMatrix::from_fn(3, 3, |i, j| Complex64::new(v[i].1 + v[j].0, v[j].2 * v[i].0));
        let m = &a * a.adjoint() + CMatrix::identity(3, 3) * c(1e-6);
        let tr = linalg::trace(&m).re;
        let rho = DensityMatrix::new(m * c(1.0 / tr)).unwrap();
        let s = linear_entropy(&rho);
        prop_assert!((-1e-14..=1.0 - 1.0 / 3.0 + 1e-14).contains(&s));
    }

    #[test]
    fn csv_reals_parse_back_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let mut t = Table::new(&["v"]);
        for &x in &xs {
            t.push(vec![Cell::Real(x)]);
        }
        let csv = t.to_csv();
        let back: Vec<f64> = csv.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        prop_assert_eq!(back, xs);
    }
}

#[test]
fn preferred_basis_weights_form_a_distribution() {
    let fb = FlatBand::new(FlatBandParams::default()).unwrap();
    let tr = fb.relaxation_time().unwrap();
    let times = uniform_times(5.0 * tr, 200);
    let states = fb.reduced_series(&times).unwrap();
    let ops = OperatorModes::fit(&times, &states, &fb.catalogue().unwrap().density_channels(), 1.0).unwrap();
    let slow = ops.effective_gamma().unwrap().slow_count();
    let ps: Vec<_> = times.iter().map(|&t| privileged_state(&ops, slow, t).unwrap().state).collect();
    let basis = moving_preferred_basis(&times, &ps).unwrap();
    for (k, w) in basis.weights.iter().enumerate() {
        assert!(w.iter().all(|&p| p >= -1e-12), "negative weight at {k}: {w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // the frame diagonalizes the state with these weights
        let f = &basis.frames[k];
        let d = f.adjoint() * ps[k].matrix() * f;
        for (i, &p) in w.iter().enumerate() {
            assert!((d[(i, i)].re - p).abs() < 1e-10);
        }
        assert!((f.adjoint() * f - CMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
