//! Composite Gauss-Legendre quadrature.

const NODES: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Eight-point Gauss-Legendre rule on `panels` equal sub-intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { panels: 16 }
    }
}

impl Quadrature {
    pub fn integrate<T, F>(&self, a: f64, b: f64, f: F) -> T
    where
        F: Fn(f64) -> T,
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let h = (b - a) / self.panels as f64;
        let mut acc = T::default();
        for p in 0..self.panels {
            let mid = a + (p as f64 + 0.5) * h;
            let half = 0.5 * h;
            for (x, w) in NODES.iter().zip(WEIGHTS) {
                acc = acc + f(mid - half * x) * (w * half) + f(mid + half * x) * (w * half);
            }
        }
        acc
    }

    /// Integrates over `[a, b]` split at the interior `breaks`.
    pub fn integrate_split<T, F>(&self, a: f64, b: f64, breaks: &[f64], f: F) -> T
    where
        F: Fn(f64) -> T,
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let mut points = vec![a];
        points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
        points.push(b);
        let mut acc = T::default();
        for w in points.windows(2) {
            acc = acc + self.integrate(w[0], w[1], &f);
        }
        acc
    }

    pub fn refined(&self) -> Self {
        Self { panels: self.panels * 2 }
    }
}
