use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

/// Heat step on a periodic grid: convolution with the normalized lattice-sampled
/// Gaussian of variance `dt`, applied spectrally. The kernel is positive, and on
/// resolved modes it agrees with `e^{−½w²dt}` up to aliases of size
/// `exp(−2π² dt/dx²)`.
pub struct HeatPropagator {
    n: usize,
    multipliers: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// The kernel is positive, so values the heat step leaves at or below zero are FFT
/// round-off; they are clamped here.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Fourier multipliers `m(w_k) = Σ_s ĝ(w_k + 2πs/dx) / Σ_s ĝ(2πs/dx)`, `ĝ(w) = e^{−½w²dt}`,
/// for `k = 0..=n/2`: the DFT of the sampled periodized Gaussian, normalized to mass one.
pub fn lattice_gaussian_multipliers(n: usize, length: f64, dt: f64) -> Vec<f64> {
    let dx = length / n as f64;
    let alias = 2.0 * PI / dx;
    // Terms beyond |s| = reach are below e^{-70} relative to the leading one.
    let reach = ((140.0 / dt).sqrt() / alias).ceil() as i64 + 1;
    let sum = |w: f64| {
        (-reach..=reach)
            .map(|s| (-0.5 * (w + s as f64 * alias).powi(2) * dt).exp())
            .sum::<f64>()
    };
    let norm = sum(0.0);
    (0..=n / 2)
        .map(|k| sum(2.0 * PI * k as f64 / length) / norm)
        .collect()
}

impl HeatPropagator {
    pub fn new(n: usize, length: f64, dt: f64) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let multipliers = lattice_gaussian_multipliers(n, length, dt)
            .into_iter()
            .map(|m| m / n as f64)
            .collect();
        let spectrum = forward.make_output_vec();
        let scratch_len = forward.get_scratch_len().max(inverse.get_scratch_len());
        let scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        Self {
            n,
            multipliers,
            forward,
            inverse,
            spectrum,
            scratch,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Heat step without the positivity clamp.
    pub fn apply_raw(&mut self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.n);
        self.forward
            .process_with_scratch(data, &mut self.spectrum, &mut self.scratch)
            .expect("forward FFT buffer sizes");
        for (c, m) in self.spectrum.iter_mut().zip(&self.multipliers) {
            *c *= *m;
        }
        // Imaginary parts of the zero and Nyquist modes are round-off; c2r rejects them.
        self.spectrum[0].im = 0.0;
        if self.n.is_multiple_of(2) {
            self.spectrum[self.n / 2].im = 0.0;
        }
        self.inverse
            .process_with_scratch(&mut self.spectrum, data, &mut self.scratch)
            .expect("inverse FFT buffer sizes");
    }

    pub fn apply(&mut self, data: &mut [f64]) {
        self.apply_observed(data, |_| {});
    }

    /// Heat flow with clamp; `observe` sees the propagated spectrum scaled by `1/n`.
    pub fn apply_observed(&mut self, data: &mut [f64], observe: impl FnOnce(&[Complex64])) {
        debug_assert_eq!(data.len(), self.n);
        self.forward
            .process_with_scratch(data, &mut self.spectrum, &mut self.scratch)
            .expect("forward FFT buffer sizes");
        for (c, m) in self.spectrum.iter_mut().zip(&self.multipliers) {
            *c *= *m;
        }
        self.spectrum[0].im = 0.0;
        if self.n.is_multiple_of(2) {
            self.spectrum[self.n / 2].im = 0.0;
        }
        observe(&self.spectrum);
        self.inverse
            .process_with_scratch(&mut self.spectrum, data, &mut self.scratch)
            .expect("inverse FFT buffer sizes");
        for v in data.iter_mut() {
            if !(*v > POSITIVITY_FLOOR) {
                *v = POSITIVITY_FLOOR;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_mode_decays_exactly() {
        let (n, l, dt) = (64, 2.0, 0.01);
        let mut heat = HeatPropagator::new(n, l, dt);
        let mut v: Vec<f64> = (0..n)
            .map(|i| 3.0 * (2.0 * PI * 2.0 * i as f64 / n as f64).cos())
            .collect();
        for _ in 0..10 {
            heat.apply_raw(&mut v);
        }
        let decay = (-0.5 * (2.0 * PI * 2.0 / l).powi(2) * 0.1).exp();
        for (i, x) in v.iter().enumerate() {
            let want = 3.0 * decay * (2.0 * PI * 2.0 * i as f64 / n as f64).cos();
            assert!((x - want).abs() < 1e-13);
        }
    }

    #[test]
    fn delta_stays_positive_with_unit_mass() {
        let (n, l) = (32, 1.0);
        let mut heat = HeatPropagator::new(n, l, 1e-4);
        let mut v = vec![0.0; n];
        v[0] = n as f64;
        heat.apply_raw(&mut v);
        assert!(v.iter().all(|x| *x > -1e-14));
        assert!((v.iter().sum::<f64>() / n as f64 - 1.0).abs() < 1e-14);
        assert!(v[0] > 0.98 * n as f64);
    }
}
