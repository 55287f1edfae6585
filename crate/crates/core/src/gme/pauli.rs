//! Markovian hopping rates from the memory kernel.

use num_complex::Complex64;

use super::kernel::MemoryKernel;
use super::solver::PauliRates;
use super::GmeError;

/// The kernel must be this close (relative to `W(0)`) to its asymptote at the
/// end of the sampled window.
pub const DECAY_TOL: f64 = 1e-4;

/// Damping rates (in `J/hbar`) used for the tilted-lattice extrapolation.
pub const DAMPING: [f64; 3] = [1e-2, 2e-2, 4e-2];

/// `w = int_0^inf [W(s) - W(inf)] ds` for each direction. With a tilt the
/// oscillating tail is integrated under `exp(-eta s)` and extrapolated to
/// `eta = 0`.
pub fn pauli_rates(kernel: &MemoryKernel) -> Result<PauliRates, GmeError> {
    if kernel.tilt == 0.0 && kernel.temperature == 0.0 && kernel.hopping_exponent > 0.0 {
        return Err(GmeError::NonDecayingKernel);
    }
    let w0 = kernel.w_plus[0];
    let end = kernel.len() - 1;
    let s_end = kernel.times[end];
    let damp = (-2.0 * kernel.hopping_exponent).exp();
    let asymptote = |s: f64, sign: f64| 2.0 * damp * (sign * kernel.tilt * s).cos();
    let residual = (kernel.w_plus[end] - asymptote(s_end, 1.0))
        .abs()
        .max((kernel.w_minus[end] - asymptote(s_end, -1.0)).abs())
        / w0;
    if residual > DECAY_TOL {
        return Err(GmeError::KernelNotDecayed { residual });
    }
    if kernel.tilt == 0.0 {
        let f: Vec<f64> = kernel.w_plus.iter().map(|w| w - kernel.w_inf).collect();
        let w = corrected_trapezoid(&f, kernel.dt);
        return Ok(PauliRates { up: w, down: w });
    }
    let rate = |w: &[f64], sign: f64| {
        let at = |eta: f64| {
            let f: Vec<f64> = w
                .iter()
                .zip(&kernel.times)
                .map(|(v, s)| v * (-eta * s).exp())
                .collect();
            let window = corrected_trapezoid(&f, kernel.dt);
            // int_{s_end}^inf 2 e^{-2S} Re e^{(i sign omega - eta) s} ds
            let z = Complex64::new(-eta, sign * kernel.tilt);
            let tail = -2.0 * damp * ((z * s_end).exp() / z).re;
            window + tail
        };
        let [a, b, c] = DAMPING.map(at);
        (8.0 * a - 6.0 * b + c) / 3.0
    };
    Ok(PauliRates {
        up: rate(&kernel.w_plus, 1.0),
        down: rate(&kernel.w_minus, -1.0),
    })
}

// Trapezoid with the Euler-Maclaurin end correction -h^2/12 (f'(b) - f'(a)),
// derivatives from second-order one-sided differences.
fn corrected_trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    let trap = h * (0.5 * (f[0] + f[n - 1]) + inner);
    if n < 3 {
        return trap;
    }
    let da = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    let db = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    trap - h * h / 12.0 * (db - da)
}
