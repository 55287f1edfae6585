//! Independent reference calculations for the kernel and the solver.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::quadrature::{GaussLegendre, PANEL_ORDER};
use crate::special::{laguerre, ln_factorial};

/// Both routes to the single-mode thermal trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleModeValue {
    /// Truncated double Fock sum.
    pub brute_force: Complex64,
    /// `Z exp[-x ((N+1)(1 - e^{i wt}) + N (1 - e^{-i wt}))]`.
    pub closed_form: Complex64,
    /// Upper bound `z^n / (1 - z)` on the neglected Boltzmann weight.
    pub tail_bound: f64,
    /// Set when `tail_bound` exceeds the requested tolerance.
    pub truncation_warning: bool,
}

/// `|<m|D(beta)|n>|^2` for `|beta|^2 = x`.
pub fn displacement_probability(m: usize, n: usize, x: f64) -> f64 {
    let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
    if x == 0.0 {
        return if m == n { 1.0 } else { 0.0 };
    }
    let k = hi - lo;
    let l = laguerre(lo, k, x);
    if l == 0.0 {
        return 0.0;
    }
    let ln = ln_factorial(lo) - ln_factorial(hi) + k as f64 * x.ln() - x + 2.0 * l.abs().ln();
    ln.exp()
}

/// `sum_{n,m < n_trunc} z^n |<m|D|n>|^2 e^{i wt (m - n)}` next to its closed form.
pub fn single_mode_kernel_oracle(
    x: f64,
    z: f64,
    omega_t: f64,
    n_trunc: usize,
    tol: f64,
) -> SingleModeValue {
    assert!((0.0..1.0).contains(&z), "z must lie in [0, 1), got {z}");
    assert!(x >= 0.0 && n_trunc >= 1);
    let mut brute = Complex64::new(0.0, 0.0);
    let mut weight = 1.0;
    for n in 0..n_trunc {
        let mut inner = Complex64::new(0.0, 0.0);
        for m in 0..n_trunc {
            let phase = omega_t * (m as f64 - n as f64);
            inner += Complex64::from_polar(displacement_probability(m, n, x), phase);
        }
        brute += weight * inner;
        weight *= z;
    }
    let partition = 1.0 / (1.0 - z);
    let occupation = z / (1.0 - z);
    let e = Complex64::from_polar(1.0, omega_t);
    let exponent = -x * ((occupation + 1.0) * (1.0 - e) + occupation * (1.0 - e.conj()));
    let closed = partition * exponent.exp();
    let tail_bound = z.powi(n_trunc as i32) / (1.0 - z);
    SingleModeValue {
        brute_force: brute,
        closed_form: closed,
        tail_bound,
        truncation_warning: tail_bound > tol,
    }
}

/// Site occupations of a tight-binding chain (hopping 1, on-site energy
/// `tilt * j`) started on the central site, from fourth-order Runge–Kutta on
/// the Schrödinger equation. Returns `P_j` at each requested time.
pub fn unitary_tight_binding(sites: usize, tilt: f64, times: &[f64], step: f64) -> Vec<Vec<f64>> {
    assert!(sites % 2 == 1, "the chain needs a central site");
    let half = (sites / 2) as f64;
    let energy: Vec<f64> = (0..sites).map(|i| tilt * (i as f64 - half)).collect();
    let mut psi = vec![Complex64::new(0.0, 0.0); sites];
    psi[sites / 2] = Complex64::new(1.0, 0.0);
    let deriv = |psi: &[Complex64]| -> Vec<Complex64> {
        // i dpsi/dt = -(psi_{j+1} + psi_{j-1}) + e_j psi_j
        (0..sites)
            .map(|j| {
                let mut h = energy[j] * psi[j];
                if j > 0 {
                    h -= psi[j - 1];
                }
                if j + 1 < sites {
                    h -= psi[j + 1];
                }
                Complex64::new(h.im, -h.re)
            })
            .collect()
    };
    let axpy = |a: &[Complex64], b: &[Complex64], c: f64| -> Vec<Complex64> {
        a.iter().zip(b).map(|(x, y)| x + y * c).collect()
    };
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &target in times {
        while t < target - 1e-12 {
            let h = step.min(target - t);
            let k1 = deriv(&psi);
            let k2 = deriv(&axpy(&psi, &k1, 0.5 * h));
            let k3 = deriv(&axpy(&psi, &k2, 0.5 * h));
            let k4 = deriv(&axpy(&psi, &k3, h));
            for j in 0..sites {
                psi[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
            }
            t += h;
        }
        out.push(psi.iter().map(|c| c.norm_sqr()).collect());
    }
    out
}

/// Exact occupation of site `j` on an infinite chain whose memory kernel is
/// the constant `w0`: every lattice mode oscillates as `cos(omega_k t)` with
/// `omega_k^2 = 4 w0 sin^2(k/2)`.
pub fn constant_memory_occupation(w0: f64, j: i64, t: f64) -> f64 {
    let rule = GaussLegendre::new(PANEL_ORDER);
    let amplitude = 2.0 * w0.sqrt() * t;
    let panels = 8 + (amplitude + j.unsigned_abs() as f64).ceil() as usize;
    rule.composite(0.0, PI, panels, |k| {
        (j as f64 * k).cos() * (amplitude * (0.5 * k).sin()).cos()
    }) / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j0;

    #[test]
    fn identity_displacement() {
        for z in [0.0, 0.3] {
            let v = single_mode_kernel_oracle(0.0, z, 0.7, 60, 1e-12);
            assert!((v.brute_force - 1.0 / (1.0 - z)).norm() < 1e-12);
            assert!((v.closed_form - 1.0 / (1.0 - z)).norm() < 1e-14);
        }
    }

    #[test]
    fn documented_points() {
        let v = single_mode_kernel_oracle(0.5, 0.3, std::f64::consts::FRAC_PI_2, 60, 1e-10);
        assert!((v.brute_force - v.closed_form).norm() < 1e-10);
        let v = single_mode_kernel_oracle(1.0, 0.0, std::f64::consts::PI, 60, 1e-10);
        assert!((v.closed_form.re - (-2f64).exp()).abs() < 1e-14);
        assert!((v.brute_force - v.closed_form).norm() < 1e-10);
        assert!(!v.truncation_warning);
        let w = single_mode_kernel_oracle(0.5, 0.9, 0.3, 10, 1e-10);
        assert!(w.truncation_warning);
    }

    #[test]
    fn displacement_rows_are_normalised() {
        for n in [0, 3, 10] {
            let total: f64 = (0..80).map(|m| displacement_probability(m, n, 0.8)).sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn mode_solution_is_a_bessel_function_at_the_origin() {
        // (1/pi) int_0^pi cos(a sin(k/2)) dk = J0(a)
        for t in [0.3, 1.0, 4.0] {
            let want = bessel_j0(2.0 * 2f64.sqrt() * t);
            assert!((constant_memory_occupation(2.0, 0, t) - want).abs() < 1e-13);
        }
        let total: f64 = (-40..=40)
            .map(|j| constant_memory_occupation(2.0, j, 3.0))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_chain_matches_bessel() {
        let p = unitary_tight_binding(61, 0.0, &[0.5, 2.0], 1e-3);
        assert!((p[0][30] - bessel_j0(1.0).powi(2)).abs() < 1e-12);
        assert!((p[1][30] - bessel_j0(4.0).powi(2)).abs() < 1e-11);
        assert!((p[1].iter().sum::<f64>() - 1.0).abs() < 1e-11);
    }
}
