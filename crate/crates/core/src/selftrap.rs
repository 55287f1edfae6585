//! Gaussian variational estimate of impurity self-trapping.
//!
//! With `sigma` in units of `xi` the total energy in units of `g n0` is
//! `(m_b/m_a) [ (D/4) / sigma^2 - alpha' G(0, sigma) ]`, so whether a
//! finite-width minimum exists depends on `alpha'` alone.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coupling::g_function;
use crate::model::{Dimension, ReducedModel};
use crate::special::{erfcx, scaled_exp_integral_e1};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelfTrapError {
    #[error("width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("alpha' must be finite and non-negative, got {0}")]
    BadCoupling(f64),
    #[error("mass ratio must be positive, got {0}")]
    BadMassRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfTrapParams {
    pub dimension: Dimension,
    pub alpha_prime: f64,
    /// `m_b / m_a`.
    pub mass_ratio: f64,
}

impl SelfTrapParams {
    pub fn new(
        dimension: Dimension,
        alpha_prime: f64,
        mass_ratio: f64,
    ) -> Result<Self, SelfTrapError> {
        if !(alpha_prime >= 0.0 && alpha_prime.is_finite()) {
            return Err(SelfTrapError::BadCoupling(alpha_prime));
        }
        if !(mass_ratio > 0.0 && mass_ratio.is_finite()) {
            return Err(SelfTrapError::BadMassRatio(mass_ratio));
        }
        Ok(Self {
            dimension,
            alpha_prime,
            mass_ratio,
        })
    }

    pub fn from_model(model: &ReducedModel) -> Self {
        Self {
            dimension: model.dimension,
            alpha_prime: alpha_prime(model),
            mass_ratio: model.mass_ratio,
        }
    }
}

/// `alpha' = (|kappa|/g) (m_a/m_b) alpha` with `alpha = (|kappa|/g) (d/xi)^D`.
pub fn alpha_prime(model: &ReducedModel) -> f64 {
    let alpha = model.kappa_over_g.abs() * model.mean_spacing.powi(model.dimension.get() as i32);
    alpha_prime_from(model.kappa_over_g, 1.0 / model.mass_ratio, alpha)
}

/// `alpha'` from `kappa/g`, `m_a/m_b` and `alpha`.
pub fn alpha_prime_from(kappa_over_g: f64, impurity_to_boson_mass: f64, alpha: f64) -> f64 {
    kappa_over_g.abs() * impurity_to_boson_mass * alpha
}

/// Total energy in units of `g n0`.
pub fn variational_energy(sigma: f64, params: &SelfTrapParams) -> Result<f64, SelfTrapError> {
    if !(sigma > 0.0) {
        return Err(SelfTrapError::NonPositiveWidth(sigma));
    }
    Ok(params.mass_ratio * reduced_energy(sigma, params.alpha_prime, params.dimension))
}

fn reduced_energy(sigma: f64, alpha_prime: f64, dimension: Dimension) -> f64 {
    let g0 = g_function(0.0, sigma, dimension).expect("positive width");
    0.25 * dimension.as_f64() / (sigma * sigma) - alpha_prime * g0
}

/// `2/sqrt(pi) sum_{n >= start} (-1)^n (2n-1)!! / (2 z^2)^n`, the large-`z`
/// expansion of `2 z erfcx(z) - 2/sqrt(pi)` with its first terms dropped.
fn erfcx_series_tail(z: f64, start: u32) -> f64 {
    let u = 0.5 / (z * z);
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 1..60u32 {
        let next = -term * (2 * n - 1) as f64 * u;
        if next.abs() > term.abs() && n > start {
            break;
        }
        term = next;
        if n >= start {
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
    }
    2.0 / PI.sqrt() * sum
}

/// `e^x E1(x) - 1/x`, exactly or by its asymptotic series.
fn scaled_e1_minus_reciprocal(x: f64) -> f64 {
    if x < 40.0 {
        return scaled_exp_integral_e1(x) - 1.0 / x;
    }
    // sum_{n >= 1} (-1)^n n! / x^{n+1}
    let mut term = 1.0 / x;
    let mut sum = 0.0;
    for n in 1..60 {
        let next = -term * n as f64 / x;
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

const SERIES_FROM: f64 = 8.0;

/// `d E / d sigma` of the reduced energy.
fn reduced_slope(sigma: f64, alpha_prime: f64, dimension: Dimension) -> f64 {
    let d = dimension.as_f64();
    let z = 2f64.sqrt() * sigma;
    let kinetic = -0.5 * d / sigma.powi(3);
    // d G(0, sigma) / d sigma
    let dg = match dimension {
        Dimension::One => {
            let r = if z < SERIES_FROM {
                2.0 * z * erfcx(z) - 2.0 / PI.sqrt()
            } else {
                erfcx_series_tail(z, 1)
            };
            0.5 * 2f64.sqrt() * r
        }
        Dimension::Two => {
            let x = z * z;
            scaled_e1_minus_reciprocal(x) * 4.0 * sigma / (2.0 * PI)
        }
        Dimension::Three => {
            // -1/(sqrt(pi) z^2) - (2 z erfcx(z) - 2/sqrt(pi)), whose leading terms cancel
            let r = if z < SERIES_FROM {
                -1.0 / (PI.sqrt() * z * z) - (2.0 * z * erfcx(z) - 2.0 / PI.sqrt())
            } else {
                -erfcx_series_tail(z, 2)
            };
            2f64.sqrt() * r / PI
        }
    };
    kinetic - alpha_prime * dg
}

pub const SCAN_POINTS: usize = 400;
pub const SCAN_MIN: f64 = 0.05;
pub const SCAN_MAX: f64 = 1e3;
/// Extended ceiling for two dimensions, where the trapped width diverges at
/// threshold.
pub const SCAN_MAX_2D: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTrapResult {
    pub bound: bool,
    /// Optimal width `sigma*/xi`; present only when bound.
    pub sigma_star: Option<f64>,
    /// `E(sigma*)` in `g n0` when bound, otherwise the lowest scanned energy.
    pub energy: f64,
    pub alpha_prime: f64,
    pub dimension: u32,
    /// Bound, but some scanned width has lower energy (the trapped state is
    /// a local minimum only).
    pub metastable: bool,
    /// Set when no interior minimum exists and the lowest scanned energy sits
    /// at a scan endpoint, whose width is recorded.
    pub endpoint_minimum: Option<f64>,
    pub scan: Vec<(f64, f64)>,
}

fn scan_grid(dimension: Dimension) -> Vec<f64> {
    let hi = if dimension == Dimension::Two {
        SCAN_MAX_2D
    } else {
        SCAN_MAX
    };
    crate::analysis::log_space(SCAN_MIN, hi, SCAN_POINTS)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    // in log sigma
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut la, mut lb) = (a.ln(), b.ln());
    let mut c = lb - r * (lb - la);
    let mut d = la + r * (lb - la);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    for _ in 0..200 {
        if (lb - la).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            lb = d;
            d = c;
            fd = fc;
            c = lb - r * (lb - la);
            fc = f(c.exp());
        } else {
            la = c;
            c = d;
            fc = fd;
            d = la + r * (lb - la);
            fd = f(d.exp());
        }
    }
    a = la.exp();
    b = lb.exp();
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) < 0 <= f(hi)
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Scans `E(sigma)` on a log grid and locates the trapped width.
///
/// The impurity is bound when `E` has an interior local minimum: the slope
/// turns from negative to positive somewhere in the scan. When the scanned
/// slope never turns positive, its largest value is refined by golden
/// section before deciding, so narrow minima near threshold are not missed.
pub fn minimize_energy(params: &SelfTrapParams) -> SelfTrapResult {
    let (dim, ap) = (params.dimension, params.alpha_prime);
    let sigmas = scan_grid(dim);
    let scan: Vec<(f64, f64)> = sigmas
        .par_iter()
        .map(|&s| (s, params.mass_ratio * reduced_energy(s, ap, dim)))
        .collect();
    let slopes: Vec<f64> = sigmas.iter().map(|&s| reduced_slope(s, ap, dim)).collect();
    let slope = |s: f64| reduced_slope(s, ap, dim);

    let mut bracket = None;
    for i in 1..slopes.len() {
        if slopes[i - 1] < 0.0 && slopes[i] >= 0.0 {
            bracket = Some((sigmas[i - 1], sigmas[i]));
            break;
        }
    }
    if bracket.is_none() {
        // the slope peaks at a grid point; refine it between its neighbours
        let k = (0..slopes.len())
            .max_by(|&a, &b| slopes[a].total_cmp(&slopes[b]))
            .unwrap();
        if k > 0 && k + 1 < slopes.len() {
            let (s_peak, d_peak) = golden_max(slope, sigmas[k - 1], sigmas[k + 1]);
            if d_peak >= 0.0 {
                bracket = Some((sigmas[k - 1], s_peak));
            }
        }
    }

    let lowest =
        scan.iter().copied().fold(
            (f64::NAN, f64::INFINITY),
            |acc, p| if p.1 < acc.1 { p } else { acc },
        );
    match bracket {
        Some((lo, hi)) => {
            let sigma = bisect_root(slope, lo, hi);
            let energy = params.mass_ratio * reduced_energy(sigma, ap, dim);
            SelfTrapResult {
                bound: true,
                sigma_star: Some(sigma),
                energy,
                alpha_prime: ap,
                dimension: dim.get(),
                metastable: lowest.1 < energy,
                endpoint_minimum: None,
                scan,
            }
        }
        None => {
            let first = scan[0].0;
            let last = scan[scan.len() - 1].0;
            let endpoint = (lowest.0 == first || lowest.0 == last).then_some(lowest.0);
            SelfTrapResult {
                bound: false,
                sigma_star: None,
                energy: lowest.1,
                alpha_prime: ap,
                dimension: dim.get(),
                metastable: false,
                endpoint_minimum: endpoint,
                scan,
            }
        }
    }
}

/// Bisection result for the critical coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCoupling {
    pub dimension: u32,
    pub alpha_prime: f64,
    /// Final bracket `[unbound, bound]`.
    pub bracket: [f64; 2],
    /// Trapped width just above threshold.
    pub sigma_at_threshold: Option<f64>,
    pub note: Option<&'static str>,
}

/// Smallest `alpha'` with a trapped state. One dimension traps at any
/// coupling and returns zero.
pub fn critical_alpha(dimension: Dimension) -> CriticalCoupling {
    if dimension == Dimension::One {
        return CriticalCoupling {
            dimension: 1,
            alpha_prime: 0.0,
            bracket: [0.0, 0.0],
            sigma_at_threshold: None,
            note: Some("one dimension traps for arbitrarily small coupling"),
        };
    }
    let bound = |a: f64| {
        minimize_energy(&SelfTrapParams {
            dimension,
            alpha_prime: a,
            mass_ratio: 1.0,
        })
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while !bound(hi).bound {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if bound(mid).bound {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    CriticalCoupling {
        dimension: dimension.get(),
        alpha_prime: 0.5 * (lo + hi),
        bracket: [lo, hi],
        sigma_at_threshold: bound(hi).sigma_star,
        note: None,
    }
}

/// Large-width estimate `sqrt(2 pi) / alpha'` of the one-dimensional trapped width.
pub fn sigma_1d_asymptotic(alpha_prime: f64) -> f64 {
    (2.0 * PI).sqrt() / alpha_prime
}

/// Whether the lattice confinement outweighs self-trapping: the trapped
/// width exceeds five Wannier widths.
pub fn tight_trapping_dominates(sigma_self: f64, sigma_lattice: f64) -> bool {
    sigma_self / sigma_lattice > 5.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(d: Dimension, a: f64) -> SelfTrapParams {
        SelfTrapParams::new(d, a, 1.0).unwrap()
    }

    #[test]
    fn alpha_prime_arithmetic() {
        assert_relative_eq!(
            alpha_prime_from(2.58, 41.0 / 87.0, 0.791),
            0.96175,
            max_relative = 1e-4
        );
        assert_eq!(alpha_prime_from(0.0, 0.5, 0.7), 0.0);
        assert_relative_eq!(alpha_prime_from(-1.5, 1.0, 0.4), 0.6);
    }

    #[test]
    fn alpha_prime_from_model_is_quadratic_in_coupling() {
        let mut m = ReducedModel {
            dimension: Dimension::One,
            sigma: 0.2,
            spacing: 0.6,
            kappa_over_g: 2.0,
            mean_spacing: 0.3,
            mass_ratio: 87.0 / 41.0,
            hopping: 0.7,
        };
        let a = alpha_prime(&m);
        m.kappa_over_g = -4.0;
        assert_relative_eq!(alpha_prime(&m), 4.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn uncoupled_energy_is_kinetic_and_unbound() {
        for d in [Dimension::One, Dimension::Two, Dimension::Three] {
            let p = params(d, 0.0);
            let e = variational_energy(2.0, &p).unwrap();
            assert_relative_eq!(e, 0.25 * d.as_f64() / 4.0, max_relative = 1e-14);
            let r = minimize_energy(&p);
            assert!(!r.bound && r.sigma_star.is_none());
            assert!(r.endpoint_minimum.is_some());
        }
        assert!(variational_energy(0.0, &params(Dimension::One, 1.0)).is_err());
        assert!(SelfTrapParams::new(Dimension::One, -1.0, 1.0).is_err());
    }

    #[test]
    fn one_dimensional_large_width_expansion() {
        let a = 0.2;
        for s in [30.0, 60.0] {
            let e = variational_energy(s, &params(Dimension::One, a)).unwrap();
            let approx = 0.25 / (s * s) - a / (2.0 * PI.sqrt()) / (2f64.sqrt() * s);
            // next order is alpha' / sigma^3
            assert!((e - approx).abs() < a / s.powi(3));
        }
    }

    #[test]
    fn analytic_slopes_match_finite_differences() {
        for d in [Dimension::One, Dimension::Two, Dimension::Three] {
            for s in [0.1, 0.9, 3.0, 7.0, 20.0] {
                let h = 1e-5 * s;
                let fd =
                    (reduced_energy(s + h, 5.0, d) - reduced_energy(s - h, 5.0, d)) / (2.0 * h);
                let an = reduced_slope(s, 5.0, d);
                assert!(
                    (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                    "{d:?} {s} {fd} {an}"
                );
            }
        }
    }

    #[test]
    fn large_argument_series_join_smoothly() {
        for d in [Dimension::One, Dimension::Three] {
            let s = SERIES_FROM / 2f64.sqrt();
            let below = reduced_slope(s * (1.0 - 1e-12), 1.0, d);
            let above = reduced_slope(s * (1.0 + 1e-12), 1.0, d);
            assert!(
                (below - above).abs() < 1e-9 * below.abs(),
                "{d:?} {below} {above}"
            );
        }
        let x = 40.0;
        let direct = scaled_exp_integral_e1(x * (1.0 - 1e-12)) - 1.0 / x;
        assert!((scaled_e1_minus_reciprocal(x) - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn one_dimension_follows_asymptotic_width() {
        let r = minimize_energy(&params(Dimension::One, 0.5));
        let s = r.sigma_star.unwrap();
        assert!((s / sigma_1d_asymptotic(0.5) - 1.0).abs() < 0.05, "{s}");
        assert!(r.energy < 0.0 && !r.metastable);
        for (_, e) in &r.scan {
            assert!(r.energy <= *e + 1e-15);
        }
    }

    #[test]
    fn one_dimensional_width_decreases_with_coupling() {
        let widths: Vec<f64> = (1..=10)
            .map(|k| {
                minimize_energy(&params(Dimension::One, 0.1 * k as f64))
                    .sigma_star
                    .unwrap()
            })
            .collect();
        assert!(widths.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn one_dimensional_slope_changes_sign_once() {
        let r = minimize_energy(&params(Dimension::One, 0.5));
        let changes = r
            .scan
            .windows(3)
            .filter(|w| w[0].0 <= 100.0 && (w[1].1 - w[0].1).signum() != (w[2].1 - w[1].1).signum())
            .count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn three_dimensional_examples() {
        assert!(!minimize_energy(&params(Dimension::Three, 20.0)).bound);
        let r = minimize_energy(&params(Dimension::Three, 40.0));
        assert!(r.bound);
        assert_relative_eq!(r.sigma_star.unwrap(), 0.4034, max_relative = 2e-3);
    }

    #[test]
    fn critical_couplings() {
        let c2 = critical_alpha(Dimension::Two);
        assert!(
            (c2.alpha_prime / (2.0 * PI) - 1.0).abs() < 0.02,
            "{}",
            c2.alpha_prime
        );
        let c3 = critical_alpha(Dimension::Three);
        assert!(
            (c3.alpha_prime / 31.7 - 1.0).abs() < 0.01,
            "{}",
            c3.alpha_prime
        );
        assert!(c3.bracket[1] - c3.bracket[0] < 1e-3 * c3.alpha_prime);
        // the width moves like sqrt(alpha' - alpha'_c) here; at the quoted
        // rounded threshold it is
        let quoted = minimize_energy(&params(Dimension::Three, 31.7));
        assert!((quoted.sigma_star.unwrap() / 0.87 - 1.0).abs() < 0.02);
        assert!(quoted.metastable && quoted.energy > 0.0);
        assert!((c3.sigma_at_threshold.unwrap() / 0.89 - 1.0).abs() < 0.01);
        assert_eq!(critical_alpha(Dimension::One).alpha_prime, 0.0);
    }

    #[test]
    fn tight_trapping_flag() {
        assert!(tight_trapping_dominates(5.15, 0.2));
        assert!(!tight_trapping_dominates(0.5, 0.2));
    }

    proptest! {
        #[test]
        fn energy_scales_with_mass_ratio(s in 0.05f64..100.0, a in 0.0f64..50.0, m in 0.1f64..10.0) {
            let one = variational_energy(s, &SelfTrapParams::new(Dimension::Three, a, 1.0).unwrap()).unwrap();
            let scaled = variational_energy(s, &SelfTrapParams::new(Dimension::Three, a, m).unwrap()).unwrap();
            prop_assert!((scaled - m * one).abs() <= 1e-13 * scaled.abs().max(1e-300));
        }

        #[test]
        fn bound_state_is_a_scan_local_minimum(a in 0.05f64..3.0) {
            let r = minimize_energy(&params(Dimension::One, a));
            prop_assert!(r.bound);
            let s = r.sigma_star.unwrap();
            for (x, e) in &r.scan {
                if (x / s - 1.0).abs() < 0.5 {
                    prop_assert!(r.energy <= *e + 1e-15);
                }
            }
        }
    }
}
