//! Special functions needed by the coupling integrals, the Green's functions and
//! the single-mode kernel oracle.
//!
//! Everything here is real-valued and double precision. Each routine switches
//! between a convergent series for small arguments and either a continued
//! fraction or a spectrally accurate trapezoid rule on an integral
//! representation for large arguments.

use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Crossover between the erf power series and the erfc continued fraction.
const ERFC_SERIES_LIMIT: f64 = 2.0;

/// Crossover between the E1 power series and its continued fraction.
const E1_SERIES_LIMIT: f64 = 1.0;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < ERFC_SERIES_LIMIT {
        1.0 - erf_series(x)
    } else {
        (-x * x).exp() * erfcx_continued_fraction(x)
    }
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < ERFC_SERIES_LIMIT {
        erf_series(x)
    } else {
        1.0 - erfc(x)
    }
}

/// Scaled complementary error function `exp(x^2) erfc(x)`, finite for all
/// `x >= 0` (it decays like `1/(sqrt(pi) x)`).
pub fn erfcx(x: f64) -> f64 {
    if x < ERFC_SERIES_LIMIT {
        (x * x).exp() * erfc(x)
    } else {
        erfcx_continued_fraction(x)
    }
}

// erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// exp(x^2) erfc(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
// evaluated with the modified Lentz algorithm.
fn erfcx_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..5000 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (PI.sqrt() * f)
}

/// Exponential integral `E1(x) = -Ei(-x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires a positive argument, got {x}");
    if x <= E1_SERIES_LIMIT {
        e1_series(x)
    } else {
        (-x).exp() * scaled_e1_continued_fraction(x)
    }
}

/// Scaled exponential integral `exp(x) E1(x)` for `x > 0`.
pub fn scaled_exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires a positive argument, got {x}");
    if x <= E1_SERIES_LIMIT {
        x.exp() * e1_series(x)
    } else {
        scaled_e1_continued_fraction(x)
    }
}

/// Exponential integral `Ei(x)` restricted to negative arguments.
pub fn exp_integral_ei_negative(x: f64) -> f64 {
    assert!(x < 0.0, "only Ei(x) with x < 0 is supported, got {x}");
    -exp_integral_e1(-x)
}

fn e1_series(x: f64) -> f64 {
    // E1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
    let mut sum = 0.0;
    let mut power = 1.0;
    for n in 1..200 {
        power *= -x / n as f64;
        let term = power / n as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

// exp(x) E1(x) = 1/(x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))
fn scaled_e1_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Modified Bessel function of the first kind, integer order `n >= 0`.
pub fn bessel_i(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x.abs();
    // leading term (x/2)^n / n!, built in log space to survive large n
    let ln_lead = n as f64 * half.ln() - ln_factorial(n as usize);
    let q = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + n as f64));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    let value = (ln_lead + sum.ln()).exp();
    if x < 0.0 && n % 2 == 1 {
        -value
    } else {
        value
    }
}

/// Modified Bessel function of the second kind, order zero, `x > 0`.
pub fn bessel_k0(x: f64) -> f64 {
    assert!(x > 0.0, "K0 requires a positive argument, got {x}");
    if x <= 2.0 {
        // K0 = -(ln(x/2) + gamma) I0(x) + sum_k (x^2/4)^k/(k!)^2 H_k
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            term *= q / (kf * kf);
            harmonic += 1.0 / kf;
            let contrib = term * harmonic;
            sum += contrib;
            if contrib < 1e-18 * sum {
                break;
            }
        }
        -((0.5 * x).ln() + EULER_GAMMA) * bessel_i(0, x) + sum
    } else {
        // K0(x) = int_0^inf exp(-x cosh t) dt; the trapezoid rule converges
        // geometrically for this entire, doubly exponentially decaying integrand.
        let h = 0.125;
        let mut sum = 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            let term = (-x * (t.cosh() - 1.0)).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
            k += 1;
        }
        h * sum * (-x).exp()
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * kf);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else if x >= 25.0 {
        bessel_j0_hankel(x)
    } else {
        // J0(x) = 1/(2 pi) int_0^{2 pi} cos(x sin t) dt; trapezoid over a full
        // period aliases only harmonics of order >= m, i.e. J_m(x) ~ 0.
        let m = 2 * (x.ceil() as usize) + 48;
        let h = 2.0 * PI / m as f64;
        let sum: f64 = (0..m).map(|k| (x * (k as f64 * h).sin()).cos()).sum();
        sum / m as f64
    }
}

// Hankel expansion J0 = sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - pi/4.
// Terms shrink until k ~ 2x, so for x >= 25 truncation is far below 1e-15.
fn bessel_j0_hankel(x: f64) -> f64 {
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if term < 1e-18 {
            break;
        }
        // A_k / x^k enters P (even k) or Q (odd k) with alternating signs
        match k % 4 {
            0 => p += term,
            1 => q -= term,
            2 => p -= term,
            _ => q += term,
        }
    }
    let chi = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Spherical Bessel function `j0(x) = sin(x)/x`.
pub fn spherical_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Generalized Laguerre polynomial `L_n^k(x)` by the three-term recurrence.
pub fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for m in 1..n {
        let mf = m as f64;
        let next = ((2.0 * mf + 1.0 + k - x) * cur - (mf + k) * prev) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}
