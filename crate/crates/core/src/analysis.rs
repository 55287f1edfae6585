//! Observables extracted from trajectories: mean-square displacement, the
//! transport exponent, drift velocities and Esaki–Tsu fits.

use serde::Serialize;
use thiserror::Error;

use crate::gme::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("fit window holds {0} usable points, at least {1} are needed")]
    TooFewPoints(usize, usize),
    #[error("drift time {0} hbar/J is not on the trajectory time grid")]
    TimeNotSampled(f64),
    #[error("drift time must be positive, got {0}")]
    BadDriftTime(f64),
    #[error("tilt scan peaks at its edge (index {0}); both sides of the maximum are needed")]
    PeakAtEdge(usize),
    #[error("tilt and velocity lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("Esaki-Tsu fit did not converge; residual trace {0:?}")]
    NotConverged(Vec<f64>),
}

/// Mean-square displacement `sum_l l^2 P_l(t)` in site units.
pub fn msd(trajectory: &Trajectory) -> Vec<f64> {
    trajectory
        .probabilities
        .iter()
        .map(|p| {
            trajectory
                .sites
                .iter()
                .zip(p)
                .map(|(j, q)| (*j as f64).powi(2) * q)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    PowerLaw,
    EsakiTsu,
}

/// Parameters are `(A, alpha)` for a power law and `(tau, gamma)` for an
/// Esaki–Tsu fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub parameters: [f64; 2],
    pub standard_errors: [f64; 2],
    /// Power law: L2 norm of the log-space residuals. Esaki–Tsu: RMS residual
    /// in velocity units.
    pub residual_norm: f64,
    pub window: [f64; 2],
    /// Power law with `alpha` outside `[0.5, 2.5]`.
    pub out_of_model: bool,
}

impl FitResult {
    pub fn amplitude(&self) -> f64 {
        self.parameters[0]
    }

    pub fn exponent(&self) -> f64 {
        self.parameters[1]
    }

    pub fn tau(&self) -> f64 {
        self.parameters[0]
    }

    pub fn gamma(&self) -> f64 {
        self.parameters[1]
    }
}

pub const MIN_FIT_POINTS: usize = 8;

/// Least-squares line through `(ln t, ln y)` for `t` in `window`.
pub fn fit_power_law(
    times: &[f64],
    values: &[f64],
    window: [f64; 2],
) -> Result<FitResult, AnalysisError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, y)| **t > 0.0 && **y > 0.0 && **t >= window[0] && **t <= window[1])
        .map(|(t, y)| (t.ln(), y.ln()))
        .unzip();
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints(n, MIN_FIT_POINTS));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let ln_a = my - alpha * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - ln_a - alpha * x).powi(2))
        .sum();
    let s2 = ssr / (nf - 2.0);
    let se_alpha = (s2 / sxx).sqrt();
    let se_ln_a = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let amplitude = ln_a.exp();
    Ok(FitResult {
        kind: FitKind::PowerLaw,
        parameters: [amplitude, alpha],
        standard_errors: [amplitude * se_ln_a, se_alpha],
        residual_norm: ssr.sqrt(),
        window,
        out_of_model: !(0.5..=2.5).contains(&alpha),
    })
}

/// Fits over the whole run and over its second half.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawPair {
    pub full: FitResult,
    pub late: FitResult,
}

pub fn fit_power_law_windows(times: &[f64], values: &[f64]) -> Result<PowerLawPair, AnalysisError> {
    let end = times.last().copied().unwrap_or(0.0);
    Ok(PowerLawPair {
        full: fit_power_law(times, values, [0.0, end])?,
        late: fit_power_law(times, values, [0.5 * end, end])?,
    })
}

/// Drift velocity in units of `J a / hbar` at time `t_d` (in `hbar/J`).
/// Site energies rise with `j`, so drift runs toward negative `j`; the
/// returned value is `-<j>/t_d`, positive for downhill motion.
pub fn drift_velocity(trajectory: &Trajectory, t_d: f64) -> Result<f64, AnalysisError> {
    if !(t_d > 0.0) {
        return Err(AnalysisError::BadDriftTime(t_d));
    }
    let idx = trajectory
        .times
        .iter()
        .position(|t| (t - t_d).abs() <= 0.5 * trajectory.dt.max(1e-12) + 1e-12 * t_d)
        .ok_or(AnalysisError::TimeNotSampled(t_d))?;
    let p = &trajectory.probabilities[idx];
    let mean: f64 = trajectory
        .sites
        .iter()
        .zip(p)
        .map(|(j, q)| *j as f64 * q)
        .sum();
    Ok(-mean / trajectory.times[idx])
}

/// `v / v0 = 2 gamma (J~/J) x / (1 + x^2)` with `x = omega_B tau (J / g n0)`;
/// `omega_B` in `J/hbar`, `tau` in `hbar/g n0`.
pub fn esaki_tsu(omega_b: f64, tau: f64, gamma: f64, jt_over_j: f64, hopping: f64) -> f64 {
    let x = omega_b * tau * hopping;
    2.0 * gamma * jt_over_j * x / (1.0 + x * x)
}

const TAU_GRID: usize = 401;
const MAX_ITERATIONS: usize = 200;

/// Two-parameter least squares of the Esaki–Tsu form: log-grid search over
/// `tau` in `[1e-2, 1e2]` with `gamma` solved linearly, then damped
/// Gauss–Newton refinement.
pub fn fit_esaki_tsu(
    omega_b: &[f64],
    velocity: &[f64],
    jt_over_j: f64,
    hopping: f64,
) -> Result<FitResult, AnalysisError> {
    if omega_b.len() != velocity.len() {
        return Err(AnalysisError::LengthMismatch(omega_b.len(), velocity.len()));
    }
    let n = omega_b.len();
    if n < 6 {
        return Err(AnalysisError::TooFewPoints(n, 6));
    }
    let peak = velocity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if peak == 0 || peak == n - 1 {
        return Err(AnalysisError::PeakAtEdge(peak));
    }
    let shape = |tau: f64| -> Vec<f64> {
        omega_b
            .iter()
            .map(|&w| esaki_tsu(w, tau, 1.0, jt_over_j, hopping))
            .collect()
    };
    let ssr = |tau: f64, gamma: f64| -> f64 {
        shape(tau)
            .iter()
            .zip(velocity)
            .map(|(f, v)| (v - gamma * f).powi(2))
            .sum()
    };
    let linear_gamma = |tau: f64| -> f64 {
        let f = shape(tau);
        let num: f64 = f.iter().zip(velocity).map(|(a, b)| a * b).sum();
        let den: f64 = f.iter().map(|a| a * a).sum();
        num / den
    };

    let mut best = (f64::INFINITY, 1.0, 0.0);
    for k in 0..TAU_GRID {
        let tau = 10f64.powf(-2.0 + 4.0 * k as f64 / (TAU_GRID - 1) as f64);
        let gamma = linear_gamma(tau);
        let r = ssr(tau, gamma);
        if r < best.0 {
            best = (r, tau, gamma);
        }
    }

    // Levenberg-damped Gauss-Newton in (ln tau, gamma)
    let (mut cost, mut tau, mut gamma) = best;
    let mut lambda = 1e-3;
    let mut trace = vec![cost];
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let f = shape(tau);
        // d/d ln tau of x/(1+x^2) is x (1 - x^2)/(1 + x^2)^2
        let dshape: Vec<f64> = omega_b
            .iter()
            .map(|&w| {
                let x = w * tau * hopping;
                2.0 * jt_over_j * x * (1.0 - x * x) / (1.0 + x * x).powi(2)
            })
            .collect();
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let r = velocity[i] - gamma * f[i];
            let j1 = gamma * dshape[i];
            let j2 = f[i];
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let b11 = a11 * (1.0 + lambda);
            let b22 = a22 * (1.0 + lambda);
            let det = b11 * b22 - a12 * a12;
            let d1 = (g1 * b22 - g2 * a12) / det;
            let d2 = (b11 * g2 - a12 * g1) / det;
            let new_tau = tau * d1.exp();
            let new_gamma = gamma + d2;
            let new_cost = ssr(new_tau, new_gamma);
            if new_cost <= cost {
                let small = d1.abs() < 1e-13 && d2.abs() < 1e-13 * gamma.abs().max(1e-300);
                tau = new_tau;
                gamma = new_gamma;
                let settled = cost - new_cost <= 1e-15 * cost;
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if small || settled {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        trace.push(cost);
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged || !(tau > 0.0 && gamma > 0.0) {
        return Err(AnalysisError::NotConverged(trace));
    }

    // covariance from the Gauss-Newton normal matrix at the optimum
    let f = shape(tau);
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let x = omega_b[i] * tau * hopping;
        let j1 = gamma * 2.0 * jt_over_j * x * (1.0 - x * x) / (1.0 + x * x).powi(2) / tau;
        let j2 = f[i];
        a11 += j1 * j1;
        a12 += j1 * j2;
        a22 += j2 * j2;
    }
    let det = a11 * a22 - a12 * a12;
    let s2 = cost / (n as f64 - 2.0);
    let se_tau = (s2 * a22 / det).abs().sqrt();
    let se_gamma = (s2 * a11 / det).abs().sqrt();
    let lo = omega_b.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omega_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        kind: FitKind::EsakiTsu,
        parameters: [tau, gamma],
        standard_errors: [se_tau, se_gamma],
        residual_norm: (cost / n as f64).sqrt(),
        window: [lo, hi],
        out_of_model: false,
    })
}

/// `n` values log-spaced over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gme::{solve_gme, Lattice, MemoryKernel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn trajectory(sites: Vec<i64>, probabilities: Vec<Vec<f64>>, dt: f64) -> Trajectory {
        Trajectory {
            times: (0..probabilities.len()).map(|m| m as f64 * dt).collect(),
            sites,
            probabilities,
            dt,
            scheme: "test",
            kernel_fingerprint: None,
            normalization_error: 0.0,
            boundary_occupation: 0.0,
        }
    }

    #[test]
    fn msd_simple_cases() {
        let t = trajectory(
            vec![-1, 0, 1],
            vec![vec![0.0, 1.0, 0.0], vec![1.0 / 3.0; 3]],
            1.0,
        );
        let m = msd(&t);
        assert_eq!(m[0], 0.0);
        assert_relative_eq!(m[1], 2.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn msd_of_constant_memory_run_is_ballistic() {
        let k = MemoryKernel::uncoupled(0.0, 0.002, 3.0);
        let tr = solve_gme(&k, Lattice::new(61).unwrap(), 3.0, 0.002).unwrap();
        let m = msd(&tr);
        for (t, v) in tr.times.iter().zip(&m).skip(1) {
            assert!((v - 2.0 * t * t).abs() < 1e-4 * (1.0 + t * t));
        }
    }

    #[test]
    fn power_law_exact_data() {
        let t: Vec<f64> = (1..=40).map(|k| 0.25 * k as f64).collect();
        let sq: Vec<f64> = t.iter().map(|x| x * x).collect();
        let fit = fit_power_law(&t, &sq, [0.0, 10.0]).unwrap();
        assert!((fit.exponent() - 2.0).abs() < 1e-10 && (fit.amplitude() - 1.0).abs() < 1e-10);
        let lin: Vec<f64> = t.iter().map(|x| 3.0 * x).collect();
        let fit = fit_power_law(&t, &lin, [0.0, 10.0]).unwrap();
        assert!((fit.exponent() - 1.0).abs() < 1e-10 && (fit.amplitude() - 3.0).abs() < 1e-10);
        assert!(!fit.out_of_model);
        let steep: Vec<f64> = t.iter().map(|x| x.powi(3)).collect();
        assert!(fit_power_law(&t, &steep, [0.0, 10.0]).unwrap().out_of_model);
        assert_eq!(
            fit_power_law(&t, &sq, [9.0, 10.0]),
            Err(AnalysisError::TooFewPoints(5, MIN_FIT_POINTS))
        );
        let pair = fit_power_law_windows(&t, &sq).unwrap();
        assert_eq!(pair.late.window, [5.0, 10.0]);
    }

    #[test]
    fn drift_velocity_sign_and_sampling() {
        let t = trajectory(
            vec![-1, 0, 1],
            vec![vec![0.0, 1.0, 0.0], vec![0.6, 0.3, 0.1]],
            0.5,
        );
        assert_relative_eq!(drift_velocity(&t, 0.5).unwrap(), 1.0);
        assert!(matches!(
            drift_velocity(&t, 0.8),
            Err(AnalysisError::TimeNotSampled(_))
        ));
        assert!(drift_velocity(&t, 0.0).is_err());
    }

    #[test]
    fn untilted_run_has_no_drift() {
        let k = MemoryKernel::uncoupled(0.0, 0.002, 2.0);
        let tr = solve_gme(&k, Lattice::new(41).unwrap(), 2.0, 0.002).unwrap();
        assert!(drift_velocity(&tr, 2.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn esaki_tsu_synthetic_recovery() {
        let (jt, r) = (0.47, 0.699);
        let w = log_space(0.1, 20.0, 15);
        let v: Vec<f64> = w.iter().map(|&x| esaki_tsu(x, 2.0, 0.4, jt, r)).collect();
        let fit = fit_esaki_tsu(&w, &v, jt, r).unwrap();
        assert!((fit.tau() - 2.0).abs() < 1e-8 && (fit.gamma() - 0.4).abs() < 1e-8);
        assert!(fit.residual_norm < 1e-10);
        // the fitted curve peaks at gamma J~/J where omega_B tau = 1
        let peak = esaki_tsu(1.0 / (fit.tau() * r), fit.tau(), fit.gamma(), jt, r);
        assert_relative_eq!(peak, fit.gamma() * jt, max_relative = 1e-12);
        // ohmic slope 2 gamma (J~/J) tau r at small tilt
        let h = 1e-7;
        let slope = esaki_tsu(h, fit.tau(), fit.gamma(), jt, r) / h;
        assert_relative_eq!(
            slope,
            2.0 * fit.gamma() * jt * fit.tau() * r,
            max_relative = 1e-9
        );
    }

    #[test]
    fn esaki_tsu_rejects_one_sided_scans() {
        let w = log_space(0.1, 0.5, 8);
        let v: Vec<f64> = w
            .iter()
            .map(|&x| esaki_tsu(x, 2.0, 0.4, 0.5, 0.7))
            .collect();
        assert_eq!(
            fit_esaki_tsu(&w, &v, 0.5, 0.7),
            Err(AnalysisError::PeakAtEdge(7))
        );
        assert!(fit_esaki_tsu(&w[..4], &v[..4], 0.5, 0.7).is_err());
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(0.1, 20.0, 15);
        assert_eq!(v.len(), 15);
        assert_relative_eq!(v[0], 0.1, max_relative = 1e-14);
        assert_relative_eq!(v[14], 20.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn power_law_recovery(alpha in prop::sample::select(vec![0.7, 1.0, 1.5, 2.0]), a in 0.1f64..10.0) {
            let t: Vec<f64> = (1..=30).map(|k| 0.3 * k as f64).collect();
            let y: Vec<f64> = t.iter().map(|x| a * x.powf(alpha)).collect();
            let fit = fit_power_law(&t, &y, [0.0, 100.0]).unwrap();
            prop_assert!((fit.exponent() - alpha).abs() < 1e-8);
            prop_assert!((fit.amplitude() / a - 1.0).abs() < 1e-8);
        }

        #[test]
        fn esaki_tsu_scale_consistency(c in 0.2f64..5.0, tau in 0.3f64..3.0) {
            let w = log_space(0.1, 20.0, 15);
            let v: Vec<f64> = w.iter().map(|&x| esaki_tsu(x, tau, 0.3, 0.6, 0.7) * (1.0 + 0.05 * (3.0 * x).sin())).collect();
            let base = fit_esaki_tsu(&w, &v, 0.6, 0.7).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let fit = fit_esaki_tsu(&w, &scaled, 0.6, 0.7).unwrap();
            prop_assert!((fit.tau() / base.tau() - 1.0).abs() < 1e-6);
            prop_assert!((fit.gamma() / (c * base.gamma()) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn msd_reflection_invariant(p in prop::collection::vec(0.0f64..1.0, 7)) {
            let sites: Vec<i64> = (-3..=3).collect();
            let a = trajectory(sites.clone(), vec![p.clone()], 1.0);
            let mut r = p.clone();
            r.reverse();
            let b = trajectory(sites, vec![r], 1.0);
            prop_assert!((msd(&a)[0] - msd(&b)[0]).abs() < 1e-12);
        }
    }
}
