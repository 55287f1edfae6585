//! Volterra integration of the generalised master equation and its Markov
//! (Pauli) limit on a finite chain with no-flux ends.
//!
//! Tilt convention: site energies rise with `j`, so `W-` (and `w-`) carries
//! probability from `j + 1` down to `j` and `W+` from `j - 1` up to `j`.

use serde::Serialize;

use super::kernel::MemoryKernel;
use super::GmeError;

/// Conservation tolerance that aborts a run.
pub const NORMALIZATION_ABORT: f64 = 1e-6;

/// Largest occupation allowed on either end site at the final time.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Lattice occupations over time.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Site indices, centred on zero.
    pub sites: Vec<i64>,
    /// Times in `hbar/J`.
    pub times: Vec<f64>,
    /// `probabilities[m][i]` is `P_{sites[i]}(times[m])`.
    pub probabilities: Vec<Vec<f64>>,
    pub dt: f64,
    pub scheme: &'static str,
    pub kernel_fingerprint: Option<u64>,
    /// Largest `|sum_j P_j - 1|` over the stored times.
    pub normalization_error: f64,
    /// Larger of the two end-site occupations at the final time.
    pub boundary_occupation: f64,
}

impl Trajectory {
    pub fn final_occupations(&self) -> &[f64] {
        self.probabilities
            .last()
            .expect("a trajectory has at least one time")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Every `stride`-th time, always keeping the last one.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        let keep: Vec<usize> = (0..=last)
            .filter(|m| m % stride == 0 || *m == last)
            .collect();
        Trajectory {
            times: keep.iter().map(|&m| self.times[m]).collect(),
            probabilities: keep
                .iter()
                .map(|&m| self.probabilities[m].clone())
                .collect(),
            sites: self.sites.clone(),
            dt: self.dt,
            scheme: self.scheme,
            kernel_fingerprint: self.kernel_fingerprint,
            normalization_error: self.normalization_error,
            boundary_occupation: self.boundary_occupation,
        }
    }
}

/// Lattice size and run length for a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    /// Odd number of sites centred on `j = 0`.
    pub sites: usize,
}

impl Lattice {
    pub fn new(sites: usize) -> Result<Self, GmeError> {
        if sites < 3 || sites.is_multiple_of(2) {
            return Err(GmeError::BadLattice(sites));
        }
        Ok(Self { sites })
    }

    fn indices(&self) -> Vec<i64> {
        let half = (self.sites / 2) as i64;
        (-half..=half).collect()
    }

    fn initial(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.sites];
        p[self.sites / 2] = 1.0;
        p
    }
}

// Gain-minus-loss terms paired with W- and W+ respectively:
// down_i = P_{i+1} - P_i [bond to i-1 exists], up_i = P_{i-1} - P_i [bond to i+1 exists].
fn transfer_terms(p: &[f64], down: &mut [f64], up: &mut [f64]) {
    let n = p.len();
    for i in 0..n {
        let right = i + 1 < n;
        let left = i > 0;
        down[i] = if right { p[i + 1] } else { 0.0 } - if left { p[i] } else { 0.0 };
        up[i] = if left { p[i - 1] } else { 0.0 } - if right { p[i] } else { 0.0 };
    }
}

/// Integrates the GME from a particle on site 0 up to `t_final` (in `hbar/J`)
/// with step `dt`, which must be a whole multiple of the kernel spacing.
pub fn solve_gme(
    kernel: &MemoryKernel,
    lattice: Lattice,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, GmeError> {
    if !(dt > 0.0) {
        return Err(GmeError::BadStep(dt));
    }
    if !(t_final >= 0.0) {
        return Err(GmeError::BadDuration(t_final));
    }
    let stride_f = dt / kernel.dt;
    let stride = stride_f.round() as usize;
    if stride == 0 || (stride_f - stride as f64).abs() > 1e-9 * stride_f {
        return Err(GmeError::KernelResolution {
            kernel_dt: kernel.dt,
            dt,
        });
    }
    let steps = (t_final / dt).round() as usize;
    if steps * stride >= kernel.len() {
        return Err(GmeError::KernelTooShort {
            needed: t_final,
            available: kernel.times.last().copied().unwrap_or(0.0),
        });
    }
    let kp: Vec<f64> = (0..=steps).map(|k| kernel.w_plus[k * stride]).collect();
    let km: Vec<f64> = (0..=steps).map(|k| kernel.w_minus[k * stride]).collect();

    let n = lattice.sites;
    // flat histories: row m holds the transfer terms of P(m dt)
    let mut history_p: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut history_down = vec![0.0; (steps + 1) * n];
    let mut history_up = vec![0.0; (steps + 1) * n];
    let p0 = lattice.initial();
    let mut down = vec![0.0; n];
    let mut up = vec![0.0; n];
    transfer_terms(&p0, &mut history_down[..n], &mut history_up[..n]);
    history_p.push(p0);

    // derivative at the current step; zero at t = 0 (empty memory integral)
    let mut rate = vec![0.0; n];
    let mut explicit = vec![0.0; n];
    let mut normalization_error: f64 = 0.0;

    for step in 1..=steps {
        // memory sum for time index `step`, excluding the k = 0 term that
        // depends on the unknown P(step)
        explicit.iter_mut().for_each(|v| *v = 0.0);
        for k in 1..=step {
            let w = if k == step { 0.5 } else { 1.0 };
            let a = w * km[k];
            let b = w * kp[k];
            let row = (step - k) * n;
            let d = &history_down[row..row + n];
            let u = &history_up[row..row + n];
            for ((e, x), y) in explicit.iter_mut().zip(d).zip(u) {
                *e += a * x + b * y;
            }
        }
        let prev = &history_p[step - 1];
        // trapezoid in time; fixed point on the 0.5 dt K0 G(P) term
        let next: Vec<f64> = (0..n)
            .map(|i| prev[i] + 0.5 * dt * (rate[i] + dt * explicit[i]))
            .collect();
        let mut candidate = next.clone();
        for _ in 0..50 {
            transfer_terms(&candidate, &mut down, &mut up);
            let mut change: f64 = 0.0;
            for i in 0..n {
                let implicit = 0.5 * (km[0] * down[i] + kp[0] * up[i]);
                let value = next[i] + 0.5 * dt * dt * implicit;
                change = change.max((value - candidate[i]).abs());
                candidate[i] = value;
            }
            if change < 1e-17 {
                break;
            }
        }
        transfer_terms(&candidate, &mut down, &mut up);
        for i in 0..n {
            rate[i] = dt * (explicit[i] + 0.5 * (km[0] * down[i] + kp[0] * up[i]));
        }
        let total: f64 = candidate.iter().sum();
        let drift = (total - 1.0).abs();
        normalization_error = normalization_error.max(drift);
        if drift > NORMALIZATION_ABORT {
            return Err(GmeError::Normalization {
                drift,
                time: step as f64 * dt,
            });
        }
        history_p.push(candidate);
        let row = step * n;
        history_down[row..row + n].copy_from_slice(&down);
        history_up[row..row + n].copy_from_slice(&up);
    }

    finish(
        lattice,
        history_p,
        dt,
        "product-trapezoid predictor-corrector",
        Some(kernel.fingerprint()),
        normalization_error,
    )
}

fn finish(
    lattice: Lattice,
    probabilities: Vec<Vec<f64>>,
    dt: f64,
    scheme: &'static str,
    kernel_fingerprint: Option<u64>,
    normalization_error: f64,
) -> Result<Trajectory, GmeError> {
    let last = probabilities.last().expect("initial state is stored");
    let boundary_occupation = last[0].abs().max(last[last.len() - 1].abs());
    if boundary_occupation >= BOUNDARY_TOL {
        return Err(GmeError::Boundary {
            occupation: boundary_occupation,
            sites: lattice.sites,
        });
    }
    Ok(Trajectory {
        sites: lattice.indices(),
        times: (0..probabilities.len()).map(|m| m as f64 * dt).collect(),
        probabilities,
        dt,
        scheme,
        kernel_fingerprint,
        normalization_error,
        boundary_occupation,
    })
}

/// Markovian hopping rates in `J/hbar`: `up` for `j -> j+1`, `down` for
/// `j -> j-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PauliRates {
    pub up: f64,
    pub down: f64,
}

/// Nearest-neighbour classical master equation, integrated with RK4.
pub fn solve_pauli(
    rates: PauliRates,
    lattice: Lattice,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, GmeError> {
    if !(rates.up >= 0.0 && rates.down >= 0.0) || !rates.up.is_finite() || !rates.down.is_finite() {
        return Err(GmeError::BadRates {
            up: rates.up,
            down: rates.down,
        });
    }
    if !(dt > 0.0) {
        return Err(GmeError::BadStep(dt));
    }
    let steps = (t_final / dt).round() as usize;
    let n = lattice.sites;
    let derivative = |p: &[f64]| -> Vec<f64> {
        let mut down = vec![0.0; n];
        let mut up = vec![0.0; n];
        transfer_terms(p, &mut down, &mut up);
        (0..n)
            .map(|i| rates.down * down[i] + rates.up * up[i])
            .collect()
    };
    let mut p = lattice.initial();
    let mut history = vec![p.clone()];
    let mut normalization_error: f64 = 0.0;
    for step in 1..=steps {
        let k1 = derivative(&p);
        let y: Vec<f64> = (0..n).map(|i| p[i] + 0.5 * dt * k1[i]).collect();
        let k2 = derivative(&y);
        let y: Vec<f64> = (0..n).map(|i| p[i] + 0.5 * dt * k2[i]).collect();
        let k3 = derivative(&y);
        let y: Vec<f64> = (0..n).map(|i| p[i] + dt * k3[i]).collect();
        let k4 = derivative(&y);
        for i in 0..n {
            p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let drift = (p.iter().sum::<f64>() - 1.0).abs();
        normalization_error = normalization_error.max(drift);
        if drift > NORMALIZATION_ABORT {
            return Err(GmeError::Normalization {
                drift,
                time: step as f64 * dt,
            });
        }
        history.push(p.clone());
    }
    finish(lattice, history, dt, "rk4", None, normalization_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gme::oracle::{constant_memory_occupation, unitary_tight_binding};
    use crate::special::bessel_j0;

    #[test]
    fn starts_localised() {
        let k = MemoryKernel::uncoupled(0.0, 0.01, 1.0);
        let tr = solve_gme(&k, Lattice::new(21).unwrap(), 1.0, 0.01).unwrap();
        assert_eq!(tr.probabilities[0][10], 1.0);
        assert_eq!(tr.probabilities[0].iter().sum::<f64>(), 1.0);
        assert_eq!(tr.sites[0], -10);
    }

    #[test]
    fn constant_memory_matches_mode_solution() {
        let k = MemoryKernel::uncoupled(0.0, 0.002, 4.0);
        let tr = solve_gme(&k, Lattice::new(61).unwrap(), 4.0, 0.002).unwrap();
        let p = tr.final_occupations();
        for j in 0..8 {
            let want = constant_memory_occupation(2.0, j, 4.0);
            assert!((p[30 + j as usize] - want).abs() < 2e-5, "j={j}");
        }
        for i in 0..30 {
            assert!((p[i] - p[60 - i]).abs() < 1e-9);
        }
        let half = solve_gme(&k, Lattice::new(61).unwrap(), 0.5, 0.002).unwrap();
        assert!((half.final_occupations()[30] - bessel_j0(2f64.sqrt())).abs() < 1e-5);
    }

    #[test]
    fn constant_memory_differs_from_unitary_chain_at_fourth_order() {
        // both start as 1 - 2t^2; the t^4 terms are 1 and 3/2
        let k = MemoryKernel::uncoupled(0.0, 0.002, 0.5);
        let tr = solve_gme(&k, Lattice::new(41).unwrap(), 0.5, 0.002).unwrap();
        let unitary = unitary_tight_binding(41, 0.0, &[0.5], 1e-3);
        let gap = unitary[0][20] - tr.final_occupations()[20];
        assert!((gap - (bessel_j0(1.0).powi(2) - bessel_j0(2f64.sqrt()))).abs() < 1e-5);
        assert!(gap > 0.02);
    }

    #[test]
    fn rejects_bad_input() {
        let k = MemoryKernel::uncoupled(0.0, 0.01, 1.0);
        assert!(matches!(Lattice::new(10), Err(GmeError::BadLattice(10))));
        let l = Lattice::new(21).unwrap();
        assert!(matches!(
            solve_gme(&k, l, 1.0, -0.1),
            Err(GmeError::BadStep(_))
        ));
        assert!(matches!(
            solve_gme(&k, l, 1.0, 0.015),
            Err(GmeError::KernelResolution { .. })
        ));
        assert!(matches!(
            solve_gme(&k, l, 2.0, 0.01),
            Err(GmeError::KernelTooShort { .. })
        ));
        let small = Lattice::new(5).unwrap();
        assert!(matches!(
            solve_gme(&k, small, 1.0, 0.01),
            Err(GmeError::Boundary { .. })
        ));
    }

    #[test]
    fn pauli_frozen_and_diffusive() {
        let l = Lattice::new(201).unwrap();
        let frozen = solve_pauli(PauliRates { up: 0.0, down: 0.0 }, l, 5.0, 0.01).unwrap();
        assert_eq!(frozen.final_occupations()[100], 1.0);
        let w = 0.5;
        let tr = solve_pauli(PauliRates { up: w, down: w }, l, 10.0 / w, 0.01).unwrap();
        for (t, p) in tr.times.iter().zip(&tr.probabilities).skip(1) {
            let msd: f64 = tr
                .sites
                .iter()
                .zip(p)
                .map(|(j, q)| (*j as f64).powi(2) * q)
                .sum();
            assert!((msd / (2.0 * w * t) - 1.0).abs() < 5e-3);
        }
        assert!(tr.normalization_error < 1e-12);
        assert!(solve_pauli(
            PauliRates {
                up: -1.0,
                down: 0.0
            },
            l,
            1.0,
            0.1
        )
        .is_err());
    }

    #[test]
    fn subsample_keeps_endpoints() {
        let k = MemoryKernel::uncoupled(0.0, 0.01, 1.0);
        let tr = solve_gme(&k, Lattice::new(21).unwrap(), 1.0, 0.01).unwrap();
        let s = tr.subsample(30);
        assert_eq!(s.times.len(), 5);
        assert_eq!(s.times.last(), tr.times.last());
        assert_eq!(s.final_occupations(), tr.final_occupations());
    }
}
