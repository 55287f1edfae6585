//! The two-sided phonon memory kernel.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::GmeError;
use crate::bogoliubov::{build_phonon_grid, build_phonon_grid_at_level, GridSpec, PhononGrid};
use crate::coupling::{hopping_exponent, one_minus_lattice_factor};
use crate::model::ReducedModel;

/// Allowed relative change of `|Phi|` under grid doubling.
pub const PHI_CONVERGENCE_TOL: f64 = 5e-3;

/// Fraction of `W(0)` that defines the recorded decay time.
pub const DECAY_FRACTION: f64 = 1e-2;

/// Default kernel spacing and solver step in `hbar/J`.
pub const DEFAULT_STEP: f64 = 0.002;

/// Sampling controls for [`MemoryKernel::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    /// Sample spacing in `hbar/J`.
    pub dt: f64,
    /// Last sampled time in `hbar/J`.
    pub t_max: f64,
    /// Relative `E_p` tolerance of the phonon grid.
    pub grid_tol: f64,
    /// Compare against a grid with twice the nodes.
    pub check_convergence: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            dt: DEFAULT_STEP,
            t_max: 10.0,
            grid_tol: 1e-8,
            check_convergence: true,
        }
    }
}

/// Per-node amplitudes `2 w m (1 - <cos q.a>)` with the frequencies and
/// thermal weights needed to evaluate `Phi(s)`.
#[derive(Debug, Clone)]
pub struct PhiTerms {
    amplitude: Vec<f64>,
    omega: Vec<f64>,
    thermal: Vec<f64>,
}

impl PhiTerms {
    pub fn new(grid: &PhononGrid, model: &ReducedModel) -> Self {
        let amplitude = (0..grid.len())
            .map(|i| {
                2.0 * grid.weights[i]
                    * grid.coupling[i]
                    * one_minus_lattice_factor(grid.nodes[i] * model.spacing, model.dimension)
            })
            .collect();
        let thermal = grid.occupation.iter().map(|n| 2.0 * n + 1.0).collect();
        Self {
            amplitude,
            omega: grid.omega.clone(),
            thermal,
        }
    }

    /// `Phi(s)` at a time `s` in `hbar/g n0`.
    pub fn at(&self, s: f64) -> Complex64 {
        // (N+1)(1 - e^{iws}) + N(1 - e^{-iws}) = (2N+1)(1 - cos ws) - i sin ws
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..self.amplitude.len() {
            let (sin, cos) = (self.omega[i] * s).sin_cos();
            let one_minus_cos = if cos > 0.0 {
                sin * sin / (1.0 + cos)
            } else {
                1.0 - cos
            };
            re += self.amplitude[i] * self.thermal[i] * one_minus_cos;
            im -= self.amplitude[i] * sin;
        }
        Complex64::new(re, im)
    }

    /// `Re Phi(infinity) = 2 S`.
    pub fn asymptote(&self) -> f64 {
        self.amplitude
            .iter()
            .zip(&self.thermal)
            .map(|(a, t)| a * t)
            .sum()
    }
}

/// `Phi(s)` at a time `s` in `hbar/g n0` on the given grid.
pub fn phi_exponent(s: f64, grid: &PhononGrid, model: &ReducedModel) -> Complex64 {
    PhiTerms::new(grid, model).at(s)
}

/// `(W+, W-)` in `(J/hbar)^2` from `Phi` and the Bloch phase `omega_B s`.
pub fn memory_function(phi: Complex64, bloch_phase: f64) -> (f64, f64) {
    let damp = (-phi).exp();
    let rot = Complex64::from_polar(1.0, bloch_phase);
    (2.0 * (damp * rot).re, 2.0 * (damp * rot.conj()).re)
}

/// Sampled memory kernel at fixed temperature and tilt.
#[derive(Debug, Clone, Serialize)]
pub struct MemoryKernel {
    /// Sample spacing in `hbar/J`.
    pub dt: f64,
    /// Sample times `n dt` in `hbar/J`.
    pub times: Vec<f64>,
    #[serde(skip)]
    pub phi: Vec<Complex64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    /// `2 (J~/J)^2`, the `omega_B = 0` long-time limit.
    pub w_inf: f64,
    /// Hopping exponent `S`, with `J~/J = exp(-S)`.
    pub hopping_exponent: f64,
    /// Tilt `hbar omega_B / J`.
    pub tilt: f64,
    /// Temperature in `g n0`.
    pub temperature: f64,
    /// Time (in `hbar/J`) after which the untilted kernel stays within
    /// `1% W(0)` of `W_inf`.
    pub decay_time: Option<f64>,
    pub grid_nodes: usize,
    /// Largest relative change of `|Phi|` under grid doubling.
    pub phi_convergence: Option<f64>,
}

impl MemoryKernel {
    /// Samples the kernel on `[0, spec.t_max]`.
    pub fn build(
        model: &ReducedModel,
        temperature: f64,
        tilt: f64,
        spec: &KernelSpec,
    ) -> Result<Self, GmeError> {
        if !(spec.dt > 0.0) {
            return Err(GmeError::BadStep(spec.dt));
        }
        if !(spec.t_max >= 0.0) {
            return Err(GmeError::BadDuration(spec.t_max));
        }
        let samples = (spec.t_max / spec.dt).round() as usize + 1;
        let horizon = model.lattice_to_condensate_time(spec.t_max).max(1.0);
        let grid_spec = GridSpec {
            tol: spec.grid_tol,
            ..GridSpec::for_horizon(horizon)
        };
        let grid = build_phonon_grid(model, temperature, &grid_spec)?;
        let terms = PhiTerms::new(&grid, model);
        let times: Vec<f64> = (0..samples).map(|n| n as f64 * spec.dt).collect();
        let phi = sample_phi(&terms, &times, model);

        let phi_convergence = if spec.check_convergence {
            let finer = build_phonon_grid_at_level(model, temperature, &grid_spec, grid.level + 1)?;
            let fine_phi = sample_phi(&PhiTerms::new(&finer, model), &times, model);
            let change = phi
                .iter()
                .zip(&fine_phi)
                .filter(|(_, f)| f.norm() > 0.0)
                .map(|(c, f)| (c.norm() - f.norm()).abs() / f.norm())
                .fold(0.0, f64::max);
            if change > PHI_CONVERGENCE_TOL {
                return Err(GmeError::KernelNotConverged { change });
            }
            Some(change)
        } else {
            None
        };

        let (w_plus, w_minus): (Vec<f64>, Vec<f64>) = phi
            .iter()
            .zip(&times)
            .map(|(p, s)| memory_function(*p, tilt * s))
            .unzip();
        let s = hopping_exponent(&grid, model.spacing, model.dimension);
        let w_inf = 2.0 * (-2.0 * s).exp();
        let untilted: Vec<f64> = phi.iter().map(|p| memory_function(*p, 0.0).0).collect();
        let decay_time = decay_time(&times, &untilted, w_inf);
        Ok(Self {
            dt: spec.dt,
            times,
            phi,
            w_plus,
            w_minus,
            w_inf,
            hopping_exponent: s,
            tilt,
            temperature,
            decay_time,
            grid_nodes: grid.len(),
            phi_convergence,
        })
    }

    /// Kernel of the uncoupled lattice, `W+- = 2 cos(omega_B s)`.
    pub fn uncoupled(tilt: f64, dt: f64, t_max: f64) -> Self {
        let samples = (t_max / dt).round() as usize + 1;
        let times: Vec<f64> = (0..samples).map(|n| n as f64 * dt).collect();
        let w: Vec<f64> = times.iter().map(|s| 2.0 * (tilt * s).cos()).collect();
        Self {
            dt,
            phi: vec![Complex64::new(0.0, 0.0); samples],
            w_plus: w.clone(),
            w_minus: w,
            times,
            w_inf: 2.0,
            hopping_exponent: 0.0,
            tilt,
            temperature: 0.0,
            decay_time: None,
            grid_nodes: 0,
            phi_convergence: None,
        }
    }

    /// Kernel from explicit samples, for synthetic tests; the temperature is
    /// left unknown (NaN).
    pub fn from_samples(dt: f64, w_plus: Vec<f64>, w_minus: Vec<f64>, w_inf: f64) -> Self {
        let times: Vec<f64> = (0..w_plus.len()).map(|n| n as f64 * dt).collect();
        let decay_time = decay_time(&times, &w_plus, w_inf);
        Self {
            dt,
            phi: Vec::new(),
            times,
            w_plus,
            w_minus,
            w_inf,
            hopping_exponent: -(0.5 * w_inf).ln() / 2.0,
            tilt: 0.0,
            temperature: f64::NAN,
            decay_time,
            grid_nodes: 0,
            phi_convergence: None,
        }
    }

    /// The same bath at another tilt. `None` for kernels built from samples,
    /// which carry no `Phi`.
    pub fn with_tilt(&self, tilt: f64) -> Option<Self> {
        if self.phi.len() != self.times.len() {
            return None;
        }
        let (w_plus, w_minus): (Vec<f64>, Vec<f64>) = self
            .phi
            .iter()
            .zip(&self.times)
            .map(|(p, s)| memory_function(*p, tilt * s))
            .unzip();
        Some(Self {
            w_plus,
            w_minus,
            tilt,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stable fingerprint of the sampled values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dt.to_bits().hash(&mut h);
        for (p, m) in self.w_plus.iter().zip(&self.w_minus) {
            p.to_bits().hash(&mut h);
            m.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

// Uniform times: each node's phase advances by a fixed rotation, re-seeded
// exactly at the start of every chunk to bound round-off growth.
fn sample_phi(terms: &PhiTerms, times: &[f64], model: &ReducedModel) -> Vec<Complex64> {
    const CHUNK: usize = 128;
    if times.len() < 2 {
        return times
            .iter()
            .map(|&t| terms.at(model.lattice_to_condensate_time(t)))
            .collect();
    }
    let step = model.lattice_to_condensate_time(times[1] - times[0]);
    let chunks: Vec<Vec<Complex64>> = times
        .par_chunks(CHUNK)
        .map(|chunk| {
            let start = model.lattice_to_condensate_time(chunk[0]);
            let mut re = vec![0.0; chunk.len()];
            let mut im = vec![0.0; chunk.len()];
            for i in 0..terms.amplitude.len() {
                let w = terms.omega[i];
                let a = terms.amplitude[i];
                let at = a * terms.thermal[i];
                let rot = Complex64::from_polar(1.0, w * step);
                let mut z = Complex64::from_polar(1.0, w * start);
                for n in 0..chunk.len() {
                    re[n] += at * (1.0 - z.re);
                    im[n] -= a * z.im;
                    z *= rot;
                }
            }
            re.into_iter()
                .zip(im)
                .map(|(r, i)| Complex64::new(r, i))
                .collect()
        })
        .collect();
    let mut phi: Vec<Complex64> = chunks.into_iter().flatten().collect();
    phi[0] = terms.at(model.lattice_to_condensate_time(times[0]));
    phi
}

fn decay_time(times: &[f64], w: &[f64], w_inf: f64) -> Option<f64> {
    let threshold = DECAY_FRACTION * w.first().copied().unwrap_or(2.0);
    let last_bad = w.iter().rposition(|v| (v - w_inf).abs() >= threshold);
    match last_bad {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_scales, SystemParams};
    use approx::assert_relative_eq;

    fn transport() -> ReducedModel {
        let params = SystemParams::potassium_rubidium();
        ReducedModel::new(&params, &derive_scales(&params).unwrap())
    }

    #[test]
    fn endpoints_and_damping() {
        let model = transport();
        let ep = crate::coupling::polaronic_shift(&model).unwrap();
        let spec = KernelSpec {
            t_max: 2.0,
            check_convergence: false,
            ..KernelSpec::default()
        };
        for t in [0.0, 5.0] {
            let k = MemoryKernel::build(&model, t * ep, 0.7, &spec).unwrap();
            assert_eq!(k.w_plus[0], 2.0);
            assert_eq!(k.w_minus[0], 2.0);
            assert_eq!(k.phi[0], Complex64::new(0.0, 0.0));
            assert!(k.phi.iter().all(|p| p.re >= 0.0));
        }
        let cold = MemoryKernel::build(&model, 0.0, 0.0, &spec).unwrap();
        let warm = MemoryKernel::build(&model, 2.0 * ep, 0.0, &spec).unwrap();
        for (c, w) in cold.phi.iter().zip(&warm.phi) {
            assert!(w.re >= c.re);
        }
        assert_eq!(cold.w_plus, cold.w_minus);
    }

    #[test]
    fn uncoupled_kernel_is_cosine() {
        let mut model = transport();
        model.kappa_over_g = 0.0;
        let spec = KernelSpec {
            t_max: 3.0,
            check_convergence: false,
            ..KernelSpec::default()
        };
        let k = MemoryKernel::build(&model, 1.0, 0.8, &spec).unwrap();
        for (s, w) in k.times.iter().zip(&k.w_plus) {
            assert_relative_eq!(*w, 2.0 * (0.8 * s).cos(), epsilon = 1e-14);
        }
        let u = MemoryKernel::uncoupled(0.8, spec.dt, 3.0);
        assert_eq!(u.len(), k.len());
        assert_eq!(u.w_inf, 2.0);
    }

    #[test]
    fn retilting_matches_a_fresh_build() {
        let model = transport();
        let spec = KernelSpec {
            t_max: 1.0,
            check_convergence: false,
            ..KernelSpec::default()
        };
        let flat = MemoryKernel::build(&model, 0.3, 0.0, &spec).unwrap();
        let tilted = MemoryKernel::build(&model, 0.3, 2.5, &spec).unwrap();
        let re = flat.with_tilt(2.5).unwrap();
        assert_eq!(re.w_plus, tilted.w_plus);
        assert_eq!(re.w_minus, tilted.w_minus);
        assert_eq!(re.decay_time, tilted.decay_time);
        let synthetic = MemoryKernel::from_samples(0.1, vec![2.0; 4], vec![2.0; 4], 2.0);
        assert!(synthetic.with_tilt(1.0).is_none());
    }

    #[test]
    fn phi_tends_to_twice_the_hopping_exponent() {
        let model = transport();
        let ep = crate::coupling::polaronic_shift(&model).unwrap();
        let s = 50.0;
        let grid = build_phonon_grid(&model, 5.0 * ep, &GridSpec::for_horizon(s)).unwrap();
        let phi = phi_exponent(s, &grid, &model);
        let two_s = 2.0 * hopping_exponent(&grid, model.spacing, model.dimension);
        assert!(
            (phi.re / two_s - 1.0).abs() < 0.01,
            "{} vs {}",
            phi.re,
            two_s
        );
        assert_relative_eq!(
            PhiTerms::new(&grid, &model).asymptote(),
            two_s,
            max_relative = 1e-12
        );
    }

    #[test]
    fn recurrence_sampling_matches_direct_evaluation() {
        let model = transport();
        let grid = build_phonon_grid(&model, 3.0, &GridSpec::for_horizon(15.0)).unwrap();
        let terms = PhiTerms::new(&grid, &model);
        let times: Vec<f64> = (0..1000).map(|n| n as f64 * 0.01).collect();
        let fast = sample_phi(&terms, &times, &model);
        for (t, f) in times.iter().zip(&fast) {
            let direct = terms.at(model.lattice_to_condensate_time(*t));
            assert!((direct - f).norm() < 1e-10);
        }
    }

    #[test]
    fn memory_function_identities() {
        assert_eq!(memory_function(Complex64::new(0.0, 0.0), 0.0), (2.0, 2.0));
        let (p, m) = memory_function(Complex64::new(0.3, -0.2), 0.0);
        assert_eq!(p, m);
        let (p, m) = memory_function(Complex64::new(0.0, 0.0), 1.1);
        assert_relative_eq!(p, 2.0 * 1.1f64.cos());
        assert_relative_eq!(m, 2.0 * 1.1f64.cos());
    }

    #[test]
    fn decay_time_detection() {
        let times: Vec<f64> = (0..100).map(|n| n as f64 * 0.1).collect();
        let w: Vec<f64> = times.iter().map(|s| 1.0 + (-s * 2.0f64).exp()).collect();
        let t = decay_time(&times, &w, 1.0).unwrap();
        // exp(-2 s) < 0.02 from s = ln(50)/2
        assert!((t - 2.0).abs() < 0.11);
        let flat = vec![2.0; 10];
        assert_eq!(decay_time(&times[..10], &flat, 2.0), Some(0.0));
        let ringing: Vec<f64> = times.iter().map(|s| 2.0 * s.cos()).collect();
        assert_eq!(decay_time(&times, &ringing, 0.0), None);
    }
}
