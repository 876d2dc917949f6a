//! Spherical-wavefront reflection design.
//!
//! Element phases start from exact per-element delay compensation for the
//! target route, then coordinatewise ascent over a discrete phase lattice
//! pushes down the strongest interference hypothesis while keeping the
//! target sum coherent. Every accepted update strictly increases the
//! objective S₂ − η·max_l S₁,l, so the recorded trace is monotone in the
//! exact f64 sense.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::wrap_phase;
use crate::farfield::robust_angle_grid;
use crate::geometry::{GeometryError, Scenario, tx_position_from_azimuth};
use crate::{C64, ReflectionConfig};

#[derive(Debug, Error)]
pub enum NearfieldError {
    #[error("distance slice for {0} has wrong length")]
    LengthMismatch(&'static str),
    #[error("phase lattice needs at least two levels")]
    TooFewLevels,
    #[error("weight and wavelength must be nonnegative and positive")]
    BadParameter,
    #[error("transmitter index {0} out of range")]
    BadIndex(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Coordinate visiting order for the ascent sweeps.
#[derive(Debug, Clone, Copy)]
pub enum UpdateOrder {
    Ascending,
    /// Reshuffled before every sweep from this seed.
    Shuffled(u64),
}

#[derive(Debug, Clone)]
pub struct NearfieldDesignSpec {
    /// Element → target-transmitter distances, meters.
    pub target: Vec<f64>,
    /// Element → interferer distances, one slice per robust hypothesis.
    pub interferers: Vec<Vec<f64>>,
    /// Element → receiver distances, meters.
    pub rx: Vec<f64>,
    pub wavelength: f64,
    /// Interference weight η.
    pub eta: f64,
    /// Lattice size Δφ; candidate phases are 2π·j/Δφ.
    pub levels: u32,
    pub max_sweeps: usize,
    pub order: UpdateOrder,
    /// Common phase offset ψ applied by the initialization.
    pub psi: f64,
}

impl NearfieldDesignSpec {
    /// Wires distances from a scenario, one hypothesis at the interferer's
    /// actual position. Transmit antenna 0 is the phase reference.
    pub fn from_scenario(
        scenario: &Scenario,
        target_idx: usize,
        interferer_idx: usize,
    ) -> Result<NearfieldDesignSpec, NearfieldError> {
        let table = crate::geometry::distances(scenario)?;
        let get = |idx: usize| -> Result<Vec<f64>, NearfieldError> {
            table
                .tx_to_surface
                .get(idx)
                .and_then(|per| per.first())
                .cloned()
                .ok_or(NearfieldError::BadIndex(idx))
        };
        Ok(NearfieldDesignSpec {
            target: get(target_idx)?,
            interferers: vec![get(interferer_idx)?],
            rx: table.surface_to_rx,
            wavelength: scenario.wavelength(),
            eta: 1.0,
            levels: 256,
            max_sweeps: 50,
            order: UpdateOrder::Ascending,
            psi: 0.0,
        })
    }

    fn validate(&self) -> Result<usize, NearfieldError> {
        let n = self.target.len();
        if self.rx.len() != n {
            return Err(NearfieldError::LengthMismatch("receiver"));
        }
        for d in &self.interferers {
            if d.len() != n {
                return Err(NearfieldError::LengthMismatch("interferer"));
            }
        }
        if self.levels < 2 {
            return Err(NearfieldError::TooFewLevels);
        }
        if self.eta < 0.0 || self.wavelength <= 0.0 {
            return Err(NearfieldError::BadParameter);
        }
        Ok(n)
    }
}

/// Exact delay-compensating profile: φ_k = 2π·frac((d_t,k + d_r,k)/λ) + ψ.
/// Aligns every target-route term, so the target strength starts at N.
pub fn init_phases(target: &[f64], rx: &[f64], wavelength: f64, psi: f64) -> ReflectionConfig {
    let phases: Vec<f64> = target
        .iter()
        .zip(rx)
        .map(|(&dt, &dr)| {
            let cycles = (dt + dr) / wavelength;
            wrap_phase(TAU * cycles.fract() + psi)
        })
        .collect();
    ReflectionConfig::from_phases(phases)
}

/// |Σ_k exp(i·(φ_k − 2π(d_src,k + d_dst,k)/λ))|.
pub fn signal_strength(phases: &[f64], d_src: &[f64], d_dst: &[f64], wavelength: f64) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..phases.len() {
        let delay = TAU * (d_src[k] + d_dst[k]) / wavelength;
        acc += C64::from_polar(1.0, phases[k] - delay);
    }
    acc.norm()
}

/// S₂ − η·max_l S₁,l for the spec's geometry.
pub fn evaluate_objective(phases: &[f64], spec: &NearfieldDesignSpec) -> f64 {
    let s2 = signal_strength(phases, &spec.target, &spec.rx, spec.wavelength);
    let s1 = spec
        .interferers
        .iter()
        .map(|d| signal_strength(phases, d, &spec.rx, spec.wavelength))
        .fold(0.0f64, f64::max);
    s2 - spec.eta * s1
}

/// Interferer positions on the radius-`d_c` arc at the robust grid angles.
pub fn robust_interferer_positions(
    center_boresight: f64,
    delta: f64,
    points: usize,
    d_c: f64,
) -> Vec<Vector3<f64>> {
    robust_angle_grid(center_boresight, delta, points)
        .into_iter()
        .map(|a| tx_position_from_azimuth(a, d_c))
        .collect()
}

/// Euclidean distances from each element to a point.
pub fn distances_to(elements: &[Vector3<f64>], point: &Vector3<f64>) -> Vec<f64> {
    elements.iter().map(|e| (e - point).norm()).collect()
}

#[derive(Debug, Clone)]
pub struct AoTrace {
    /// Objective after every coordinate visit (accepted or not); exactly
    /// non-decreasing.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub updates: usize,
    /// A full sweep ran with zero accepted updates.
    pub converged: bool,
    /// Final objective recomputed from scratch.
    pub objective: f64,
}

/// Coordinatewise ascent over the phase lattice. The current phase is kept
/// unless a lattice candidate strictly improves the objective, so an
/// off-lattice initialization is preserved wherever it already wins. Ties
/// between improving candidates keep the lowest lattice index.
pub fn ao_optimize(
    spec: &NearfieldDesignSpec,
    init: &ReflectionConfig,
) -> Result<(ReflectionConfig, AoTrace), NearfieldError> {
    let n = spec.validate()?;
    if init.len() != n {
        return Err(NearfieldError::LengthMismatch("initial phases"));
    }
    let nl = spec.interferers.len();
    let mut phases: Vec<f64> = init.phases().to_vec();

    // Per-element route delays and running coherent sums.
    let delay_t: Vec<f64> = (0..n)
        .map(|k| TAU * (spec.target[k] + spec.rx[k]) / spec.wavelength)
        .collect();
    let delay_i: Vec<Vec<f64>> = spec
        .interferers
        .iter()
        .map(|d| (0..n).map(|k| TAU * (d[k] + spec.rx[k]) / spec.wavelength).collect())
        .collect();
    let mut sum_t = C64::new(0.0, 0.0);
    let mut sum_i = vec![C64::new(0.0, 0.0); nl];
    for k in 0..n {
        sum_t += C64::from_polar(1.0, phases[k] - delay_t[k]);
        for l in 0..nl {
            sum_i[l] += C64::from_polar(1.0, phases[k] - delay_i[l][k]);
        }
    }
    let objective = |t: C64, i: &[C64]| {
        t.norm() - spec.eta * i.iter().map(|z| z.norm()).fold(0.0, f64::max)
    };

    let mut rng = match spec.order {
        UpdateOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        UpdateOrder::Ascending => None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut updates = 0usize;
    let mut sweeps = 0usize;
    let mut converged = false;

    for _ in 0..spec.max_sweeps {
        sweeps += 1;
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut changed = 0usize;
        for &k in &order {
            let ct = C64::from_polar(1.0, phases[k] - delay_t[k]);
            let base_t = sum_t - ct;
            let base_i: Vec<C64> = (0..nl)
                .map(|l| sum_i[l] - C64::from_polar(1.0, phases[k] - delay_i[l][k]))
                .collect();
            let mut best = objective(sum_t, &sum_i);
            let mut best_phase = None;
            for j in 0..spec.levels {
                let cand = TAU * j as f64 / spec.levels as f64;
                let t = base_t + C64::from_polar(1.0, cand - delay_t[k]);
                let i: Vec<C64> = (0..nl)
                    .map(|l| base_i[l] + C64::from_polar(1.0, cand - delay_i[l][k]))
                    .collect();
                let val = objective(t, &i);
                if val > best {
                    best = val;
                    best_phase = Some((cand, t, i));
                }
            }
            if let Some((cand, t, i)) = best_phase {
                phases[k] = cand;
                sum_t = t;
                sum_i = i;
                changed += 1;
                updates += 1;
            }
            trace.push(best);
        }
        if changed == 0 {
            converged = true;
            break;
        }
    }

    let result = ReflectionConfig::from_phases(phases);
    let objective = evaluate_objective(result.phases(), spec);
    Ok((
        result,
        AoTrace { objective_trace: trace, sweeps, updates, converged, objective },
    ))
}
