//! Planar-wavefront reflection design.
//!
//! Stage one relaxes the unit-modulus phase profile to a PSD matrix X with
//! fixed diagonal (semidefinite relaxation); stage two drives X toward rank
//! one by penalizing the spectrum outside the dominant eigenvector with a
//! geometrically growing weight. A robustness variant replicates the
//! interference bound over a small grid of angles around the estimate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::channel::wrap_phase;
use crate::geometry::steering_upa;
use crate::sdp::{self, RankBlock, SdpError, SdpProblem, SdpStatus, WarmStart};
use crate::{AngleSet, C64, ReflectionConfig};

#[derive(Debug, Error)]
pub enum FarfieldError {
    #[error("surface must have at least two elements")]
    TooFewElements,
    #[error("robust grid needs at least one point")]
    EmptyGrid,
    #[error("negative tolerance or width")]
    NegativeParameter,
    #[error("penalty growth must exceed one")]
    BadGrowth,
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("relaxation stalled at accuracy {0:.3e}")]
    Unconverged(f64),
}

/// Inputs for the phase-profile design at planar-wavefront ranges.
#[derive(Debug, Clone)]
pub struct FarfieldDesignSpec {
    pub nx: usize,
    pub ny: usize,
    /// Antennas at each transmitter (M).
    pub tx_antennas: usize,
    /// Per-transmitter power (P).
    pub power: f64,
    pub target: AngleSet,
    pub interferer: Option<AngleSet>,
    /// Upper bound on the interferer-direction relaxed gain.
    pub tau: f64,
    /// Half-width of the robust angle grid, radians. 0 keeps one angle.
    pub delta: f64,
    pub grid_points: usize,
    /// Initial rank penalty ε₀.
    pub epsilon0: f64,
    /// Penalty growth factor ς per iteration.
    pub growth: f64,
    /// Stop once the residual eigenvalue bound r falls below this.
    pub r_tol: f64,
    pub max_iterations: usize,
}

impl FarfieldDesignSpec {
    pub fn new(nx: usize, ny: usize, target: AngleSet) -> FarfieldDesignSpec {
        FarfieldDesignSpec {
            nx,
            ny,
            tx_antennas: 1,
            power: 1.0,
            target,
            interferer: None,
            tau: 0.1,
            delta: 0.0,
            grid_points: 1,
            epsilon0: 4.0,
            growth: 1.5,
            r_tol: 1e-6,
            max_iterations: 30,
        }
    }

    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    /// Diagonal value of the relaxed matrix, M·P.
    pub fn diag_value(&self) -> f64 {
        self.tx_antennas as f64 * self.power
    }

    fn validate(&self) -> Result<(), FarfieldError> {
        if self.n() < 2 {
            return Err(FarfieldError::TooFewElements);
        }
        if self.grid_points == 0 {
            return Err(FarfieldError::EmptyGrid);
        }
        if self.tau < 0.0 || self.delta < 0.0 || self.r_tol < 0.0 {
            return Err(FarfieldError::NegativeParameter);
        }
        if self.growth <= 1.0 {
            return Err(FarfieldError::BadGrowth);
        }
        Ok(())
    }
}

/// One rank-penalty iteration: penalty weight, residual bound, and the
/// target-direction gain ⟨A₂, X⟩ at that iterate.
#[derive(Debug, Clone, Copy)]
pub struct IrmIteration {
    pub epsilon: f64,
    pub r: f64,
    pub objective: f64,
    pub solver_iterations: usize,
    /// Wall time of this solve. Not written to artifacts.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct IrmResult {
    /// Surface phase profile Θ_G (relative to the receive-side steering).
    pub surface_phases: ReflectionConfig,
    pub x: DMatrix<C64>,
    /// First entry is the relaxation-only solve (ε = 0, r = λ₂).
    pub history: Vec<IrmIteration>,
    /// max_k | |c_k|/√(MP) − 1 | of the extracted profile.
    pub modulus_drift: f64,
    /// λ_max / Σλ of the final X.
    pub rank_ratio: f64,
    pub converged: bool,
}

/// Steering vector α for the design convention: the relaxed profile vector c
/// enters gains as α^T c, so SDP data uses conj(α).
fn design_steering(angles: &AngleSet, nx: usize, ny: usize) -> DVector<C64> {
    let (t, p) = angles.increments();
    steering_upa(t, p, nx, ny).map(|z| z.conj())
}

/// αα^H for the quadratic gain form; trace 1.
pub fn build_outer_product(angles: &AngleSet, nx: usize, ny: usize) -> DMatrix<C64> {
    let a = design_steering(angles, nx, ny);
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj())
}

/// Evenly spaced azimuths spanning [center−delta, center+delta]. A single
/// point collapses to the center.
pub fn robust_angle_grid(center: f64, delta: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![center];
    }
    let step = 2.0 * delta / (points as f64 - 1.0);
    (0..points).map(|i| center - delta + step * i as f64).collect()
}

/// Relaxed problem: max ⟨A₂, X⟩ with fixed diagonal and the interference
/// bound replicated over the robust grid.
pub fn assemble_problem(spec: &FarfieldDesignSpec) -> Result<SdpProblem, FarfieldError> {
    spec.validate()?;
    let objective = build_outer_product(&spec.target, spec.nx, spec.ny);
    let mut problem = SdpProblem::new(objective, spec.diag_value());
    if let Some(interferer) = &spec.interferer {
        for az in robust_angle_grid(interferer.azimuth, spec.delta, spec.grid_points) {
            let angles = AngleSet { azimuth: az, ..*interferer };
            problem.inequalities.push((design_steering(&angles, spec.nx, spec.ny), spec.tau));
        }
    }
    Ok(problem)
}

const SOLVE_ZETA: f64 = 1e-7;
const ACCEPT_ACCURACY: f64 = 1e-5;

fn usable(sol: &sdp::SdpSolution) -> bool {
    sol.status == SdpStatus::Optimal
        || (sol.status == SdpStatus::MaxIterations && sol.accuracy <= ACCEPT_ACCURACY)
}

/// Solves with a warm start, falling back to a cold start if that stalls.
fn guarded_solve(
    problem: &SdpProblem,
    warm: Option<&WarmStart>,
) -> Result<sdp::SdpSolution, FarfieldError> {
    let sol = sdp::solve_with(problem, SOLVE_ZETA, warm)?;
    if usable(&sol) {
        return Ok(sol);
    }
    if warm.is_some() {
        let cold = sdp::solve_with(problem, SOLVE_ZETA, None)?;
        if usable(&cold) {
            return Ok(cold);
        }
        return Err(FarfieldError::Unconverged(cold.accuracy));
    }
    Err(FarfieldError::Unconverged(sol.accuracy))
}

/// Eigendecomposition with eigenvalues descending.
fn eig_desc(x: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let mut h = x.clone();
    let adj = h.adjoint();
    h = (h + adj) * C64::new(0.5, 0.0);
    let se = h.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

fn minor_subspace(vecs: &DMatrix<C64>) -> DMatrix<C64> {
    let n = vecs.nrows();
    let mut v = DMatrix::<C64>::zeros(n, n - 1);
    for col in 1..n {
        v.set_column(col - 1, &vecs.column(col));
    }
    v
}

fn quad_form(x: &DMatrix<C64>, a: &DVector<C64>) -> f64 {
    let xa = x * a;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        acc += a[i].conj() * xa[i];
    }
    acc.re
}

/// Extracts the phase profile from the dominant eigenpair. Ties on the
/// eigenvalue pick the vector with the largest leading component; the global
/// phase makes the largest-magnitude entry real positive.
fn extract_profile(x: &DMatrix<C64>, diag_value: f64) -> (ReflectionConfig, f64) {
    let (vals, vecs) = eig_desc(x);
    let mut idx = 0;
    for i in 1..vals.len() {
        if vals[i] >= vals[0] - 1e-12 * vals[0].abs().max(1.0)
            && vecs.column(i)[0].norm() > vecs.column(idx)[0].norm()
        {
            idx = i;
        } else if vals[i] < vals[0] - 1e-12 * vals[0].abs().max(1.0) {
            break;
        }
    }
    let lambda = vals[idx].max(0.0);
    let mut c: DVector<C64> = vecs.column(idx).into_owned() * C64::new(lambda.sqrt(), 0.0);
    let mut k_star = 0;
    for k in 1..c.len() {
        if c[k].norm() > c[k_star].norm() {
            k_star = k;
        }
    }
    let rot = C64::from_polar(1.0, -c[k_star].arg());
    c *= rot;
    let scale = diag_value.sqrt();
    let mut drift: f64 = 0.0;
    for k in 0..c.len() {
        drift = drift.max((c[k].norm() / scale - 1.0).abs());
    }
    let phases: Vec<f64> = c.iter().map(|z| z.arg()).collect();
    (ReflectionConfig::from_phases(phases), drift)
}

/// Runs the relaxation followed by rank-penalty iterations.
pub fn irm_solve(spec: &FarfieldDesignSpec) -> Result<IrmResult, FarfieldError> {
    let base = assemble_problem(spec)?;
    let target = design_steering(&spec.target, spec.nx, spec.ny);

    let t0 = std::time::Instant::now();
    let sdr = guarded_solve(&base, None)?;
    let (vals, vecs) = eig_desc(&sdr.x);
    let mut history = vec![IrmIteration {
        epsilon: 0.0,
        r: vals[1].max(0.0),
        objective: quad_form(&sdr.x, &target),
        solver_iterations: sdr.iterations,
        seconds: t0.elapsed().as_secs_f64(),
    }];

    let mut x = sdr.x;
    let mut basis = minor_subspace(&vecs);
    let mut warm = WarmStart { x: x.clone(), rank_dual: None, weight: 0.0 };
    let mut epsilon = spec.epsilon0;
    let mut converged = false;
    let mut stall = 0usize;

    for _ in 0..spec.max_iterations {
        let mut problem = base.clone();
        problem.rank_block = Some(RankBlock { basis: basis.clone(), weight: epsilon });
        let t0 = std::time::Instant::now();
        let sol = guarded_solve(&problem, Some(&warm))?;
        let r = sol.r.unwrap_or(0.0);
        history.push(IrmIteration {
            epsilon,
            r,
            objective: quad_form(&sol.x, &target),
            solver_iterations: sol.iterations,
            seconds: t0.elapsed().as_secs_f64(),
        });
        warm = WarmStart { x: sol.x.clone(), rank_dual: sol.rank_dual.clone(), weight: epsilon };
        x = sol.x;
        let (_, vecs) = eig_desc(&x);
        basis = minor_subspace(&vecs);

        if r <= spec.r_tol {
            converged = true;
            break;
        }
        let prev = history[history.len() - 2].r;
        if history.len() > 2 && r >= prev {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
        epsilon *= spec.growth;
    }

    let (vals, _) = eig_desc(&x);
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let rank_ratio = if total > 0.0 { vals[0].max(0.0) / total } else { 0.0 };
    let (surface_phases, modulus_drift) = extract_profile(&x, spec.diag_value());

    Ok(IrmResult { surface_phases, x, history, modulus_drift, rank_ratio, converged })
}

/// Composes the surface profile with the receive-side phase stripping:
/// θ_k = θ_G,k − arg α_rx,k so the cascade to the receiver adds coherently.
pub fn compose_with_rx(
    surface: &ReflectionConfig,
    rx: &AngleSet,
    nx: usize,
    ny: usize,
) -> ReflectionConfig {
    let (t, p) = rx.increments();
    let alpha_rx = steering_upa(t, p, nx, ny);
    let phases: Vec<f64> = surface
        .phases()
        .iter()
        .zip(alpha_rx.iter())
        .map(|(&th, a)| wrap_phase(th - a.arg()))
        .collect();
    ReflectionConfig::from_phases(phases)
}

/// Relaxed gain of a profile toward `angles`: |1^T Θ α(angles)|², scaled by
/// M·P to match the relaxation objective.
pub fn profile_gain(
    reflection: &ReflectionConfig,
    angles: &AngleSet,
    nx: usize,
    ny: usize,
    diag_value: f64,
) -> f64 {
    let (t, p) = angles.increments();
    let alpha = steering_upa(t, p, nx, ny);
    let mut acc = C64::new(0.0, 0.0);
    for (k, a) in alpha.iter().enumerate() {
        acc += C64::from_polar(1.0, reflection.phases()[k]) * a;
    }
    diag_value * acc.norm_sqr()
}

/// Snaps a profile onto the 2^bits lattice.
pub fn quantize_reflection(reflection: &ReflectionConfig, bits: u8) -> ReflectionConfig {
    reflection.quantized(bits)
}
