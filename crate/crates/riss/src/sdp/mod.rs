//! Hermitian semidefinite programs with fixed diagonal, rank-one trace
//! inequalities, and an optional coupled eigenvalue-bound block, solved by a
//! primal-dual interior-point method.
//!
//! Canonical form (maximization):
//!
//! ```text
//! max  ⟨C0, X⟩ − ε·r
//! s.t. X_kk = p                        k = 0..N
//!      ⟨a_l a_l^H, X⟩ ≤ τ_l            l = 0..L
//!      r·I − V^H X V ⪰ 0               (optional, V orthonormal N×(N−1))
//!      X ⪰ 0
//! ```

mod solver;
pub mod io;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::C64;

pub use solver::WarmStart;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("objective must be {0}×{0}")]
    ObjectiveShape(usize),
    #[error("inequality vector {0} has wrong length")]
    InequalityShape(usize),
    #[error("eigenvalue-bound basis must be {n}×{m} with orthonormal columns")]
    BasisShape { n: usize, m: usize },
    #[error("diagonal value must be positive")]
    NonpositiveDiagonal,
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optional coupled block r·I − V^H X V ⪰ 0 with objective weight ε on r.
#[derive(Debug, Clone)]
pub struct RankBlock {
    /// N×(N−1), orthonormal columns.
    pub basis: DMatrix<C64>,
    /// Penalty ε multiplying r in the objective.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    /// Hermitian objective matrix C0; the solver maximizes ⟨C0, X⟩ (− ε·r).
    pub objective: DMatrix<C64>,
    /// Common diagonal value p.
    pub diag_value: f64,
    /// Rank-one trace bounds (a_l, τ_l): ⟨a_l a_l^H, X⟩ ≤ τ_l.
    pub inequalities: Vec<(DVector<C64>, f64)>,
    pub rank_block: Option<RankBlock>,
}

impl SdpProblem {
    pub fn new(objective: DMatrix<C64>, diag_value: f64) -> SdpProblem {
        let dim = objective.nrows();
        SdpProblem { dim, objective, diag_value, inequalities: Vec::new(), rank_block: None }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let n = self.dim;
        if self.objective.nrows() != n || self.objective.ncols() != n {
            return Err(SdpError::ObjectiveShape(n));
        }
        if self.diag_value <= 0.0 {
            return Err(SdpError::NonpositiveDiagonal);
        }
        for (l, (a, _)) in self.inequalities.iter().enumerate() {
            if a.len() != n {
                return Err(SdpError::InequalityShape(l));
            }
        }
        if let Some(rb) = &self.rank_block {
            if rb.basis.nrows() != n || rb.basis.ncols() != n - 1 {
                return Err(SdpError::BasisShape { n, m: n - 1 });
            }
            let gram = rb.basis.adjoint() * &rb.basis;
            let eye = DMatrix::<C64>::identity(n - 1, n - 1);
            if (&gram - &eye).norm() > 1e-10 {
                return Err(SdpError::BasisShape { n, m: n - 1 });
            }
        }
        Ok(())
    }

    /// Forces the objective exactly Hermitian.
    pub fn hermitized(mut self) -> SdpProblem {
        let adj = self.objective.adjoint();
        self.objective = (&self.objective + &adj) * C64::new(0.5, 0.0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<C64>,
    /// Eigenvalue bound r when the coupled block is present.
    pub r: Option<f64>,
    /// Primal objective ⟨C0, X⟩ − ε·r.
    pub objective: f64,
    /// Dual bound p·Σy + Σ w_l τ_l.
    pub dual_objective: f64,
    pub status: SdpStatus,
    /// Max of relative duality gap and primal/dual residual norms at exit.
    pub accuracy: f64,
    pub iterations: usize,
    /// Dual variable of the coupled block, reusable as a warm start.
    pub rank_dual: Option<DMatrix<C64>>,
}

/// Solves to relative accuracy ζ from a cold start.
pub fn solve(problem: &SdpProblem, zeta: f64) -> Result<SdpSolution, SdpError> {
    solver::solve(problem, zeta, None)
}

/// Solves with an optional warm start (previous X and coupled-block dual).
pub fn solve_with(
    problem: &SdpProblem,
    zeta: f64,
    warm: Option<&WarmStart>,
) -> Result<SdpSolution, SdpError> {
    solver::solve(problem, zeta, warm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ZETA: f64 = 1e-7;

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<C64> {
        let mut v = DVector::from_fn(n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let norm = v.norm();
        v /= C64::new(norm, 0.0);
        v
    }

    fn outer(a: &DVector<C64>) -> DMatrix<C64> {
        let n = a.len();
        DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj())
    }

    /// With only the diagonal constraint the optimum of max ⟨αα^H, X⟩ is
    /// p·(Σ_k |α_k|)², attained by the rank-one phase-aligned X.
    fn closed_form(a: &DVector<C64>, p: f64) -> f64 {
        let s: f64 = a.iter().map(|v| v.norm()).sum();
        p * s * s
    }

    #[test]
    fn diag_only_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &n in &[2usize, 3, 6, 10] {
            let a = random_unit(&mut rng, n);
            let p = 1.0 + rng.random_range(0.0..2.0);
            let problem = SdpProblem::new(outer(&a), p);
            let sol = solve(&problem, ZETA).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "n={n}");
            let want = closed_form(&a, p);
            assert!(
                (sol.objective - want).abs() <= 1e-5 * (1.0 + want),
                "n={n}: got {} want {}",
                sol.objective,
                want
            );
            let trace = sol.x.trace().re;
            assert!((trace - p * n as f64).abs() < 1e-5 * (1.0 + p * n as f64));
        }
    }

    #[test]
    fn uniform_pair_objective_is_two() {
        let a = DVector::from_vec(vec![
            C64::new(1.0 / f64::sqrt(2.0), 0.0),
            C64::new(1.0 / f64::sqrt(2.0), 0.0),
        ]);
        let sol = solve(&SdpProblem::new(outer(&a), 1.0), ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6, "got {}", sol.objective);
    }

    #[test]
    fn self_conflicting_bound_drives_objective_to_zero() {
        // max ⟨A,X⟩ subject to ⟨A,X⟩ ≤ 0: feasible but with no strict
        // interior, so only a loose tolerance is meaningful.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_unit(&mut rng, 3);
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((a.clone(), 0.0));
        let sol = solve(&problem, ZETA).unwrap();
        assert!(sol.objective.abs() < 1e-3, "got {}", sol.objective);
    }

    #[test]
    fn unattainable_bound_reported_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = random_unit(&mut rng, 3);
        let b = random_unit(&mut rng, 3);
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        // ⟨b b^H, X⟩ ≥ 0 for X ⪰ 0, so τ = −1 admits no feasible point.
        problem.inequalities.push((b, -1.0));
        let sol = solve(&problem, ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn optimum_dominates_two_bit_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let n = 4;
        let a = random_unit(&mut rng, n);
        let b = random_unit(&mut rng, n);
        let tau = 1.0;
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((b.clone(), tau));
        let sol = solve(&problem, ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);

        // Exhaustive 2-bit search over 4^4 phase profiles, keeping only
        // profiles that satisfy the trace bound.
        let mut best = f64::NEG_INFINITY;
        for idx in 0..(4usize.pow(n as u32)) {
            let c = DVector::from_fn(n, |k, _| {
                let level = (idx >> (2 * k)) & 3;
                C64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * level as f64)
            });
            let gain = |v: &DVector<C64>| {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    acc += v[i].conj() * c[i];
                }
                acc.norm_sqr()
            };
            if gain(&b) <= tau {
                best = best.max(gain(&a));
            }
        }
        assert!(best.is_finite());
        assert!(
            sol.objective >= best - 1e-6,
            "solver {} below exhaustive lattice {}",
            sol.objective,
            best
        );
    }

    #[test]
    fn weak_duality_and_complementarity_at_exit() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = 6;
        let a = random_unit(&mut rng, n);
        let b = random_unit(&mut rng, n);
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((b, 0.5));
        let sol = solve(&problem, ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let scale = 1.0 + sol.objective.abs() + sol.dual_objective.abs();
        // Dual upper-bounds the primal for the max form.
        assert!(sol.dual_objective >= sol.objective - 1e-5 * scale);
        assert!((sol.dual_objective - sol.objective).abs() <= 10.0 * ZETA * scale);
        assert!(sol.accuracy <= ZETA);
    }

    #[test]
    fn binding_bound_caps_objective_at_tau() {
        // Bounding the objective's own direction makes the optimum exactly τ.
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let n = 8;
        let a = random_unit(&mut rng, n);
        let tau = 0.1;
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((a.clone(), tau));
        let sol = solve(&problem, ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - tau).abs() < 1e-5, "got {}", sol.objective);
        let xa = &sol.x * &a;
        let mut q = C64::new(0.0, 0.0);
        for i in 0..n {
            q += a[i].conj() * xa[i];
        }
        assert!(q.re <= tau + 1e-6, "bound violated: {}", q.re);
        // X stays PSD: Cholesky on X + tiny ridge succeeds.
        let ridge = DMatrix::<C64>::identity(n, n) * C64::new(1e-9, 0.0);
        assert!((sol.x.clone() + ridge).cholesky().is_some());
    }

    #[test]
    fn diagonal_unitary_reparameterization_preserves_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 5;
        let a = random_unit(&mut rng, n);
        let b = random_unit(&mut rng, n);
        let mut base = SdpProblem::new(outer(&a), 1.0);
        base.inequalities.push((b.clone(), 0.4));

        let d = DVector::from_fn(n, |_, _| {
            C64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        });
        let da = DVector::from_fn(n, |k, _| d[k] * a[k]);
        let db = DVector::from_fn(n, |k, _| d[k] * b[k]);
        let mut rotated = SdpProblem::new(outer(&da), 1.0);
        rotated.inequalities.push((db, 0.4));

        let s1 = solve(&base, ZETA).unwrap();
        let s2 = solve(&rotated, ZETA).unwrap();
        let scale = 1.0 + s1.objective.abs();
        assert!(
            (s1.objective - s2.objective).abs() <= 2.0 * ZETA * scale * 10.0,
            "{} vs {}",
            s1.objective,
            s2.objective
        );
    }

    #[test]
    fn eigenvalue_bound_block_flattens_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let n = 6;
        let a = random_unit(&mut rng, n);
        let plain = solve(&SdpProblem::new(outer(&a), 1.0), ZETA).unwrap();

        // Basis = eigenvectors away from the dominant one.
        let mut h = plain.x.clone();
        let adj = h.adjoint();
        h = (h + adj) * C64::new(0.5, 0.0);
        let se = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
        let mut basis = DMatrix::<C64>::zeros(n, n - 1);
        for (col, &i) in order[1..].iter().enumerate() {
            basis.set_column(col, &se.eigenvectors.column(i));
        }

        let eps = 4.0;
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.rank_block = Some(RankBlock { basis: basis.clone(), weight: eps });
        let sol = solve(&problem, ZETA).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let r = sol.r.unwrap();
        assert!(r >= -1e-8);

        // r bounds the compressed spectrum from above.
        let compressed = basis.adjoint() * &sol.x * &basis;
        let se2 = compressed.symmetric_eigen();
        let max_ev = se2.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max_ev <= r + 1e-6, "max {} vs r {}", max_ev, r);

        // The block dual carries trace ε.
        let zb = sol.rank_dual.as_ref().unwrap();
        assert!((zb.trace().re - eps).abs() < 1e-4 * eps);

        // Penalizing the subspace cannot raise the objective part ⟨C0,X⟩.
        let gain = |x: &DMatrix<C64>| {
            let xa = x * &a;
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                acc += a[i].conj() * xa[i];
            }
            acc.re
        };
        assert!(gain(&sol.x) <= gain(&plain.x) + 1e-6);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let n = 5;
        let a = random_unit(&mut rng, n);
        let b = random_unit(&mut rng, n);
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((b, 0.5));
        let cold = solve(&problem, ZETA).unwrap();
        let warm = WarmStart { x: cold.x.clone(), rank_dual: None, weight: 0.0 };
        let rerun = solve_with(&problem, ZETA, Some(&warm)).unwrap();
        assert_eq!(rerun.status, SdpStatus::Optimal);
        assert!((rerun.objective - cold.objective).abs() < 1e-5 * (1.0 + cold.objective.abs()));
        assert!(rerun.iterations <= cold.iterations);
    }

    #[test]
    fn dump_load_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let a = random_unit(&mut rng, 4);
        let sol = solve(&SdpProblem::new(outer(&a), 1.0), ZETA).unwrap();
        let text = io::dump_solution(&sol);
        let back = io::load_solution(&text).unwrap();
        assert_eq!(back.status, sol.status);
        assert_eq!(back.iterations, sol.iterations);
        assert_eq!(back.objective.to_bits(), sol.objective.to_bits());
        assert_eq!(back.dual_objective.to_bits(), sol.dual_objective.to_bits());
        assert_eq!(back.accuracy.to_bits(), sol.accuracy.to_bits());
        assert_eq!(back.x.nrows(), sol.x.nrows());
        for (u, v) in back.x.iter().zip(sol.x.iter()) {
            assert_eq!(u.re.to_bits(), v.re.to_bits());
            assert_eq!(u.im.to_bits(), v.im.to_bits());
        }
        assert_eq!(io::dump_solution(&back), text);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let n = 5;
        let a = random_unit(&mut rng, n);
        let b = random_unit(&mut rng, n);
        let mut problem = SdpProblem::new(outer(&a), 1.0);
        problem.inequalities.push((b, 0.5));
        let s1 = solve(&problem, ZETA).unwrap();
        let s2 = solve(&problem, ZETA).unwrap();
        assert_eq!(io::dump_solution(&s1), io::dump_solution(&s2));
    }

    #[test]
    fn validation_rejects_malformed_problems() {
        let a = DVector::from_vec(vec![C64::new(1.0, 0.0); 3]);
        let mut p = SdpProblem::new(outer(&a), 1.0);
        p.inequalities.push((DVector::from_vec(vec![C64::new(1.0, 0.0); 2]), 0.1));
        assert!(matches!(p.validate(), Err(SdpError::InequalityShape(0))));

        let mut p2 = SdpProblem::new(outer(&a), 0.0);
        assert!(matches!(p2.validate(), Err(SdpError::NonpositiveDiagonal)));
        p2.diag_value = 1.0;
        p2.rank_block =
            Some(RankBlock { basis: DMatrix::<C64>::zeros(3, 2), weight: 1.0 });
        assert!(matches!(p2.validate(), Err(SdpError::BasisShape { .. })));
    }
}
