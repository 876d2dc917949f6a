//! Infeasible primal-dual interior-point method with Nesterov-Todd scaling.
//!
//! Variables: primal X ⪰ 0, slack scalars s_l ≥ 0, slack block S_B ⪰ 0 and
//! bound r (when the coupled block is present); dual y ∈ ℝ^N for the diagonal
//! equalities, w_l ≥ 0 for the trace inequalities, Z ⪰ 0 for X, Z_B ⪰ 0 for
//! S_B.  The dual feasibility residual is
//!
//! ```text
//! R_d = Diag(y) + Σ_l w_l a_l a_l^H + V Z_B V^H − C0 − Z
//! ```
//!
//! and tr(Z_B) = ε closes the r column.  The Newton system is reduced to a
//! real (N+L+1)-dimensional Schur system in (Δy, Δw, Δr) by eliminating ΔZ,
//! ΔZ_B, ΔS_B, Δs through the NT-scaled complementarity linearizations.

use nalgebra::{DMatrix, DVector};

use super::{SdpError, SdpProblem, SdpSolution, SdpStatus};
use crate::C64;

const MAX_ITERATIONS: usize = 120;
const STEP_FRACTION: f64 = 0.98;
const DIVERGENCE_LIMIT: f64 = 1e9;

/// Reusable state from a previous solve of a structurally identical problem.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: DMatrix<C64>,
    /// Previous coupled-block dual; rescaled to the new ε internally.
    pub rank_dual: Option<DMatrix<C64>>,
    /// ε the rank_dual was produced under.
    pub weight: f64,
}

fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

fn frob_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    // ⟨A,B⟩ = Re tr(A^H B); real for Hermitian pairs.
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
fn eig_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let mut h = m.clone();
    hermitize(&mut h);
    let se = h.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

fn lower_triangular_inverse(l: &DMatrix<C64>) -> DMatrix<C64> {
    let n = l.nrows();
    l.clone()
        .solve_lower_triangular(&DMatrix::<C64>::identity(n, n))
        .expect("triangular factor invertible")
}

/// NT scaling data for one matrix cone.
struct NtCone {
    /// X = lx lx^H.
    lx: DMatrix<C64>,
    lx_inv: DMatrix<C64>,
    /// W = j j^H with j = lx q d^{-1/4}; then W^{-1} = j^{-H} j^{-1}.
    j: DMatrix<C64>,
    j_inv: DMatrix<C64>,
    /// Eigenvalues of lx^H Z lx (all positive).
    d: Vec<f64>,
    q: DMatrix<C64>,
}

impl NtCone {
    fn build(x: &DMatrix<C64>, z: &DMatrix<C64>) -> Option<NtCone> {
        let chol = x.clone().cholesky()?;
        let lx = chol.l();
        let m = lx.adjoint() * z * &lx;
        let (d, q) = eig_sorted(&m);
        if d.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return None;
        }
        let n = x.nrows();
        let mut j = &lx * &q;
        let mut j_inv_left = q.adjoint();
        for k in 0..n {
            let s = d[k].powf(-0.25);
            for r in 0..n {
                j[(r, k)] *= s;
                j_inv_left[(k, r)] /= s;
            }
        }
        let lx_inv = lower_triangular_inverse(&lx);
        let j_inv = &j_inv_left * &lx_inv;
        Some(NtCone { lx, lx_inv, j, j_inv, d, q })
    }

    /// W^{-1} A W^{-1}.
    fn unscale(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        let inner = &self.j_inv * a * self.j_inv.adjoint();
        self.j_inv.adjoint() * inner * &self.j_inv
    }

    fn w(&self) -> DMatrix<C64> {
        &self.j * self.j.adjoint()
    }

    fn w_inv(&self) -> DMatrix<C64> {
        self.j_inv.adjoint() * &self.j_inv
    }

    fn z_inv(&self) -> DMatrix<C64> {
        // Z = lx^{-H} Q D Q^H lx^{-1}  ⇒  Z^{-1} = lx Q D^{-1} Q^H lx^H.
        let n = self.d.len();
        let mut m = &self.lx * &self.q;
        for k in 0..n {
            let s = 1.0 / self.d[k];
            for r in 0..n {
                m[(r, k)] *= s;
            }
        }
        let right = self.q.adjoint() * self.lx.adjoint();
        m * right
    }

    /// Largest α with X + α ΔX ⪰ 0 (∞ mapped to f64::INFINITY).
    fn primal_step(&self, dx: &DMatrix<C64>) -> f64 {
        let scaled = &self.lx_inv * dx * self.lx_inv.adjoint();
        let (vals, _) = eig_sorted(&scaled);
        let min = vals[0];
        if min >= 0.0 { f64::INFINITY } else { -1.0 / min }
    }

    /// Largest α with Z + α ΔZ ⪰ 0 using Z = F F^H, F = lx^{-H} Q D^{1/2}.
    fn dual_step(&self, dz: &DMatrix<C64>) -> f64 {
        let n = self.d.len();
        // F^{-1} = D^{-1/2} Q^H lx^H.
        let mut f_inv = self.q.adjoint() * self.lx.adjoint();
        for k in 0..n {
            let s = 1.0 / self.d[k].sqrt();
            for r in 0..n {
                f_inv[(k, r)] *= s;
            }
        }
        let scaled = &f_inv * dz * f_inv.adjoint();
        let (vals, _) = eig_sorted(&scaled);
        let min = vals[0];
        if min >= 0.0 { f64::INFINITY } else { -1.0 / min }
    }
}

/// Inverse of the primal elimination operator T.
///
/// Without the coupled block T(Y) = W^{-1} Y W^{-1}, so T^{-1}(Y) = W Y W.
/// With it T(Y) = W^{-1} Y W^{-1} + G Y G where G = V W_B^{-1} V^H; writing
/// W^{-1} = L L^H (L = j^{-H}), K = L^{-1} G L^{-H} = Q_K D_K Q_K^H and
/// Γ = Q_K^H L^{-1} = Q_K^H j^H gives
/// T^{-1}(Y) = Γ^H ((Γ Y Γ^H) ⊘ (1 + d_i d_j)) Γ.
enum TInverse {
    Plain { w: DMatrix<C64> },
    Coupled { gamma: DMatrix<C64>, gamma_h: DMatrix<C64>, den_inv: DMatrix<f64> },
}

/// Σ_{ab} t_a conj(t_b) · den_inv[a,b] for symmetric den_inv; real by symmetry.
fn hadamard_quad(den_inv: &DMatrix<f64>, t_re: &DVector<f64>, t_im: &DVector<f64>) -> f64 {
    let u_re = den_inv * t_re;
    let u_im = den_inv * t_im;
    t_re.dot(&u_re) + t_im.dot(&u_im)
}

fn split_product(gj: &[C64], gk: &[C64]) -> (DVector<f64>, DVector<f64>) {
    let m = gj.len();
    let mut re = DVector::<f64>::zeros(m);
    let mut im = DVector::<f64>::zeros(m);
    for a in 0..m {
        let v = gj[a].conj() * gk[a];
        re[a] = v.re;
        im[a] = v.im;
    }
    (re, im)
}

impl TInverse {
    fn plain(cone: &NtCone) -> TInverse {
        TInverse::Plain { w: cone.w() }
    }

    fn coupled(cone: &NtCone, g: &DMatrix<C64>) -> Result<TInverse, SdpError> {
        let k = cone.j.adjoint() * g * &cone.j;
        let (dk, qk) = eig_sorted(&k);
        if dk.iter().any(|v| !v.is_finite()) {
            return Err(SdpError::Numerical("coupled scaling eigensolve failed".into()));
        }
        let gamma = qk.adjoint() * cone.j.adjoint();
        let n = dk.len();
        let mut den_inv = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                den_inv[(i, j)] = 1.0 / (1.0 + dk[i] * dk[j]);
            }
        }
        let gamma_h = gamma.adjoint();
        Ok(TInverse::Coupled { gamma, gamma_h, den_inv })
    }

    fn apply(&self, y: &DMatrix<C64>) -> DMatrix<C64> {
        match self {
            TInverse::Plain { w } => w * y * w,
            TInverse::Coupled { gamma, gamma_h, den_inv } => {
                let mut core = gamma * y * gamma_h;
                for j in 0..core.ncols() {
                    for i in 0..core.nrows() {
                        core[(i, j)] *= den_inv[(i, j)];
                    }
                }
                gamma_h * core * gamma
            }
        }
    }

    /// Diagonal-to-diagonal coupling P[j,k] = [T^{-1}(e_k e_k^H)]_{jj}.
    fn diag_coupling(&self) -> DMatrix<f64> {
        match self {
            TInverse::Plain { w } => {
                let n = w.nrows();
                let mut p = DMatrix::<f64>::zeros(n, n);
                for j in 0..n {
                    for k in 0..n {
                        p[(j, k)] = w[(j, k)].norm_sqr();
                    }
                }
                p
            }
            TInverse::Coupled { gamma, den_inv, .. } => {
                let n = gamma.ncols();
                let cols: Vec<Vec<C64>> =
                    (0..n).map(|j| gamma.column(j).iter().cloned().collect()).collect();
                let mut p = DMatrix::<f64>::zeros(n, n);
                for j in 0..n {
                    for k in j..n {
                        let (t_re, t_im) = split_product(&cols[j], &cols[k]);
                        let acc = hadamard_quad(den_inv, &t_re, &t_im);
                        p[(j, k)] = acc;
                        p[(k, j)] = acc;
                    }
                }
                p
            }
        }
    }

    /// diag(T^{-1}(a a^H)).
    fn diag_of_rank_one(&self, a: &DVector<C64>) -> DVector<f64> {
        match self {
            TInverse::Plain { w } => {
                let wa = w * a;
                DVector::from_iterator(wa.len(), wa.iter().map(|v| v.norm_sqr()))
            }
            TInverse::Coupled { gamma, den_inv, .. } => {
                let ga: Vec<C64> = (gamma * a).iter().cloned().collect();
                let n = gamma.ncols();
                let mut out = DVector::<f64>::zeros(n);
                for j in 0..n {
                    let gj: Vec<C64> = gamma.column(j).iter().cloned().collect();
                    let (t_re, t_im) = split_product(&gj, &ga);
                    out[j] = hadamard_quad(den_inv, &t_re, &t_im);
                }
                out
            }
        }
    }

    /// ⟨a a^H, T^{-1}(b b^H)⟩.
    fn rank_one_inner(&self, a: &DVector<C64>, b: &DVector<C64>) -> f64 {
        match self {
            TInverse::Plain { w } => {
                let mut v = C64::new(0.0, 0.0);
                let wb = w * b;
                for i in 0..a.len() {
                    v += a[i].conj() * wb[i];
                }
                v.norm_sqr()
            }
            TInverse::Coupled { gamma, den_inv, .. } => {
                let ga: Vec<C64> = (gamma * a).iter().cloned().collect();
                let gb: Vec<C64> = (gamma * b).iter().cloned().collect();
                let (t_re, t_im) = split_product(&ga, &gb);
                hadamard_quad(den_inv, &t_re, &t_im)
            }
        }
    }
}

struct Iterate {
    x: DMatrix<C64>,
    s: Vec<f64>,
    sb: Option<DMatrix<C64>>,
    r: f64,
    y: DVector<f64>,
    w: Vec<f64>,
    z: DMatrix<C64>,
    zb: Option<DMatrix<C64>>,
}

struct Direction {
    dx: DMatrix<C64>,
    ds: Vec<f64>,
    dsb: Option<DMatrix<C64>>,
    dr: f64,
    dy: DVector<f64>,
    dw: Vec<f64>,
    dz: DMatrix<C64>,
    dzb: Option<DMatrix<C64>>,
}

struct Residuals {
    rp_diag: DVector<f64>,
    rp_ineq: Vec<f64>,
    rp_rank: Option<DMatrix<C64>>,
    rd: DMatrix<C64>,
    re: f64,
}

fn residuals(pr: &SdpProblem, it: &Iterate) -> Residuals {
    let n = pr.dim;
    let mut rp_diag = DVector::<f64>::zeros(n);
    for k in 0..n {
        rp_diag[k] = pr.diag_value - it.x[(k, k)].re;
    }
    let mut rp_ineq = Vec::with_capacity(pr.inequalities.len());
    for (l, (a, tau)) in pr.inequalities.iter().enumerate() {
        let xa = &it.x * a;
        let mut q = C64::new(0.0, 0.0);
        for i in 0..n {
            q += a[i].conj() * xa[i];
        }
        rp_ineq.push(tau - q.re - it.s[l]);
    }
    let mut rd = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        rd[(k, k)] += C64::new(it.y[k], 0.0);
    }
    for (l, (a, _)) in pr.inequalities.iter().enumerate() {
        let wl = it.w[l];
        for i in 0..n {
            for j in 0..n {
                rd[(i, j)] += a[i] * a[j].conj() * wl;
            }
        }
    }
    let mut rp_rank = None;
    let mut re = 0.0;
    if let Some(rb) = &pr.rank_block {
        let v = &rb.basis;
        let zb = it.zb.as_ref().unwrap();
        rd += v * zb * v.adjoint();
        let mut block = DMatrix::<C64>::identity(n - 1, n - 1) * C64::new(it.r, 0.0);
        block -= v.adjoint() * &it.x * v;
        block -= it.sb.as_ref().unwrap();
        hermitize(&mut block);
        rp_rank = Some(block);
        re = rb.weight - zb.trace().re;
    }
    rd -= &pr.objective;
    rd -= &it.z;
    hermitize(&mut rd);
    Residuals { rp_diag, rp_ineq, rp_rank, rd, re }
}

fn gap(it: &Iterate) -> f64 {
    let mut g = frob_inner(&it.x, &it.z);
    if let (Some(sb), Some(zb)) = (&it.sb, &it.zb) {
        g += frob_inner(sb, zb);
    }
    for (sl, wl) in it.s.iter().zip(it.w.iter()) {
        g += sl * wl;
    }
    g
}

fn primal_objective(pr: &SdpProblem, it: &Iterate) -> f64 {
    let mut obj = frob_inner(&pr.objective, &it.x);
    if let Some(rb) = &pr.rank_block {
        obj -= rb.weight * it.r;
    }
    obj
}

fn dual_objective(pr: &SdpProblem, it: &Iterate) -> f64 {
    let mut obj = pr.diag_value * it.y.sum();
    for (l, (_, tau)) in pr.inequalities.iter().enumerate() {
        obj += it.w[l] * tau;
    }
    obj
}

/// Solves the reduced Schur system and reconstructs the full direction.
#[allow(clippy::too_many_arguments)]
fn newton_direction(
    pr: &SdpProblem,
    it: &Iterate,
    res: &Residuals,
    cone: &NtCone,
    cone_b: Option<&NtCone>,
    tinv: &TInverse,
    rx: &DMatrix<C64>,
    rb_rhs: Option<&DMatrix<C64>>,
    mu_tilde: &[f64],
) -> Result<Direction, SdpError> {
    let n = pr.dim;
    let nl = pr.inequalities.len();
    let coupled = pr.rank_block.is_some();
    let dim = n + nl + usize::from(coupled);

    // R̃ = W^{-1} R_X W^{-1} − R_d − V W_B^{-1}(R_B − R_rb) W_B^{-1} V^H.
    let mut rtilde = cone.unscale(rx) - &res.rd;
    let mut g2: Option<DMatrix<C64>> = None;
    let mut wb_inv2: Option<DMatrix<C64>> = None;
    if coupled {
        let v = &pr.rank_block.as_ref().unwrap().basis;
        let cb = cone_b.unwrap();
        let wb_inv = cb.w_inv();
        let diff = rb_rhs.unwrap() - res.rp_rank.as_ref().unwrap();
        rtilde -= v * (&wb_inv * &diff * &wb_inv) * v.adjoint();
        let wbi2 = &wb_inv * &wb_inv;
        g2 = Some(v * &wbi2 * v.adjoint());
        wb_inv2 = Some(wbi2);
    }
    hermitize(&mut rtilde);

    let u_mat = tinv.apply(&rtilde);
    let p_coupling = tinv.diag_coupling();
    let diag_ta: Vec<DVector<f64>> =
        pr.inequalities.iter().map(|(a, _)| tinv.diag_of_rank_one(a)).collect();
    let tinv_g2 = g2.as_ref().map(|g| tinv.apply(g));

    let mut sys = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    for j in 0..n {
        for k in 0..n {
            sys[(j, k)] = p_coupling[(j, k)];
        }
        for l in 0..nl {
            sys[(j, n + l)] = diag_ta[l][j];
        }
        if coupled {
            sys[(j, n + nl)] = -tinv_g2.as_ref().unwrap()[(j, j)].re;
        }
        rhs[j] = u_mat[(j, j)].re - res.rp_diag[j];
    }
    for l in 0..nl {
        let (a_l, _) = &pr.inequalities[l];
        for k in 0..n {
            sys[(n + l, k)] = diag_ta[l][k];
        }
        for l2 in 0..nl {
            let (a_l2, _) = &pr.inequalities[l2];
            sys[(n + l, n + l2)] = tinv.rank_one_inner(a_l, a_l2);
        }
        sys[(n + l, n + l)] += it.s[l] / it.w[l];
        if coupled {
            let mut inner = C64::new(0.0, 0.0);
            let ga = tinv_g2.as_ref().unwrap() * a_l;
            for i in 0..n {
                inner += a_l[i].conj() * ga[i];
            }
            sys[(n + l, n + nl)] = -inner.re;
        }
        let mut au = C64::new(0.0, 0.0);
        let ua = &u_mat * a_l;
        for i in 0..n {
            au += a_l[i].conj() * ua[i];
        }
        rhs[n + l] = au.re + mu_tilde[l] / it.w[l] - res.rp_ineq[l];
    }
    if coupled {
        let g2m = g2.as_ref().unwrap();
        let tg2 = tinv_g2.as_ref().unwrap();
        let wbi2 = wb_inv2.as_ref().unwrap();
        let row = n + nl;
        for k in 0..n {
            sys[(row, k)] = tg2[(k, k)].re;
        }
        for l in 0..nl {
            let (a_l, _) = &pr.inequalities[l];
            let mut inner = C64::new(0.0, 0.0);
            let ga = tg2 * a_l;
            for i in 0..n {
                inner += a_l[i].conj() * ga[i];
            }
            sys[(row, n + l)] = inner.re;
        }
        let tr_wb2 = wbi2.trace().re;
        sys[(row, row)] = -(frob_inner(g2m, tg2) - tr_wb2);
        let diff = rb_rhs.unwrap() - res.rp_rank.as_ref().unwrap();
        let rtil_e = res.re - frob_inner(wbi2, &diff);
        rhs[row] = frob_inner(g2m, &u_mat) - rtil_e;
    }

    let lu = sys.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| SdpError::Numerical("singular reduced Newton system".into()))?;

    let dy = DVector::from_iterator(n, (0..n).map(|k| sol[k]));
    let dw: Vec<f64> = (0..nl).map(|l| sol[n + l]).collect();
    let dr = if coupled { sol[n + nl] } else { 0.0 };

    // ΔX = T^{-1}(R̃ − Diag(Δy) − Σ Δw_l A_l + Δr G₂).
    let mut arg = rtilde.clone();
    for k in 0..n {
        arg[(k, k)] -= C64::new(dy[k], 0.0);
    }
    for (l, (a, _)) in pr.inequalities.iter().enumerate() {
        let dwl = dw[l];
        for i in 0..n {
            for j2 in 0..n {
                arg[(i, j2)] -= a[i] * a[j2].conj() * dwl;
            }
        }
    }
    if coupled {
        arg += g2.as_ref().unwrap() * C64::new(dr, 0.0);
    }
    hermitize(&mut arg);
    let mut dx = tinv.apply(&arg);
    hermitize(&mut dx);

    let ds: Vec<f64> = (0..nl)
        .map(|l| mu_tilde[l] / it.w[l] - (it.s[l] / it.w[l]) * dw[l])
        .collect();

    let mut dzb = None;
    let mut dsb = None;
    if coupled {
        let v = &pr.rank_block.as_ref().unwrap().basis;
        let cb = cone_b.unwrap();
        let wb_inv = cb.w_inv();
        let vdxv = v.adjoint() * &dx * v;
        // ΔS_B = R_rb + Δr·I − V^H ΔX V.
        let mut dsb_m = res.rp_rank.as_ref().unwrap().clone();
        for k in 0..n - 1 {
            dsb_m[(k, k)] += C64::new(dr, 0.0);
        }
        dsb_m -= &vdxv;
        hermitize(&mut dsb_m);
        // ΔZ_B = W_B^{-1}(R_B − R_rb − Δr·I + V^H ΔX V) W_B^{-1}.
        let mut inner = rb_rhs.unwrap() - res.rp_rank.as_ref().unwrap();
        for k in 0..n - 1 {
            inner[(k, k)] -= C64::new(dr, 0.0);
        }
        inner += &vdxv;
        let mut dzb_m = &wb_inv * inner * &wb_inv;
        hermitize(&mut dzb_m);
        dsb = Some(dsb_m);
        dzb = Some(dzb_m);
    }

    // ΔZ from dual feasibility: Diag(Δy) + Σ Δw A + V ΔZ_B V^H + R_d.
    let mut dz = res.rd.clone();
    for k in 0..n {
        dz[(k, k)] += C64::new(dy[k], 0.0);
    }
    for (l, (a, _)) in pr.inequalities.iter().enumerate() {
        let dwl = dw[l];
        for i in 0..n {
            for j2 in 0..n {
                dz[(i, j2)] += a[i] * a[j2].conj() * dwl;
            }
        }
    }
    if coupled {
        let v = &pr.rank_block.as_ref().unwrap().basis;
        dz += v * dzb.as_ref().unwrap() * v.adjoint();
    }
    hermitize(&mut dz);

    Ok(Direction { dx, ds, dsb, dr, dy, dw, dz, dzb })
}

fn primal_step_length(it: &Iterate, dir: &Direction, cone: &NtCone, cone_b: Option<&NtCone>) -> f64 {
    let mut alpha = cone.primal_step(&dir.dx);
    if let (Some(cb), Some(dsb)) = (cone_b, &dir.dsb) {
        alpha = alpha.min(cb.primal_step(dsb));
    }
    for (l, &dsl) in dir.ds.iter().enumerate() {
        if dsl < 0.0 {
            alpha = alpha.min(-it.s[l] / dsl);
        }
    }
    (STEP_FRACTION * alpha).min(1.0)
}

fn dual_step_length(it: &Iterate, dir: &Direction, cone: &NtCone, cone_b: Option<&NtCone>) -> f64 {
    let mut alpha = cone.dual_step(&dir.dz);
    if let (Some(cb), Some(dzb)) = (cone_b, &dir.dzb) {
        alpha = alpha.min(cb.dual_step(dzb));
    }
    for (l, &dwl) in dir.dw.iter().enumerate() {
        if dwl < 0.0 {
            alpha = alpha.min(-it.w[l] / dwl);
        }
    }
    (STEP_FRACTION * alpha).min(1.0)
}

fn apply_step(it: &mut Iterate, dir: &Direction, ap: f64, ad: f64) {
    it.x += &dir.dx * C64::new(ap, 0.0);
    hermitize(&mut it.x);
    for (sl, dsl) in it.s.iter_mut().zip(dir.ds.iter()) {
        *sl += ap * dsl;
    }
    if let (Some(sb), Some(dsb)) = (&mut it.sb, &dir.dsb) {
        *sb += dsb * C64::new(ap, 0.0);
        hermitize(sb);
    }
    it.r += ap * dir.dr;
    it.y += &dir.dy * ad;
    for (wl, dwl) in it.w.iter_mut().zip(dir.dw.iter()) {
        *wl += ad * dwl;
    }
    it.z += &dir.dz * C64::new(ad, 0.0);
    hermitize(&mut it.z);
    if let (Some(zb), Some(dzb)) = (&mut it.zb, &dir.dzb) {
        *zb += dzb * C64::new(ad, 0.0);
        hermitize(zb);
    }
}

fn initial_iterate(pr: &SdpProblem, warm: Option<&WarmStart>) -> Iterate {
    let n = pr.dim;
    let p = pr.diag_value;
    let nl = pr.inequalities.len();
    let obj_scale = 1.0 + pr.objective.norm() / (n as f64).sqrt();

    let mut x = DMatrix::<C64>::identity(n, n) * C64::new(p, 0.0);
    if let Some(ws) = warm {
        if ws.x.nrows() == n {
            // Pull the warm point toward the interior; retry stronger if the
            // Cholesky safeguard rejects it.
            let mut blend = 0.05;
            loop {
                let mut cand = ws.x.clone() * C64::new(1.0 - blend, 0.0);
                for k in 0..n {
                    cand[(k, k)] += C64::new(blend * p, 0.0);
                }
                hermitize(&mut cand);
                if cand.clone().cholesky().is_some() {
                    x = cand;
                    break;
                }
                blend *= 4.0;
                if blend > 1.0 {
                    break;
                }
            }
        }
    }

    let z = DMatrix::<C64>::identity(n, n) * C64::new(obj_scale, 0.0);
    let (sb, zb, r) = if let Some(rb) = &pr.rank_block {
        let v = &rb.basis;
        let vxv = v.adjoint() * &x * v;
        let (vals, _) = eig_sorted(&vxv);
        let r0 = vals[vals.len() - 1] + 1.0;
        let mut sb0 = DMatrix::<C64>::identity(n - 1, n - 1) * C64::new(r0, 0.0);
        sb0 -= &vxv;
        hermitize(&mut sb0);
        let mut zb0 = DMatrix::<C64>::identity(n - 1, n - 1)
            * C64::new(rb.weight / (n as f64 - 1.0), 0.0);
        if let Some(ws) = warm {
            if let Some(prev) = &ws.rank_dual {
                if prev.nrows() == n - 1 && ws.weight > 0.0 {
                    let scale = rb.weight / ws.weight;
                    let mut cand = prev * C64::new(scale, 0.0);
                    hermitize(&mut cand);
                    // Keep only safely positive definite warm duals.
                    let shifted = &cand
                        - DMatrix::<C64>::identity(n - 1, n - 1)
                            * C64::new(1e-10 * rb.weight, 0.0);
                    if shifted.clone().cholesky().is_some() {
                        zb0 = cand;
                    }
                }
            }
        }
        (Some(sb0), Some(zb0), r0)
    } else {
        (None, None, 0.0)
    };

    Iterate {
        x,
        s: vec![1.0; nl],
        sb,
        r,
        y: DVector::zeros(n),
        w: vec![1.0; nl],
        z,
        zb,
    }
}

pub(super) fn solve(
    pr: &SdpProblem,
    zeta: f64,
    warm: Option<&WarmStart>,
) -> Result<SdpSolution, SdpError> {
    pr.validate()?;
    let n = pr.dim;
    let nl = pr.inequalities.len();
    let coupled = pr.rank_block.is_some();
    let cone_dim = (n + if coupled { n - 1 } else { 0 } + nl) as f64;
    let obj_norm = 1.0 + pr.objective.norm();

    let mut it = initial_iterate(pr, warm);
    let mut best_accuracy = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter;
        let res = residuals(pr, &it);
        let g = gap(&it);
        let p_obj = primal_objective(pr, &it);
        let d_obj = dual_objective(pr, &it);

        let mut prim_norm = res.rp_diag.norm_squared();
        for v in &res.rp_ineq {
            prim_norm += v * v;
        }
        if let Some(rb) = &res.rp_rank {
            prim_norm += rb.norm_squared();
        }
        let prim_rel = prim_norm.sqrt() / (1.0 + pr.diag_value * (n as f64).sqrt());
        let dual_rel = (res.rd.norm_squared() + res.re * res.re).sqrt() / obj_norm;
        let gap_rel = g.abs() / (1.0 + p_obj.abs() + d_obj.abs());
        let accuracy = prim_rel.max(dual_rel).max(gap_rel);
        best_accuracy = best_accuracy.min(accuracy);

        if accuracy <= zeta {
            return Ok(finish(pr, it, SdpStatus::Optimal, accuracy, iter));
        }
        if d_obj < -DIVERGENCE_LIMIT * obj_norm * pr.diag_value.max(1.0)
            && prim_rel > zeta.sqrt()
        {
            return Ok(finish(pr, it, SdpStatus::Infeasible, accuracy, iter));
        }

        let cone = match NtCone::build(&it.x, &it.z) {
            Some(c) => c,
            None => return Ok(finish(pr, it, SdpStatus::MaxIterations, accuracy, iter)),
        };
        let cone_b = if coupled {
            match NtCone::build(it.sb.as_ref().unwrap(), it.zb.as_ref().unwrap()) {
                Some(c) => Some(c),
                None => return Ok(finish(pr, it, SdpStatus::MaxIterations, accuracy, iter)),
            }
        } else {
            None
        };
        let tinv = if coupled {
            let v = &pr.rank_block.as_ref().unwrap().basis;
            let wb_inv = cone_b.as_ref().unwrap().w_inv();
            let g_op = v * &wb_inv * v.adjoint();
            TInverse::coupled(&cone, &g_op)?
        } else {
            TInverse::plain(&cone)
        };

        // Affine direction: pure Newton toward feasibility and zero gap.
        let rx_aff = -&it.x;
        let rb_aff = it.sb.as_ref().map(|sb| -sb);
        let mu_aff: Vec<f64> = (0..nl).map(|l| -it.s[l] * it.w[l]).collect();
        let aff = newton_direction(
            pr, &it, &res, &cone, cone_b.as_ref(), &tinv, &rx_aff, rb_aff.as_ref(), &mu_aff,
        )?;
        let ap_aff = primal_step_length(&it, &aff, &cone, cone_b.as_ref());
        let ad_aff = dual_step_length(&it, &aff, &cone, cone_b.as_ref());

        // Trial gap after the affine step sets the centering weight.
        let mut gap_aff = frob_inner(
            &(&it.x + &aff.dx * C64::new(ap_aff, 0.0)),
            &(&it.z + &aff.dz * C64::new(ad_aff, 0.0)),
        );
        if let (Some(sb), Some(zb), Some(dsb), Some(dzb)) =
            (&it.sb, &it.zb, &aff.dsb, &aff.dzb)
        {
            gap_aff += frob_inner(
                &(sb + dsb * C64::new(ap_aff, 0.0)),
                &(zb + dzb * C64::new(ad_aff, 0.0)),
            );
        }
        for l in 0..nl {
            gap_aff += (it.s[l] + ap_aff * aff.ds[l]) * (it.w[l] + ad_aff * aff.dw[l]);
        }
        gap_aff = gap_aff.max(0.0);
        let mu = g / cone_dim;
        let sigma = ((gap_aff / g.max(1e-300)).powi(3)).clamp(1e-6, 1.0);

        // Corrector: centering on the matrix cones, full Mehrotra on scalars.
        let smu = sigma * mu;
        let mut rx_cc = cone.z_inv() * C64::new(smu, 0.0);
        rx_cc -= &it.x;
        hermitize(&mut rx_cc);
        let rb_cc = cone_b.as_ref().map(|cb| {
            let mut m = cb.z_inv() * C64::new(smu, 0.0);
            m -= it.sb.as_ref().unwrap();
            hermitize(&mut m);
            m
        });
        let mu_cc: Vec<f64> = (0..nl)
            .map(|l| smu - it.s[l] * it.w[l] - aff.ds[l] * aff.dw[l])
            .collect();
        let dir = newton_direction(
            pr, &it, &res, &cone, cone_b.as_ref(), &tinv, &rx_cc, rb_cc.as_ref(), &mu_cc,
        )?;

        let mut ap = primal_step_length(&it, &dir, &cone, cone_b.as_ref());
        let mut ad = dual_step_length(&it, &dir, &cone, cone_b.as_ref());

        // Fall back to shorter steps if rounding pushes an iterate off the cone.
        let mut stepped = false;
        for _ in 0..12 {
            let mut trial_x = it.x.clone() + &dir.dx * C64::new(ap, 0.0);
            hermitize(&mut trial_x);
            let mut trial_z = it.z.clone() + &dir.dz * C64::new(ad, 0.0);
            hermitize(&mut trial_z);
            let ok_blocks = match (&it.sb, &dir.dsb, &it.zb, &dir.dzb) {
                (Some(sb), Some(dsb), Some(zb), Some(dzb)) => {
                    let mut tsb = sb.clone() + dsb * C64::new(ap, 0.0);
                    hermitize(&mut tsb);
                    let mut tzb = zb.clone() + dzb * C64::new(ad, 0.0);
                    hermitize(&mut tzb);
                    tsb.clone().cholesky().is_some() && tzb.clone().cholesky().is_some()
                }
                _ => true,
            };
            if trial_x.clone().cholesky().is_some()
                && trial_z.clone().cholesky().is_some()
                && ok_blocks
            {
                stepped = true;
                break;
            }
            ap *= 0.5;
            ad *= 0.5;
        }
        if !stepped {
            return Ok(finish(pr, it, SdpStatus::MaxIterations, accuracy, iter));
        }
        apply_step(&mut it, &dir, ap, ad);
    }

    let res = residuals(pr, &it);
    let g = gap(&it);
    let p_obj = primal_objective(pr, &it);
    let d_obj = dual_objective(pr, &it);
    let mut prim_norm = res.rp_diag.norm_squared();
    for v in &res.rp_ineq {
        prim_norm += v * v;
    }
    if let Some(rb) = &res.rp_rank {
        prim_norm += rb.norm_squared();
    }
    let prim_rel = prim_norm.sqrt() / (1.0 + pr.diag_value * (n as f64).sqrt());
    let dual_rel = (res.rd.norm_squared() + res.re * res.re).sqrt() / obj_norm;
    let gap_rel = g.abs() / (1.0 + p_obj.abs() + d_obj.abs());
    let accuracy = prim_rel.max(dual_rel).max(gap_rel);
    Ok(finish(pr, it, SdpStatus::MaxIterations, accuracy, iterations + 1))
}

fn finish(
    pr: &SdpProblem,
    it: Iterate,
    status: SdpStatus,
    accuracy: f64,
    iterations: usize,
) -> SdpSolution {
    let objective = primal_objective(pr, &it);
    let dual = dual_objective(pr, &it);
    SdpSolution {
        r: pr.rank_block.as_ref().map(|_| it.r),
        rank_dual: it.zb.clone(),
        x: it.x,
        objective,
        dual_objective: dual,
        status,
        accuracy,
        iterations,
    }
}
