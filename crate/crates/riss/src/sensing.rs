//! Active-array snapshot synthesis, subspace DOA estimation (spectral and
//! root-polynomial variants), adaptive spatial filtering, and synchronization
//! head recognition.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("need fewer sources ({sources}) than sensors ({sensors})")]
    TooManySources { sources: usize, sensors: usize },
    #[error("noise subspace is empty (K = Na)")]
    EmptyNoiseSubspace,
    #[error("found {found} spectrum peaks, need {need}: sources unresolvable")]
    UnresolvedPeaks { found: usize, need: usize },
    #[error("root phase {phase:.4} maps to more than one arrival angle at spacing ratio {spacing}")]
    AmbiguousRoot { phase: f64, spacing: f64 },
    #[error("only {found} of {need} roots map to physical angles")]
    TooFewRoots { found: usize, need: usize },
    #[error("covariance is singular and no diagonal loading was allowed")]
    SingularCovariance,
    #[error("no head correlation above threshold {0}")]
    UnknownHead(f64),
    #[error("empty input")]
    EmptyInput,
}

/// Complex baseband samples from the active row, one row per sensor.
#[derive(Debug, Clone)]
pub struct SnapshotBlock {
    /// Na×n sample matrix.
    pub data: DMatrix<C64>,
    /// Element spacing over wavelength.
    pub spacing_ratio: f64,
    /// Ground truth (angle radians, linear power) when synthesized.
    pub truth: Option<Vec<(f64, f64)>>,
    pub noise_power: f64,
}

/// Eigenstructure of a sample covariance, split at source count K.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    pub covariance: DMatrix<C64>,
    /// Na×K signal basis.
    pub signal: DMatrix<C64>,
    /// Na×(Na−K) noise basis.
    pub noise: DMatrix<C64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Sensing-row response for arrival angle θ (from the row normal):
/// m-th entry e^{−i·2π·s·m·sinθ}. Unnormalized, phase reference element 0.
pub fn sensing_steering(angle: f64, na: usize, spacing_ratio: f64) -> DVector<C64> {
    DVector::from_fn(na, |m, _| C64::from_polar(1.0, -TAU * spacing_ratio * m as f64 * angle.sin()))
}

/// X = A·S + noise with i.i.d. circular Gaussian source rows and noise.
pub fn synth_snapshots(
    angles: &[f64],
    powers: &[f64],
    noise_power: f64,
    n: usize,
    na: usize,
    spacing_ratio: f64,
    seed: u64,
) -> Result<SnapshotBlock, SensingError> {
    let k = angles.len();
    if k >= na {
        return Err(SensingError::TooManySources { sources: k, sensors: na });
    }
    if n == 0 || powers.len() != k {
        return Err(SensingError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(na, n);
    for (src, (&angle, &power)) in angles.iter().zip(powers).enumerate() {
        let a = sensing_steering(angle, na, spacing_ratio);
        let dist = Normal::new(0.0, (power / 2.0).sqrt()).expect("valid stddev");
        let _ = src;
        for t in 0..n {
            let s = C64::new(dist.sample(&mut rng), dist.sample(&mut rng));
            for m in 0..na {
                data[(m, t)] += a[m] * s;
            }
        }
    }
    if noise_power > 0.0 {
        let dist = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("valid stddev");
        for v in data.iter_mut() {
            *v += C64::new(dist.sample(&mut rng), dist.sample(&mut rng));
        }
    }
    Ok(SnapshotBlock {
        data,
        spacing_ratio,
        truth: Some(angles.iter().copied().zip(powers.iter().copied()).collect()),
        noise_power,
    })
}

/// R = (1/n)·X·X^H.
pub fn sample_covariance(x: &DMatrix<C64>) -> DMatrix<C64> {
    let n = x.ncols().max(1);
    let mut r = x * x.adjoint();
    r /= C64::new(n as f64, 0.0);
    // keep it exactly Hermitian against accumulation order
    let rh = r.adjoint();
    (r + rh) * C64::new(0.5, 0.0)
}

/// Eigendecomposition split into signal (K largest) and noise subspaces.
pub fn subspace(r: &DMatrix<C64>, k: usize) -> Result<SubspaceDecomposition, SensingError> {
    let na = r.nrows();
    if k >= na {
        return Err(SensingError::TooManySources { sources: k, sensors: na });
    }
    let eig = r.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut signal = DMatrix::zeros(na, k);
    let mut noise = DMatrix::zeros(na, na - k);
    for (col, &i) in order.iter().enumerate() {
        for row in 0..na {
            if col < k {
                signal[(row, col)] = eig.eigenvectors[(row, i)];
            } else {
                noise[(row, col - k)] = eig.eigenvectors[(row, i)];
            }
        }
    }
    Ok(SubspaceDecomposition { covariance: r.clone(), signal, noise, eigenvalues })
}

/// Pseudo-spectrum 1/(‖E_z^H α(φ)‖² + tiny) over the angle grid (radians).
pub fn music_spectrum(
    dec: &SubspaceDecomposition,
    spacing_ratio: f64,
    grid: &[f64],
) -> Result<Vec<f64>, SensingError> {
    if dec.noise.ncols() == 0 {
        return Err(SensingError::EmptyNoiseSubspace);
    }
    if grid.is_empty() {
        return Err(SensingError::EmptyInput);
    }
    let na = dec.covariance.nrows();
    let scale = 1.0 / (na as f64).sqrt();
    let mut out = Vec::with_capacity(grid.len());
    for &phi in grid {
        let a = sensing_steering(phi, na, spacing_ratio) * C64::new(scale, 0.0);
        let proj = dec.noise.adjoint() * &a;
        out.push(1.0 / (proj.norm_squared() + 1e-24));
    }
    Ok(out)
}

/// Default spectral-search grid: 0.1° steps over [−90°, 90°], radians.
pub fn default_grid() -> Vec<f64> {
    let step = 0.1f64.to_radians();
    let n = 1801;
    (0..n).map(|i| -PI / 2.0 + step * i as f64).collect()
}

/// K largest spectrum peaks, quadratically refined, sorted by angle.
pub fn music_estimate(grid: &[f64], spectrum: &[f64], k: usize) -> Result<Vec<f64>, SensingError> {
    assert_eq!(grid.len(), spectrum.len());
    let mut peaks: Vec<(f64, usize)> = Vec::new();
    for i in 1..spectrum.len().saturating_sub(1) {
        if spectrum[i] > spectrum[i - 1] && spectrum[i] > spectrum[i + 1] {
            peaks.push((spectrum[i], i));
        }
    }
    if peaks.len() < k {
        return Err(SensingError::UnresolvedPeaks { found: peaks.len(), need: k });
    }
    peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut angles: Vec<f64> = peaks[..k]
        .iter()
        .map(|&(_, i)| {
            // parabolic refinement on the log spectrum
            let (l, c, r) = (spectrum[i - 1].ln(), spectrum[i].ln(), spectrum[i + 1].ln());
            let denom = l - 2.0 * c + r;
            let mut delta = if denom.abs() > 1e-300 { 0.5 * (l - r) / denom } else { 0.0 };
            delta = delta.clamp(-0.5, 0.5);
            let step = grid[i + 1] - grid[i];
            grid[i] + delta * step
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Polynomial-rooting variant: K inside-circle roots of the noise projector's
/// diagonal-sum polynomial, nearest the unit circle, mapped through the
/// element spacing. Errors when a root phase admits two arrival angles.
pub fn root_music(
    dec: &SubspaceDecomposition,
    k: usize,
    spacing_ratio: f64,
) -> Result<Vec<f64>, SensingError> {
    if dec.noise.ncols() == 0 {
        return Err(SensingError::EmptyNoiseSubspace);
    }
    let na = dec.covariance.nrows();
    let proj = &dec.noise * dec.noise.adjoint();
    let l = na - 1;
    // coefficient of z^(ℓ+l) is the ℓ-th diagonal sum of the projector
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * l + 1];
    for off in -(l as isize)..=(l as isize) {
        let mut s = C64::new(0.0, 0.0);
        for m in 0..na {
            let n = m as isize + off;
            if (0..na as isize).contains(&n) {
                s += proj[(m, n as usize)];
            }
        }
        coeffs[(off + l as isize) as usize] = s;
    }
    let mut roots = polynomial_roots(&coeffs);
    // conjugate-reciprocal partners z and 1/z̄ share one phase; order by
    // distance to the unit circle and keep one representative per phase
    roots.sort_by(|a, b| {
        let da = (a.norm() - 1.0).abs();
        let db = (b.norm() - 1.0).abs();
        da.partial_cmp(&db).unwrap()
    });
    let mut taken_phases: Vec<f64> = Vec::new();
    let mut angles = Vec::with_capacity(k);
    for z in roots {
        if angles.len() == k {
            break;
        }
        let mu = z.arg();
        let duplicate = taken_phases.iter().any(|&p| {
            let mut d = (p - mu) % TAU;
            if d > PI { d -= TAU; }
            if d < -PI { d += TAU; }
            d.abs() < 1e-6
        });
        if duplicate {
            continue;
        }
        let mut candidates = Vec::new();
        for j in [-1.0, 0.0, 1.0] {
            let s = (-mu + TAU * j) / (TAU * spacing_ratio);
            if s.abs() <= 1.0 {
                candidates.push(s);
            }
        }
        candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        match candidates.len() {
            0 => continue,
            1 => {
                taken_phases.push(mu);
                angles.push(candidates[0].asin());
            }
            _ => return Err(SensingError::AmbiguousRoot { phase: mu, spacing: spacing_ratio }),
        }
    }
    if angles.len() < k {
        return Err(SensingError::TooFewRoots { found: angles.len(), need: k });
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Simultaneous-iteration (Durand–Kerner) roots with deterministic start and a
/// Newton polish. Trims negligible leading/trailing coefficients first.
fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let maxc = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if maxc == 0.0 {
        return vec![];
    }
    let tol_trim = 1e-14 * maxc;
    let mut lo = 0;
    while lo < coeffs.len() && coeffs[lo].norm() < tol_trim {
        lo += 1;
    }
    let mut hi = coeffs.len();
    while hi > lo && coeffs[hi - 1].norm() < tol_trim {
        hi -= 1;
    }
    // trailing z^lo factor contributes roots at zero; they are never near the
    // unit circle so dropping them is fine for this caller
    let c: Vec<C64> = coeffs[lo..hi].to_vec();
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return vec![];
    }
    let lead = c[deg];
    let monic: Vec<C64> = c.iter().map(|v| v / lead).collect();
    let eval = |z: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for v in monic.iter().rev() {
            acc = acc * z + v;
        }
        acc
    };
    let deriv = |z: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in (1..=deg).rev() {
            acc = acc * z + monic[i] * C64::new(i as f64, 0.0);
        }
        acc
    };
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..deg)
        .map(|j| seed.powu(j as u32 + 1))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for j in 0..deg {
            let mut denom = C64::new(1.0, 0.0);
            for i in 0..deg {
                if i != j {
                    denom *= z[j] - z[i];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = eval(z[j]) / denom;
            z[j] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-13 {
            break;
        }
    }
    for zj in z.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*zj);
            if d.norm() > 1e-300 {
                *zj -= eval(*zj) / d;
            }
        }
    }
    z
}

/// Distortionless minimum-variance weights w = R⁻¹α₀/(α₀^H R⁻¹ α₀).
/// `loading` is added to the diagonal before inversion; pass `None` for the
/// standard 1e-6·tr(R)/Na, or `Some(0.0)` to require R invertible as-is.
pub fn mvdr_weights(
    r: &DMatrix<C64>,
    steer: &DVector<C64>,
    loading: Option<f64>,
) -> Result<DVector<C64>, SensingError> {
    let na = r.nrows();
    let eps = loading.unwrap_or_else(|| 1e-6 * r.trace().re / na as f64);
    let mut rl = r.clone();
    for i in 0..na {
        rl[(i, i)] += C64::new(eps, 0.0);
    }
    let chol = rl.cholesky().ok_or(SensingError::SingularCovariance)?;
    let rinv_a = chol.solve(steer);
    let denom = steer.dotc(&rinv_a);
    if denom.norm() < 1e-300 {
        return Err(SensingError::SingularCovariance);
    }
    Ok(rinv_a / denom)
}

/// Linearly-constrained minimum-variance weights for constraint matrix
/// columns `steers` and desired responses `f`: w = R⁻¹C(C^H R⁻¹C)⁻¹f.
pub fn lcmv_weights(
    r: &DMatrix<C64>,
    steers: &[DVector<C64>],
    response: &[C64],
    loading: Option<f64>,
) -> Result<DVector<C64>, SensingError> {
    assert_eq!(steers.len(), response.len());
    let na = r.nrows();
    let eps = loading.unwrap_or_else(|| 1e-6 * r.trace().re / na as f64);
    let mut rl = r.clone();
    for i in 0..na {
        rl[(i, i)] += C64::new(eps, 0.0);
    }
    let chol = rl.cholesky().ok_or(SensingError::SingularCovariance)?;
    let m = steers.len();
    let mut c = DMatrix::zeros(na, m);
    for (j, s) in steers.iter().enumerate() {
        c.set_column(j, s);
    }
    let rinv_c = chol.solve(&c);
    let gram = c.adjoint() * &rinv_c;
    let f = DVector::from_column_slice(response);
    let coef = gram.lu().solve(&f).ok_or(SensingError::SingularCovariance)?;
    Ok(rinv_c * coef)
}

/// y = w^H X.
pub fn spatial_filter(x: &DMatrix<C64>, w: &DVector<C64>) -> RowDVector<C64> {
    (w.adjoint() * x).row(0).into_owned()
}

/// Cross-correlation magnitudes normalized by both window energies, evaluated
/// at every full-overlap lag via FFT. Returns the peak value and its lag.
pub fn normalized_correlation_peak(stream: &[C64], template: &[C64]) -> Option<(f64, usize)> {
    if template.is_empty() || stream.len() < template.len() {
        return None;
    }
    let n = stream.len();
    let m = template.len();
    let fft_len = (n + m).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);
    let mut xs: Vec<C64> = stream.to_vec();
    xs.resize(fft_len, C64::new(0.0, 0.0));
    // time-reversed conjugate turns convolution into correlation
    let mut ts: Vec<C64> = template.iter().rev().map(|z| z.conj()).collect();
    ts.resize(fft_len, C64::new(0.0, 0.0));
    fft.process(&mut xs);
    fft.process(&mut ts);
    for (a, b) in xs.iter_mut().zip(&ts) {
        *a *= *b;
    }
    ifft.process(&mut xs);
    let scale = 1.0 / fft_len as f64;
    let template_energy: f64 = template.iter().map(|z| z.norm_sqr()).sum();
    // sliding window energy of the stream
    let mut prefix = vec![0.0f64; n + 1];
    for (i, z) in stream.iter().enumerate() {
        prefix[i + 1] = prefix[i] + z.norm_sqr();
    }
    let mut best: Option<(f64, usize)> = None;
    for lag in 0..=(n - m) {
        let corr = xs[lag + m - 1].norm() * scale;
        let win = prefix[lag + m] - prefix[lag];
        let denom = (template_energy * win).sqrt();
        if denom <= 0.0 {
            continue;
        }
        let ncc = corr / denom;
        if best.map_or(true, |(b, _)| ncc > b) {
            best = Some((ncc, lag));
        }
    }
    best
}

/// Which transmitter a stream's synchronization head matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadLabel {
    Tx1,
    Tx2,
}

/// Matched-filter identity decision between two shaped head waveforms.
/// Confidence is the winning/losing peak ratio (≥ 1).
pub fn classify_sync_head(
    stream: &[C64],
    head1: &[C64],
    head2: &[C64],
    threshold: f64,
) -> Result<(HeadLabel, f64), SensingError> {
    let p1 = normalized_correlation_peak(stream, head1).ok_or(SensingError::EmptyInput)?;
    let p2 = normalized_correlation_peak(stream, head2).ok_or(SensingError::EmptyInput)?;
    if p1.0 < threshold && p2.0 < threshold {
        return Err(SensingError::UnknownHead(threshold));
    }
    if p1.0 >= p2.0 {
        Ok((HeadLabel::Tx1, p1.0 / p2.0.max(1e-300)))
    } else {
        Ok((HeadLabel::Tx2, p2.0 / p1.0.max(1e-300)))
    }
}

/// Steady-state gate: the sample range whose blocks carry at least half the
/// median block power. Drops leading/trailing idle or transient stretches.
pub fn steady_state_range(samples: &[C64], block: usize) -> (usize, usize) {
    assert!(block >= 1);
    if samples.is_empty() {
        return (0, 0);
    }
    let nblocks = samples.len().div_ceil(block);
    let powers: Vec<f64> = (0..nblocks)
        .map(|b| {
            let lo = b * block;
            let hi = ((b + 1) * block).min(samples.len());
            samples[lo..hi].iter().map(|z| z.norm_sqr()).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut sorted = powers.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let gate = 0.5 * median;
    let first = powers.iter().position(|&p| p >= gate);
    let last = powers.iter().rposition(|&p| p >= gate);
    match (first, last) {
        (Some(f), Some(l)) => (f * block, ((l + 1) * block).min(samples.len())),
        _ => (0, 0),
    }
}
