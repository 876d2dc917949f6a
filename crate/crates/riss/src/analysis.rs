//! Reflected beampatterns over angle grids, near-field probing and 2-D
//! heatmaps, SINR, and the normalization used by figures and audits.

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::C64;
use crate::channel::{ReflectionConfig, path_loss};
use crate::geometry::{AngleSet, Scenario, steering_upa};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("angle grid is empty")]
    EmptyGrid,
    #[error("angle grid must be strictly increasing at index {0}")]
    GridNotIncreasing(usize),
    #[error("probe coincides with element {0}")]
    CoincidentProbe(usize),
    #[error("{0}")]
    BadParameter(String),
    #[error("transmitter index {0} out of range")]
    BadIndex(usize),
}

#[derive(Debug, Clone)]
pub struct Marker {
    pub angle_deg: f64,
    pub label: String,
}

impl Marker {
    pub fn new(angle_deg: f64, label: &str) -> Marker {
        Marker { angle_deg, label: label.to_string() }
    }
}

/// Array-factor gain over a scan grid, normalized so the peak sits at 0 dB.
#[derive(Debug, Clone)]
pub struct BeampatternResult {
    pub angles_deg: Vec<f64>,
    /// Linear gains, peak 1.
    pub gains: Vec<f64>,
    /// 10·log10 of the linear gains, peak 0.
    pub gains_db: Vec<f64>,
    /// Peak linear gain before normalization.
    pub reference: f64,
    pub markers: Vec<Marker>,
}

impl BeampatternResult {
    /// Index of the strongest grid point.
    pub fn peak_index(&self) -> usize {
        self.gains
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Linear gain at the grid point closest to `angle_deg`.
    pub fn gain_at(&self, angle_deg: f64) -> f64 {
        let idx = self
            .angles_deg
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - angle_deg).abs().total_cmp(&(b.1 - angle_deg).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.gains[idx]
    }
}

/// Evenly spaced degrees, inclusive of both ends.
pub fn degree_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// −90° to 90° at 0.1°, matching the direction-finding spectrum grid.
pub fn default_angle_grid() -> Vec<f64> {
    degree_grid(-90.0, 90.0, 0.1)
}

fn check_grid(grid: &[f64]) -> Result<(), AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    for i in 1..grid.len() {
        if grid[i] <= grid[i - 1] {
            return Err(AnalysisError::GridNotIncreasing(i));
        }
    }
    Ok(())
}

/// Peak-normalizes in place; returns the reference maximum. Idempotent on
/// already-normalized data.
pub fn normalize_peak(values: &mut [f64]) -> f64 {
    let peak = values.iter().copied().fold(f64::MIN, f64::max);
    if peak > 0.0 {
        for v in values.iter_mut() {
            *v /= peak;
        }
    }
    peak
}

const DB_FLOOR: f64 = -300.0;

fn to_db(linear: f64) -> f64 {
    if linear > 0.0 { (10.0 * linear.log10()).max(DB_FLOOR) } else { DB_FLOOR }
}

/// Reflected array-factor pattern |1ᵀ Θ_G α(a)|² over coplanar scan angles.
///
/// `fold` absorbs one link end into the diagonal: with `Some(rx)` the pattern
/// is |α_rxᵀ Θ α(a)|² up to scale; with `None` the reflection is taken as the
/// already-folded profile Θ_G.
pub fn farfield_beampattern(
    reflection: &ReflectionConfig,
    fold: Option<&AngleSet>,
    nx: usize,
    ny: usize,
    grid_deg: &[f64],
    markers: Vec<Marker>,
) -> Result<BeampatternResult, AnalysisError> {
    check_grid(grid_deg)?;
    let n = nx * ny;
    if reflection.phases().len() != n {
        return Err(AnalysisError::BadParameter(format!(
            "reflection holds {} phases for an {nx}×{ny} surface",
            reflection.phases().len()
        )));
    }
    let mut profile: Vec<f64> = reflection.phases().to_vec();
    if let Some(angles) = fold {
        let (t, p) = angles.increments();
        let folded = steering_upa(t, p, nx, ny);
        for (phase, f) in profile.iter_mut().zip(folded.iter()) {
            *phase += f.arg();
        }
    }
    let weights: Vec<C64> = profile.iter().map(|&p| C64::from_polar(1.0, p)).collect();

    let mut gains: Vec<f64> = grid_deg
        .iter()
        .map(|a| {
            let angles = AngleSet::coplanar_from_boresight(a.to_radians());
            let (t, p) = angles.increments();
            let alpha = steering_upa(t, p, nx, ny);
            let mut acc = C64::new(0.0, 0.0);
            for (w, s) in weights.iter().zip(alpha.iter()) {
                acc += w * s;
            }
            acc.norm_sqr()
        })
        .collect();
    let reference = normalize_peak(&mut gains);
    let gains_db = gains.iter().map(|&g| to_db(g)).collect();
    Ok(BeampatternResult { angles_deg: grid_deg.to_vec(), gains, gains_db, reference, markers })
}

/// Spherical-wavefront field at a probe point:
/// Σ_k exp(−i·2π(d_src,k + d_k,probe)/λ + iφ_k), optionally weighted by the
/// per-segment free-space amplitude loss.
pub fn nearfield_probe(
    phases: &[f64],
    elements: &[Vector3<f64>],
    source: &Vector3<f64>,
    probe: &Vector3<f64>,
    wavelength: f64,
    with_loss: bool,
) -> Result<C64, AnalysisError> {
    if phases.len() != elements.len() {
        return Err(AnalysisError::BadParameter(format!(
            "{} phases for {} elements",
            phases.len(),
            elements.len()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (k, e) in elements.iter().enumerate() {
        let d_src = (source - e).norm();
        let d_probe = (probe - e).norm();
        if d_probe < 1e-9 || d_src < 1e-9 {
            return Err(AnalysisError::CoincidentProbe(k));
        }
        let mut amp = 1.0;
        if with_loss {
            let a = path_loss(wavelength, d_src)
                .and_then(|ls| path_loss(wavelength, d_probe).map(|lp| (ls * lp).sqrt()))
                .map_err(|e| AnalysisError::BadParameter(e.to_string()))?;
            amp = a;
        }
        let arg = phases[k] - std::f64::consts::TAU * (d_src + d_probe) / wavelength;
        acc += C64::from_polar(amp, arg);
    }
    Ok(acc)
}

/// Rectangular probe grid in the y = 0 plane. Defaults cover the surface
/// neighborhood: x ∈ [−4, 4] m, z ∈ [0.2, 5] m, 201×201 points.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub z_points: usize,
}

impl Default for GridSpec {
    fn default() -> GridSpec {
        GridSpec { x_min: -4.0, x_max: 4.0, x_points: 201, z_min: 0.2, z_max: 5.0, z_points: 201 }
    }
}

impl GridSpec {
    fn axis(min: f64, max: f64, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![min];
        }
        let step = (max - min) / (points as f64 - 1.0);
        (0..points).map(|i| min + i as f64 * step).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        GridSpec::axis(self.x_min, self.x_max, self.x_points)
    }

    pub fn zs(&self) -> Vec<f64> {
        GridSpec::axis(self.z_min, self.z_max, self.z_points)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.x_points == 0 || self.z_points == 0 {
            return Err(AnalysisError::BadParameter("grid needs points".into()));
        }
        if self.x_max < self.x_min || self.z_max < self.z_min {
            return Err(AnalysisError::BadParameter("grid bounds reversed".into()));
        }
        Ok(())
    }
}

/// |field| over the grid; `magnitude[(ix, iz)]` pairs with `xs[ix]`, `zs[iz]`.
#[derive(Debug, Clone)]
pub struct HeatmapResult {
    pub xs: Vec<f64>,
    pub zs: Vec<f64>,
    pub magnitude: DMatrix<f64>,
    /// Surface centroid in the (x, z) plane.
    pub surface: (f64, f64),
}

/// Probes the field from one transmitter across the grid.
pub fn heatmap(
    reflection: &ReflectionConfig,
    scenario: &Scenario,
    source_idx: usize,
    spec: &GridSpec,
    with_loss: bool,
) -> Result<HeatmapResult, AnalysisError> {
    spec.validate()?;
    let source = scenario
        .tx
        .get(source_idx)
        .ok_or(AnalysisError::BadIndex(source_idx))?
        .position;
    let elements = scenario.passive_positions();
    let wavelength = crate::SPEED_OF_LIGHT / scenario.frequency;
    let xs = spec.xs();
    let zs = spec.zs();
    let mut magnitude = DMatrix::<f64>::zeros(xs.len(), zs.len());
    for (ix, &x) in xs.iter().enumerate() {
        for (iz, &z) in zs.iter().enumerate() {
            let probe = Vector3::new(x, 0.0, z);
            let field = nearfield_probe(
                reflection.phases(),
                &elements,
                &source,
                &probe,
                wavelength,
                with_loss,
            )?;
            magnitude[(ix, iz)] = field.norm();
        }
    }
    Ok(HeatmapResult { xs, zs, magnitude, surface: (0.0, 0.0) })
}

/// |g_t|²·P / (|g_i|²·P + σ0²) as (linear, dB).
pub fn sinr(
    gain_target: C64,
    gain_interferer: Option<C64>,
    power: f64,
    noise_power: f64,
) -> Result<(f64, f64), AnalysisError> {
    if noise_power <= 0.0 {
        return Err(AnalysisError::BadParameter("noise power must be positive".into()));
    }
    let interference = gain_interferer.map_or(0.0, |g| g.norm_sqr() * power);
    let linear = gain_target.norm_sqr() * power / (interference + noise_power);
    Ok((linear, 10.0 * linear.log10()))
}

pub fn beampattern_csv(pattern: &BeampatternResult) -> String {
    let mut out = String::from("angle_deg,gain_db\n");
    for (a, g) in pattern.angles_deg.iter().zip(&pattern.gains_db) {
        out.push_str(&format!("{a:.6},{g:.6}\n"));
    }
    out
}

pub fn heatmap_csv(map: &HeatmapResult) -> String {
    let mut out = String::from("x,z,magnitude\n");
    for (ix, x) in map.xs.iter().enumerate() {
        for (iz, z) in map.zs.iter().enumerate() {
            out.push_str(&format!("{x:.6},{z:.6},{:.6e}\n", map.magnitude[(ix, iz)]));
        }
    }
    out
}
