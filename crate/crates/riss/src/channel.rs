//! Channel synthesis for both wavefront models, path loss, reflection
//! configurations, and the composed end-to-end gain.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::geometry::{self, AngleSet, GeometryError, Scenario};
use crate::C64;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("expected {expected} angle sets, got {got}")]
    AngleCount { expected: usize, got: usize },
    #[error("nonpositive distance")]
    NonpositiveDistance,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which wavefront approximation produced a channel set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    Far,
    Near,
}

/// Tx→surface matrices, surface→Rx vector, and per-link path-loss scalars.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub model: ChannelModel,
    /// One N×M matrix per transmitter.
    pub g: Vec<DMatrix<C64>>,
    /// Surface→Rx response, length N.
    pub h: DVector<C64>,
    /// Linear path loss of each Tx→surface link.
    pub tx_loss: Vec<f64>,
    /// Linear path loss of the surface→Rx link.
    pub rx_loss: f64,
}

/// Per-element reflection phases. `bits = 0` means continuous; otherwise every
/// phase sits on the 2^bits uniform lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionConfig {
    phases: Vec<f64>,
    bits: u8,
}

impl ReflectionConfig {
    /// Wraps every phase into [0, 2π). Continuous (bits = 0).
    pub fn from_phases(phases: Vec<f64>) -> ReflectionConfig {
        ReflectionConfig {
            phases: phases.into_iter().map(wrap_phase).collect(),
            bits: 0,
        }
    }

    pub fn identity(n: usize) -> ReflectionConfig {
        ReflectionConfig { phases: vec![0.0; n], bits: 0 }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Unit-modulus diagonal of Θ.
    pub fn diagonal(&self) -> DVector<C64> {
        DVector::from_iterator(self.phases.len(), self.phases.iter().map(|p| C64::from_polar(1.0, *p)))
    }

    /// Snap every phase to the nearest of 2^bits uniform levels; exact
    /// midpoints round down.
    pub fn quantized(&self, bits: u8) -> ReflectionConfig {
        assert!(bits >= 1, "quantization needs at least one bit");
        let levels = 1u64 << bits;
        let step = TAU / levels as f64;
        let phases = self
            .phases
            .iter()
            .map(|&p| {
                let t = p / step;
                let lower = t.floor();
                let frac = t - lower;
                let idx = if frac > 0.5 { lower + 1.0 } else { lower };
                let idx = (idx as i64).rem_euclid(levels as i64) as u64;
                idx as f64 * step
            })
            .collect();
        ReflectionConfig { phases, bits }
    }

    /// Level index of each phase on the 2^bits lattice; `None` when continuous.
    pub fn level_indices(&self) -> Option<Vec<u64>> {
        if self.bits == 0 {
            return None;
        }
        let step = TAU / (1u64 << self.bits) as f64;
        Some(self.phases.iter().map(|p| (p / step).round() as u64).collect())
    }

    /// Marks phases as members of the 2^bits lattice without re-snapping.
    /// Panics when some phase is off the lattice by more than 1e-9.
    pub fn with_bits(phases: Vec<f64>, bits: u8) -> ReflectionConfig {
        let cfg = ReflectionConfig::from_phases(phases);
        if bits == 0 {
            return cfg;
        }
        let step = TAU / (1u64 << bits) as f64;
        for p in &cfg.phases {
            let r = (p / step - (p / step).round()).abs();
            assert!(r < 1e-9, "phase {p} not on the {bits}-bit lattice");
        }
        ReflectionConfig { phases: cfg.phases, bits }
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    let mut v = p % TAU;
    if v < 0.0 {
        v += TAU;
    }
    // -1e-18 % τ can still round to τ
    if v >= TAU {
        v -= TAU;
    }
    v
}

/// Free-space loss (λ/(4πd))².
pub fn path_loss(wavelength: f64, distance: f64) -> Result<f64, ChannelError> {
    if distance <= 0.0 {
        return Err(ChannelError::NonpositiveDistance);
    }
    let a = wavelength / (4.0 * PI * distance);
    Ok(a * a)
}

/// Planar-wavefront channels: G_i = √(M_i·N)·α_i·β_iᵀ and h = √N·α_rx.
/// One path-loss scalar per link, evaluated at the node→surface-center range.
pub fn farfield_channels(
    scenario: &Scenario,
    tx_angles: &[AngleSet],
    rx_angles: &AngleSet,
) -> Result<ChannelSet, ChannelError> {
    if tx_angles.len() != scenario.tx.len() {
        return Err(ChannelError::AngleCount { expected: scenario.tx.len(), got: tx_angles.len() });
    }
    let n = scenario.n_passive();
    let lambda = scenario.wavelength();
    let ratio = scenario.spacing / lambda;
    let mut g = Vec::with_capacity(scenario.tx.len());
    let mut tx_loss = Vec::with_capacity(scenario.tx.len());
    for (node, ang) in scenario.tx.iter().zip(tx_angles) {
        let (t, p) = ang.increments_for_ratio(ratio);
        let alpha = geometry::steering_upa(t, p, scenario.nx, scenario.ny);
        let beta = geometry::steering_ula(ang.departure_increment(), node.antennas);
        let scale = ((node.antennas * n) as f64).sqrt();
        let mut m = DMatrix::zeros(n, node.antennas);
        for r in 0..n {
            for c in 0..node.antennas {
                m[(r, c)] = scale * alpha[r] * beta[c];
            }
        }
        g.push(m);
        tx_loss.push(path_loss(lambda, node.position.norm())?);
    }
    let (t, p) = rx_angles.increments_for_ratio(ratio);
    let alpha_rx = geometry::steering_upa(t, p, scenario.nx, scenario.ny);
    let h = alpha_rx * C64::new((n as f64).sqrt(), 0.0);
    Ok(ChannelSet {
        model: ChannelModel::Far,
        g,
        h,
        tx_loss,
        rx_loss: path_loss(lambda, scenario.rx.norm())?,
    })
}

/// Spherical-wavefront channels: every entry is exp(−i2π·d/λ) with d the exact
/// element-to-terminal distance. Rx-side entries use element→Rx distances.
pub fn nearfield_channels(scenario: &Scenario) -> Result<ChannelSet, ChannelError> {
    let table = geometry::distances(scenario)?;
    let n = scenario.n_passive();
    let lambda = scenario.wavelength();
    let mut g = Vec::with_capacity(scenario.tx.len());
    let mut tx_loss = Vec::with_capacity(scenario.tx.len());
    for (i, node) in scenario.tx.iter().enumerate() {
        let mut m = DMatrix::zeros(n, node.antennas);
        for c in 0..node.antennas {
            for r in 0..n {
                m[(r, c)] = C64::from_polar(1.0, -TAU * table.tx_to_surface[i][c][r] / lambda);
            }
        }
        g.push(m);
        tx_loss.push(path_loss(lambda, node.position.norm())?);
    }
    let h = DVector::from_iterator(
        n,
        table.surface_to_rx.iter().map(|d| C64::from_polar(1.0, -TAU * d / lambda)),
    );
    Ok(ChannelSet {
        model: ChannelModel::Near,
        g,
        h,
        tx_loss,
        rx_loss: path_loss(lambda, scenario.rx.norm())?,
    })
}

/// Matched transmit beamformer v = √P·β†/‖β‖; ‖v‖² = P and |βᵀv|² = P.
pub fn mrt_beamformer(departure_increment: f64, power: f64, m: usize) -> DVector<C64> {
    let beta = geometry::steering_ula(departure_increment, m);
    // β already has unit norm
    beta.map(|z| z.conj() * C64::new(power.sqrt(), 0.0))
}

/// End-to-end complex gain per transmitter:
/// g_i = √(ϱ_tx,i·ϱ_rx) · hᵀ Θ G_i v_i.
pub fn effective_gain(
    set: &ChannelSet,
    reflection: &ReflectionConfig,
    beamformers: &[DVector<C64>],
) -> Result<Vec<C64>, ChannelError> {
    if beamformers.len() != set.g.len() {
        return Err(ChannelError::Dimension(format!(
            "{} beamformers for {} transmitters",
            beamformers.len(),
            set.g.len()
        )));
    }
    if reflection.len() != set.h.len() {
        return Err(ChannelError::Dimension(format!(
            "reflection has {} phases, surface has {} elements",
            reflection.len(),
            set.h.len()
        )));
    }
    let theta = reflection.diagonal();
    let mut out = Vec::with_capacity(set.g.len());
    for (i, (gm, v)) in set.g.iter().zip(beamformers).enumerate() {
        if gm.ncols() != v.len() {
            return Err(ChannelError::Dimension(format!(
                "beamformer {i} has {} entries for {} antennas",
                v.len(),
                gm.ncols()
            )));
        }
        let gv = gm * v;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..set.h.len() {
            acc += set.h[k] * theta[k] * gv[k];
        }
        let scale = (set.tx_loss[i] * set.rx_loss).sqrt();
        out.push(acc * C64::new(scale, 0.0));
    }
    Ok(out)
}
