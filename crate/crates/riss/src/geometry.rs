//! Scenario geometry: element layouts, angles, distances, steering vectors.
//!
//! Coordinate frame: the surface lies in the x-y plane with its centroid at the
//! origin and normal +z. x is the horizontal axis (grid columns), y is height
//! (grid rows). Terminals in the co-planar setups sit in the y = 0 plane at
//! boresight angle `a` from the normal: position r·[sin a, 0, cos a].

use nalgebra::DVector;
pub use nalgebra::Vector3;
use std::f64::consts::PI;
use thiserror::Error;

use crate::{C64, SPEED_OF_LIGHT};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("element counts must be nonzero")]
    ZeroCount,
    #[error("coincident points: zero distance between {0} and element {1}")]
    CoincidentPoints(String, usize),
}

/// One transmitter node: phase center, antenna count, transmit power.
///
/// Antennas are treated as co-located at the phase center; departure-side array
/// response is handled by angle, so per-antenna positions are never needed for
/// the planar-wavefront model and the spherical-wavefront designs assume one
/// antenna per transmitter.
#[derive(Debug, Clone)]
pub struct TxNode {
    pub position: Vector3<f64>,
    pub antennas: usize,
    /// Linear transmit power.
    pub power: f64,
}

/// Geometry and radio constants shared by every module.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Passive grid rows (height axis).
    pub nx: usize,
    /// Passive grid columns (horizontal axis).
    pub ny: usize,
    /// Passive element spacing, meters.
    pub spacing: f64,
    /// Active sensing element count.
    pub na: usize,
    /// Active element spacing, meters.
    pub active_spacing: f64,
    /// Gap between the bottom grid row and the active row, meters.
    pub active_gap: f64,
    pub tx: Vec<TxNode>,
    pub rx: Vector3<f64>,
    /// Noise power at the receiver, linear.
    pub noise_power: f64,
    /// All terminals share the surface-center height (y = 0).
    pub coplanar: bool,
}

impl Scenario {
    /// Carrier wavelength, meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    /// Total passive element count N.
    pub fn n_passive(&self) -> usize {
        self.nx * self.ny
    }

    /// The measurement-campaign layout: 10x10 passive grid at half-wavelength
    /// spacing, 4 active elements at 0.6883 wavelength, terminals on a 3.5 m
    /// arc with the target at +10 degrees and the interferer at -20 degrees,
    /// single-antenna unit-power transmitters.
    pub fn reference(frequency: f64, center_distance: f64) -> Scenario {
        let lambda = SPEED_OF_LIGHT / frequency;
        let interferer = TxNode {
            position: tx_position_from_azimuth(-20f64.to_radians(), center_distance),
            antennas: 1,
            power: 1.0,
        };
        let target = TxNode {
            position: tx_position_from_azimuth(10f64.to_radians(), center_distance),
            antennas: 1,
            power: 1.0,
        };
        Scenario {
            frequency,
            nx: 10,
            ny: 10,
            spacing: lambda / 2.0,
            na: 4,
            active_spacing: 0.6883 * lambda,
            active_gap: lambda / 2.0,
            tx: vec![interferer, target],
            rx: Vector3::new(0.0, 0.0, center_distance),
            noise_power: 0.0,
            coplanar: true,
        }
    }

    /// Positions of the N passive elements, row-major (`k = row·ny + col`).
    pub fn passive_positions(&self) -> Vec<Vector3<f64>> {
        element_grid(self.nx, self.ny, self.spacing)
    }

    /// Positions of the Na active elements: a horizontal row centered below the
    /// grid, `active_gap` under the lowest passive row.
    pub fn active_positions(&self) -> Vec<Vector3<f64>> {
        let y = -((self.nx as f64 - 1.0) / 2.0 * self.spacing + self.active_gap);
        (0..self.na)
            .map(|m| {
                let x = (m as f64 - (self.na as f64 - 1.0) / 2.0) * self.active_spacing;
                Vector3::new(x, y, 0.0)
            })
            .collect()
    }

    /// Largest pairwise distance across all surface elements (aperture D).
    pub fn aperture(&self) -> f64 {
        let mut pts = self.passive_positions();
        pts.extend(self.active_positions());
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max((pts[i] - pts[j]).norm());
            }
        }
        best
    }

    /// Planar-wavefront validity radius 2D²/λ.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength()
    }

    /// True when `range` is beyond the Rayleigh distance, i.e. the planar-
    /// wavefront channel model is valid at that range.
    pub fn far_field_valid(&self, range: f64) -> bool {
        range > self.rayleigh_distance()
    }
}

/// Incidence/departure geometry for one link end.
///
/// `elevation` is the polar angle from the +y (height) axis; `azimuth` turns in
/// the x-z plane from +x toward +z. Propagation direction:
/// (sin el·cos az, cos el, sin el·sin az).
#[derive(Debug, Clone, Copy)]
pub struct AngleSet {
    pub azimuth: f64,
    pub elevation: f64,
    /// Departure angle at the transmitter's own array.
    pub departure: f64,
}

impl AngleSet {
    /// Height-constrained geometry: elevation exactly π/2, boresight angle `a`
    /// measured from the surface normal (+z) toward +x.
    pub fn coplanar_from_boresight(a: f64) -> AngleSet {
        AngleSet {
            azimuth: PI / 2.0 - a,
            elevation: PI / 2.0,
            departure: 0.0,
        }
    }

    /// Unit propagation direction from the surface toward the terminal.
    pub fn unit_direction(&self) -> Vector3<f64> {
        Vector3::new(
            self.elevation.sin() * self.azimuth.cos(),
            self.elevation.cos(),
            self.elevation.sin() * self.azimuth.sin(),
        )
    }

    /// Per-row and per-column phase increments (ϑ, φ) for half-wavelength
    /// element spacing: ϑ = π·cos(el), φ = π·sin(el)·cos(az).
    pub fn increments(&self) -> (f64, f64) {
        self.increments_for_ratio(0.5)
    }

    /// Increments for arbitrary spacing/wavelength ratio.
    pub fn increments_for_ratio(&self, d_over_lambda: f64) -> (f64, f64) {
        let s = 2.0 * PI * d_over_lambda;
        (
            s * self.elevation.cos(),
            s * self.elevation.sin() * self.azimuth.cos(),
        )
    }

    /// Departure-side linear-array increment ϖ = π·sin(departure).
    pub fn departure_increment(&self) -> f64 {
        PI * self.departure.sin()
    }
}

/// Distances from every Tx antenna to every passive element, and from every
/// passive element to the receiver. Indexing: `tx_to_surface[i][m][k]`.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    pub tx_to_surface: Vec<Vec<Vec<f64>>>,
    pub surface_to_rx: Vec<f64>,
}

/// Passive grid positions: row `a` (height), column `b` (horizontal),
/// `k = a·ny + b`, centroid at the origin.
pub fn element_grid(nx: usize, ny: usize, spacing: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(nx * ny);
    for a in 0..nx {
        for b in 0..ny {
            out.push(Vector3::new(
                (b as f64 - (ny as f64 - 1.0) / 2.0) * spacing,
                (a as f64 - (nx as f64 - 1.0) / 2.0) * spacing,
                0.0,
            ));
        }
    }
    out
}

/// Terminal position on the radius-`d_c` arc in the y = 0 plane at boresight
/// angle `a` from the surface normal.
pub fn tx_position_from_azimuth(a: f64, d_c: f64) -> Vector3<f64> {
    Vector3::new(d_c * a.sin(), 0.0, d_c * a.cos())
}

/// Linear-array response: k-th entry e^{i·k·increment}/√M. Unit norm.
pub fn steering_ula(increment: f64, m: usize) -> DVector<C64> {
    assert!(m >= 1, "array needs at least one antenna");
    let scale = 1.0 / (m as f64).sqrt();
    DVector::from_fn(m, |k, _| C64::from_polar(scale, increment * k as f64))
}

/// Planar-array response, Kronecker product of the row factor (increment ϑ)
/// and the column factor (increment φ). Entry `k = a·ny + b` equals
/// e^{i(ϑ·a + φ·b)}/√N. Unit norm.
pub fn steering_upa(theta: f64, phi: f64, nx: usize, ny: usize) -> DVector<C64> {
    assert!(nx >= 1 && ny >= 1, "grid needs at least one element");
    let n = nx * ny;
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |k, _| {
        let a = (k / ny) as f64;
        let b = (k % ny) as f64;
        C64::from_polar(scale, theta * a + phi * b)
    })
}

/// Euclidean distance tables per the scenario's positions.
pub fn distances(scenario: &Scenario) -> Result<DistanceTable, GeometryError> {
    if scenario.nx == 0 || scenario.ny == 0 {
        return Err(GeometryError::ZeroCount);
    }
    let elements = scenario.passive_positions();
    let mut tx_to_surface = Vec::with_capacity(scenario.tx.len());
    for (i, node) in scenario.tx.iter().enumerate() {
        let mut per_antenna = Vec::with_capacity(node.antennas);
        for _ in 0..node.antennas {
            let mut row = Vec::with_capacity(elements.len());
            for (k, e) in elements.iter().enumerate() {
                let d = (node.position - e).norm();
                if d == 0.0 {
                    return Err(GeometryError::CoincidentPoints(format!("tx {i}"), k));
                }
                row.push(d);
            }
            per_antenna.push(row);
        }
        tx_to_surface.push(per_antenna);
    }
    let mut surface_to_rx = Vec::with_capacity(elements.len());
    for (k, e) in elements.iter().enumerate() {
        let d = (scenario.rx - e).norm();
        if d == 0.0 {
            return Err(GeometryError::CoincidentPoints("rx".into(), k));
        }
        surface_to_rx.push(d);
    }
    Ok(DistanceTable { tx_to_surface, surface_to_rx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_element_grid_sits_at_origin() {
        let g = element_grid(1, 1, 0.042);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0], Vector3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn reference_spacing_matches_half_wavelength() {
        let sc = Scenario::reference(3.5e9, 3.5);
        // 42.83 mm element pitch at 3.5 GHz
        assert_abs_diff_eq!(sc.spacing * 1e3, 42.83, epsilon = 0.005);
        let g = sc.passive_positions();
        assert_abs_diff_eq!((g[1] - g[0]).norm() * 1e3, 42.83, epsilon = 0.005);
        assert_eq!(g.len(), 100);
    }

    #[test]
    fn two_by_two_pairwise_distances() {
        let d = 0.05;
        let g = element_grid(2, 2, d);
        let mut dists: Vec<f64> = vec![];
        for i in 0..4 {
            for j in i + 1..4 {
                dists.push((g[i] - g[j]).norm());
            }
        }
        for v in dists {
            let unit = v / d;
            assert!(
                (unit - 1.0).abs() < 1e-12 || (unit - 2f64.sqrt()).abs() < 1e-12,
                "unexpected pair distance {v}"
            );
        }
    }

    #[test]
    fn grid_centroid_is_origin_and_row_major() {
        let g = element_grid(3, 4, 0.1);
        let centroid: Vector3<f64> = g.iter().sum::<Vector3<f64>>() / 12.0;
        assert!(centroid.norm() < 1e-14);
        // k = a*ny + b: stepping b moves along x, stepping a moves along y
        assert_abs_diff_eq!(g[1].x - g[0].x, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1].y - g[0].y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[4].y - g[0].y, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[4].x - g[0].x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ula_zero_increment_is_uniform() {
        let b = steering_ula(0.0, 4);
        for k in 0..4 {
            assert_abs_diff_eq!(b[k].re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(b[k].im, 0.0, epsilon = 1e-15);
        }
        assert_eq!(steering_ula(1.3, 1).len(), 1);
        assert_abs_diff_eq!(steering_ula(1.3, 1)[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ula_phases_accumulate() {
        let w = PI / 3.0;
        let b = steering_ula(w, 8);
        for k in 0..8 {
            assert_relative_eq!(b[k].norm(), 1.0 / 8f64.sqrt(), max_relative = 1e-14);
            let expect = C64::from_polar(1.0 / 8f64.sqrt(), w * k as f64);
            assert_abs_diff_eq!((b[k] - expect).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn upa_entries_and_norm() {
        let a = steering_upa(0.4, -0.2, 10, 10);
        for x in 0..10 {
            for y in 0..10 {
                let e = C64::from_polar(0.1, 0.4 * x as f64 - 0.2 * y as f64);
                assert_abs_diff_eq!((a[x * 10 + y] - e).norm(), 0.0, epsilon = 1e-13);
            }
        }
        assert_relative_eq!(a.norm(), 1.0, max_relative = 1e-13);

        // zero increments: all-ones / sqrt(N) on any grid
        let z = steering_upa(0.0, 0.0, 3, 5);
        for k in 0..15 {
            assert_abs_diff_eq!((z[k] - C64::new(1.0 / 15f64.sqrt(), 0.0)).norm(), 0.0, epsilon = 1e-14);
        }

        // degenerate row axis reduces to the column factor
        let col = steering_upa(0.9, 0.3, 1, 6);
        let ula = steering_ula(0.3, 6);
        assert!((&col - &ula).norm() < 1e-13);
    }

    #[test]
    fn steering_unit_norm_random_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..32 {
            let az: f64 = rng.random_range(-PI..PI);
            let el: f64 = rng.random_range(0.0..PI);
            let set = AngleSet { azimuth: az, elevation: el, departure: 0.0 };
            let (t, p) = set.increments();
            let a = steering_upa(t, p, 6, 7);
            assert_relative_eq!(a.norm(), 1.0, max_relative = 1e-12);
            for k in 0..42 {
                assert_relative_eq!(a[k].norm(), 1.0 / 42f64.sqrt(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn coplanar_angles_kill_row_increment() {
        let set = AngleSet::coplanar_from_boresight(10f64.to_radians());
        let (t, p) = set.increments();
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p, PI * (10f64.to_radians()).sin(), epsilon = 1e-12);
        // direction points toward the terminal position on the arc
        let u = set.unit_direction();
        let pos = tx_position_from_azimuth(10f64.to_radians(), 3.5);
        assert!((pos / 3.5 - u).norm() < 1e-12);
    }

    #[test]
    fn arc_positions_match_trig() {
        let p0 = tx_position_from_azimuth(0.0, 3.5);
        assert!((p0 - Vector3::new(0.0, 0.0, 3.5)).norm() < 1e-15);
        let p10 = tx_position_from_azimuth(10f64.to_radians(), 3.5);
        assert_abs_diff_eq!(p10.x, 0.6078, epsilon = 5e-4);
        assert_abs_diff_eq!(p10.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p10.z, 3.4468, epsilon = 5e-4);
        let pm20 = tx_position_from_azimuth(-20f64.to_radians(), 3.5);
        assert_abs_diff_eq!(pm20.x, -1.1971, epsilon = 5e-4);
        assert_abs_diff_eq!(pm20.z, 3.2889, epsilon = 5e-4);
    }

    #[test]
    fn plane_wave_phases_match_positions() {
        // steering increments must agree with physical path-length differences
        // exp(-i2π d_k/λ) up to one global phase
        let sc = Scenario::reference(3.5e9, 3.5e4); // push terminal deep into far field
        let lambda = sc.wavelength();
        let set = AngleSet::coplanar_from_boresight(10f64.to_radians());
        let (t, p) = set.increments();
        let alpha = steering_upa(t, p, sc.nx, sc.ny);
        let pos = tx_position_from_azimuth(10f64.to_radians(), 3.5e4);
        let elements = sc.passive_positions();
        let mut max_err = 0.0f64;
        let ref_phase = alpha[0].arg() + 2.0 * PI * (pos - elements[0]).norm() / lambda;
        for k in 0..sc.n_passive() {
            let physical = -2.0 * PI * (pos - elements[k]).norm() / lambda;
            let model = alpha[k].arg();
            let mut diff = (model - physical - ref_phase) % (2.0 * PI);
            if diff > PI {
                diff -= 2.0 * PI;
            }
            if diff < -PI {
                diff += 2.0 * PI;
            }
            max_err = max_err.max(diff.abs());
        }
        assert!(max_err < 1e-3, "steering/position phase mismatch {max_err}");
    }

    #[test]
    fn distance_table_matches_brute_force() {
        let sc = Scenario::reference(3.5e9, 3.5);
        let t = distances(&sc).unwrap();
        // center of a 10x10 grid is off-lattice; nearest elements sit half a
        // pitch away, so the center-element distance is close to d_c
        let mid = t.surface_to_rx[4 * 10 + 4];
        assert_abs_diff_eq!(mid, 3.5, epsilon = 2e-3);
        let elements = sc.passive_positions();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = rng.random_range(0..100);
            let i = rng.random_range(0..sc.tx.len());
            let manual = ((sc.tx[i].position.x - elements[k].x).powi(2)
                + (sc.tx[i].position.y - elements[k].y).powi(2)
                + (sc.tx[i].position.z - elements[k].z).powi(2))
            .sqrt();
            assert_relative_eq!(t.tx_to_surface[i][0][k], manual, max_relative = 1e-14);
        }
        for v in t.surface_to_rx.iter().chain(t.tx_to_surface[0][0].iter()) {
            assert!(*v > 0.0);
        }
    }

    #[test]
    fn coincident_point_rejected() {
        let mut sc = Scenario::reference(3.5e9, 3.5);
        sc.rx = sc.passive_positions()[17];
        assert!(distances(&sc).is_err());
    }

    #[test]
    fn coplanar_terminals_share_height() {
        let sc = Scenario::reference(3.5e9, 3.5);
        assert!(sc.coplanar);
        for node in &sc.tx {
            assert_eq!(node.position.y, 0.0);
        }
        assert_eq!(sc.rx.y, 0.0);
        let centroid: Vector3<f64> =
            sc.passive_positions().iter().sum::<Vector3<f64>>() / sc.n_passive() as f64;
        assert!(centroid.y.abs() < 1e-14);
    }

    #[test]
    fn far_field_predicate_false_at_reference_range() {
        let sc = Scenario::reference(3.5e9, 3.5);
        // aperture is the grid diagonal; the active row tucks inside it
        let d = sc.aperture();
        assert!(d > 0.5 && d < 0.65, "aperture {d}");
        assert!(!sc.far_field_valid(3.5));
        assert!(sc.far_field_valid(35.0));
    }

    #[test]
    fn active_row_spacing_and_offset() {
        let sc = Scenario::reference(3.5e9, 3.5);
        let a = sc.active_positions();
        assert_eq!(a.len(), 4);
        for m in 0..3 {
            assert_relative_eq!((a[m + 1] - a[m]).norm(), 0.6883 * sc.wavelength(), max_relative = 1e-12);
        }
        let lowest_row = -(4.5 * sc.spacing);
        for p in &a {
            assert_relative_eq!(p.y, lowest_row - sc.active_gap, max_relative = 1e-12);
            assert_eq!(p.z, 0.0);
        }
        // centered under the grid
        assert_abs_diff_eq!(a.iter().map(|p| p.x).sum::<f64>(), 0.0, epsilon = 1e-14);
    }
}
