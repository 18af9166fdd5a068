//! Geometric mmWave channel generation for the BS → reflector → UE cascade.
//!
//! Large-scale gain follows a log-distance model anchored at the 1 m free-space
//! gain; small-scale fading is Rician on LOS links and Rayleigh otherwise, with
//! the LOS component built from uniform planar array steering vectors.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Point3 = Vector3<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Axis-aligned box standing on the ground plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Building {
    /// Footprint center; the z component is ignored.
    pub center: Point3,
    /// Full footprint widths along x and y.
    pub extents: (f64, f64),
    pub height: f64,
}

impl Building {
    fn x_range(&self) -> (f64, f64) {
        let half = self.extents.0 / 2.0;
        (self.center.x - half, self.center.x + half)
    }

    fn y_range(&self) -> (f64, f64) {
        let half = self.extents.1 / 2.0;
        (self.center.y - half, self.center.y + half)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGeometry {
    pub bs_position: Point3,
    pub building: Option<Building>,
    /// Probability that a body stands close enough to a UE to be a potential blocker.
    pub ue_blockage_probability: f64,
    /// A present blocker subtends an elevation drawn uniformly from this range
    /// (degrees); the reflector link is cut when the reflector sits below it.
    /// `(0, 90)` gives blockage probability `p·(1 − elevation/90°)`.
    pub blocker_elevation_deg: (f64, f64),
    /// Probability that all UEs share one blockage draw in a slot. Marginal
    /// per-UE blockage probabilities do not depend on it.
    pub blockage_correlation: f64,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        SceneGeometry {
            bs_position: Point3::new(0.0, 0.0, 20.0),
            building: Some(Building {
                center: Point3::new(10.0, 0.0, 0.0),
                extents: (4.0, 40.0),
                height: 18.0,
            }),
            ue_blockage_probability: 1.0,
            blocker_elevation_deg: (45.0, 85.0),
            blockage_correlation: 1.0,
        }
    }
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = &self.building {
            if !(b.height > 0.0) {
                return Err(Error::field("building_height", "must be > 0"));
            }
            if !(b.extents.0 > 0.0 && b.extents.1 > 0.0) {
                return Err(Error::field("building_extents", "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.ue_blockage_probability) {
            return Err(Error::field(
                "ue_blockage_probability",
                "must lie in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.blockage_correlation) {
            return Err(Error::field("blockage_correlation", "must lie in [0, 1]"));
        }
        let (lo, hi) = self.blocker_elevation_deg;
        if !(0.0 <= lo && lo < hi && hi <= 90.0) {
            return Err(Error::field(
                "blocker_elevation_deg",
                "need 0 <= low < high <= 90",
            ));
        }
        Ok(())
    }

    /// Probability that the reflector → UE link is body-blocked at the given
    /// elevation of the reflector as seen from the UE.
    pub fn body_blockage_probability(&self, elevation_deg: f64) -> f64 {
        let (lo, hi) = self.blocker_elevation_deg;
        let covered = ((hi - elevation_deg) / (hi - lo)).clamp(0.0, 1.0);
        self.ue_blockage_probability * covered
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    pub element_spacing: f64,
    pub carrier_frequency: f64,
}

impl ArrayGeometry {
    pub fn half_wavelength(rows: usize, cols: usize, carrier_frequency: f64) -> Self {
        ArrayGeometry {
            rows,
            cols,
            element_spacing: wavelength(carrier_frequency) / 2.0,
            carrier_frequency,
        }
    }

    /// Smallest near-square `rows × cols` factorisation of `elements`.
    pub fn square(elements: usize, carrier_frequency: f64) -> Self {
        let mut rows = (elements as f64).sqrt().floor() as usize;
        while rows > 1 && elements % rows != 0 {
            rows -= 1;
        }
        let rows = rows.max(1);
        Self::half_wavelength(rows, elements / rows, carrier_frequency)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// Uniform planar array steering vector, row-major element order. Columns see
/// `sin(az)·cos(el)` and rows see `sin(el)`.
pub fn array_response(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> DVector<C64> {
    let k = 2.0 * std::f64::consts::PI * geom.element_spacing / wavelength(geom.carrier_frequency);
    let horizontal = azimuth.sin() * elevation.cos();
    let vertical = elevation.sin();
    DVector::from_fn(geom.len(), |idx, _| {
        let (r, c) = (idx / geom.cols, idx % geom.cols);
        let phase = k * (c as f64 * horizontal + r as f64 * vertical);
        C64::from_polar(1.0, phase)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathLossModel {
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_penalty_db: f64,
    /// Extra loss when the building itself sits on the link. `inf` removes the link.
    pub building_loss_db: f64,
    /// Rician factor of the reflector → UE links.
    pub rician_k_db: f64,
    /// Rician factor of the BS → reflector link.
    pub backhaul_rician_k_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            los_exponent: 2.0,
            nlos_exponent: 3.3,
            nlos_penalty_db: 20.0,
            building_loss_db: 60.0,
            rician_k_db: 10.0,
            backhaul_rician_k_db: 10.0,
        }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl PathLossModel {
    /// Linear power gain of a link of the given length.
    pub fn gain(&self, distance: f64, is_los: bool, frequency: f64) -> Result<f64> {
        if !(distance > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "link distance must be positive, got {distance}"
            )));
        }
        let anchor = (wavelength(frequency) / (4.0 * std::f64::consts::PI)).powi(2);
        Ok(if is_los {
            anchor * distance.powf(-self.los_exponent)
        } else {
            anchor * distance.powf(-self.nlos_exponent) / db_to_linear(self.nlos_penalty_db)
        })
    }

    fn building_factor(&self) -> f64 {
        if self.building_loss_db.is_infinite() {
            0.0
        } else {
            1.0 / db_to_linear(self.building_loss_db)
        }
    }

    fn rician_k(&self) -> f64 {
        db_to_linear(self.rician_k_db)
    }

    fn backhaul_rician_k(&self) -> f64 {
        db_to_linear(self.backhaul_rician_k_db)
    }
}

/// `path_gain` with the default exponents.
pub fn path_gain(distance: f64, is_los: bool, frequency: f64) -> Result<f64> {
    PathLossModel::default().gain(distance, is_los, frequency)
}

/// True iff the open segment `p1–p2` avoids the building volume strictly below
/// its roof. Touching the roof counts as visible.
pub fn los_visible(p1: &Point3, p2: &Point3, scene: &SceneGeometry) -> bool {
    let Some(b) = &scene.building else {
        return true;
    };
    let d = p2 - p1;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (start, delta, (lo, hi)) in [(p1.x, d.x, b.x_range()), (p1.y, d.y, b.y_range())] {
        if delta == 0.0 {
            if start < lo || start > hi {
                return true;
            }
        } else {
            let (a, c) = ((lo - start) / delta, (hi - start) / delta);
            let (a, c) = if a < c { (a, c) } else { (c, a) };
            t0 = t0.max(a);
            t1 = t1.min(c);
        }
    }
    if t0 > t1 {
        return true;
    }
    let z_min = (p1.z + t0 * d.z).min(p1.z + t1 * d.z);
    z_min >= b.height
}

fn direction_angles(from: &Point3, to: &Point3) -> (f64, f64) {
    let d = to - from;
    let horizontal = d.x.hypot(d.y);
    (d.y.atan2(d.x), d.z.atan2(horizontal))
}

/// Elevation (degrees) of `above` as seen from `ground`.
pub fn elevation_deg(ground: &Point3, above: &Point3) -> f64 {
    direction_angles(ground, above).1.to_degrees()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// BS → reflector, `N × M`.
    pub g: DMatrix<C64>,
    /// Reflector → UE `k`, one length-`N` row per UE.
    pub h: Vec<DVector<C64>>,
    pub los_flags: Vec<bool>,
    pub bs_ir_los: bool,
}

#[derive(Clone, Debug)]
pub struct EffectiveCsi {
    /// Cascaded `N × M` channel per UE, `diag(h_k)·G`.
    pub d: Vec<DMatrix<C64>>,
    pub noise_power: f64,
    pub bandwidth: f64,
}

impl EffectiveCsi {
    pub fn ue_count(&self) -> usize {
        self.d.len()
    }

    pub fn reflector_len(&self) -> usize {
        self.d.first().map_or(0, |d| d.nrows())
    }

    pub fn antenna_count(&self) -> usize {
        self.d.first().map_or(0, |d| d.ncols())
    }
}

pub fn effective_csi(
    real: &ChannelRealization,
    noise_power: f64,
    bandwidth: f64,
) -> Result<EffectiveCsi> {
    let n = real.g.nrows();
    let mut d = Vec::with_capacity(real.h.len());
    for (k, h) in real.h.iter().enumerate() {
        if h.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "h[{k}] has {} entries, G has {n} rows",
                h.len()
            )));
        }
        let mut dk = real.g.clone();
        for (mut row, hn) in dk.row_iter_mut().zip(h.iter()) {
            row *= *hn;
        }
        d.push(dk);
    }
    Ok(EffectiveCsi {
        d,
        noise_power,
        bandwidth,
    })
}

#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub scene: SceneGeometry,
    pub bs_array: ArrayGeometry,
    pub ir_array: ArrayGeometry,
    pub path_loss: PathLossModel,
}

impl ChannelModel {
    pub fn frequency(&self) -> f64 {
        self.bs_array.carrier_frequency
    }

    /// Link gain including the building penalty when the building cuts the path.
    fn link_gain(&self, distance: f64, los: bool, geometric_clear: bool) -> Result<f64> {
        let g = self.path_loss.gain(distance, los, self.frequency())?;
        Ok(if geometric_clear {
            g
        } else {
            g * self.path_loss.building_factor()
        })
    }

    /// Draws one coherence slot. Every call consumes the same number of random
    /// variates for fixed `M`, `N`, `K`, so streams stay aligned across callers.
    pub fn sample_channels<R: Rng + ?Sized>(
        &self,
        ir_position: &Point3,
        ue_positions: &[Point3],
        rng: &mut R,
    ) -> Result<ChannelRealization> {
        let (m, n) = (self.bs_array.len(), self.ir_array.len());
        let lambda = wavelength(self.frequency());
        let kf = self.path_loss.rician_k();
        let (los_w, nlos_w) = ((kf / (kf + 1.0)).sqrt(), (1.0 / (kf + 1.0)).sqrt());

        let kg = self.path_loss.backhaul_rician_k();
        let (g_los_w, g_nlos_w) = ((kg / (kg + 1.0)).sqrt(), (1.0 / (kg + 1.0)).sqrt());
        let shared_draw: f64 = rng.random();
        let use_shared = rng.random::<f64>() < self.scene.blockage_correlation;
        let blockage_draws: Vec<f64> = (0..ue_positions.len())
            .map(|_| rng.random::<f64>())
            .map(|u| if use_shared { shared_draw } else { u })
            .collect();

        let bs = &self.scene.bs_position;
        let bs_ir_los = los_visible(bs, ir_position, &self.scene);
        let d1 = (ir_position - bs).norm();
        let g_gain = self.link_gain(d1, bs_ir_los, bs_ir_los)?.sqrt();
        let scatter = DMatrix::from_fn(n, m, |_, _| complex_normal(rng));
        let g = if bs_ir_los {
            let (az_d, el_d) = direction_angles(bs, ir_position);
            let (az_a, el_a) = direction_angles(ir_position, bs);
            let a_bs = array_response(&self.bs_array, az_d, el_d);
            let a_ir = array_response(&self.ir_array, az_a, el_a);
            let phase = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * d1 / lambda);
            (a_ir * a_bs.adjoint() * (phase * g_los_w) + scatter * C64::from(g_nlos_w)) * C64::from(g_gain)
        } else {
            scatter * C64::from(g_gain)
        };

        let mut h = Vec::with_capacity(ue_positions.len());
        let mut los_flags = Vec::with_capacity(ue_positions.len());
        for (ue, u) in ue_positions.iter().zip(&blockage_draws) {
            let clear = los_visible(ir_position, ue, &self.scene);
            let elev = elevation_deg(ue, ir_position);
            let body_blocked = *u < self.scene.body_blockage_probability(elev);
            let los = clear && !body_blocked;
            let d2 = (ue - ir_position).norm();
            let amp = self.link_gain(d2, los, clear)?.sqrt();
            let scatter = DVector::from_fn(n, |_, _| complex_normal(rng));
            let hk = if los {
                let (az, el) = direction_angles(ir_position, ue);
                let a = array_response(&self.ir_array, az, el).map(|x| x.conj());
                let phase = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * d2 / lambda);
                (a * (phase * los_w) + scatter * C64::from(nlos_w)) * C64::from(amp)
            } else {
                scatter * C64::from(amp)
            };
            h.push(hk);
            los_flags.push(los);
        }

        Ok(ChannelRealization {
            g,
            h,
            los_flags,
            bs_ir_los,
        })
    }

    /// BS → UE channels for the no-reflector baseline. Returns one length-`M`
    /// row per UE plus the geometric visibility of each link.
    pub fn sample_direct<R: Rng + ?Sized>(
        &self,
        ue_positions: &[Point3],
        rng: &mut R,
    ) -> Result<(Vec<DVector<C64>>, Vec<bool>)> {
        let m = self.bs_array.len();
        let lambda = wavelength(self.frequency());
        let kf = self.path_loss.rician_k();
        let (los_w, nlos_w) = ((kf / (kf + 1.0)).sqrt(), (1.0 / (kf + 1.0)).sqrt());
        let bs = &self.scene.bs_position;
        let mut rows = Vec::with_capacity(ue_positions.len());
        let mut flags = Vec::with_capacity(ue_positions.len());
        for ue in ue_positions {
            let clear = los_visible(bs, ue, &self.scene);
            let d = (ue - bs).norm();
            let amp = self.link_gain(d, clear, clear)?.sqrt();
            let scatter = DVector::from_fn(m, |_, _| complex_normal(rng));
            let row = if clear {
                let (az, el) = direction_angles(bs, ue);
                let a = array_response(&self.bs_array, az, el).map(|x| x.conj());
                let phase = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * d / lambda);
                (a * (phase * los_w) + scatter * C64::from(nlos_w)) * C64::from(amp)
            } else {
                scatter * C64::from(amp)
            };
            rows.push(row);
            flags.push(clear);
        }
        Ok((rows, flags))
    }
}

/// CSI for the direct link seen through a single pass-through "element":
/// each `D_k` is the `1 × M` BS → UE row and the reflection vector is `[1]`.
pub fn direct_csi(rows: &[DVector<C64>], noise_power: f64, bandwidth: f64) -> EffectiveCsi {
    EffectiveCsi {
        d: rows
            .iter()
            .map(|r| DMatrix::from_row_slice(1, r.len(), r.as_slice()))
            .collect(),
        noise_power,
        bandwidth,
    }
}

fn ula<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<C64> {
    let phase = std::f64::consts::PI * rng.random_range(-1.0..1.0f64);
    DVector::from_fn(len, |i, _| C64::from_polar(1.0, phase * i as f64))
}

fn rician_vector<R: Rng + ?Sized>(len: usize, k_factor: f64, rng: &mut R) -> DVector<C64> {
    let los = ula(len, rng);
    let (a, b) = ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt());
    DVector::from_fn(len, |i, _| los[i] * a + complex_normal(rng) * b)
}

/// Unit-gain Rician instance without geometry: uniform-linear-array LOS
/// components at random angles plus unit-variance scatter.
pub fn synthetic_csi<R: Rng + ?Sized>(
    antennas: usize,
    elements: usize,
    ues: usize,
    k_factor: f64,
    noise_power: f64,
    rng: &mut R,
) -> EffectiveCsi {
    let (a, b) = ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt());
    let rx = ula(elements, rng);
    let tx = ula(antennas, rng);
    let g = DMatrix::from_fn(elements, antennas, |r, c| {
        rx[r] * tx[c].conj() * a + complex_normal(rng) * b
    });
    let real = ChannelRealization {
        g,
        h: (0..ues).map(|_| rician_vector(elements, k_factor, rng)).collect(),
        los_flags: vec![true; ues],
        bs_ir_los: true,
    };
    effective_csi(&real, noise_power, 1.0).expect("shapes agree by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(scene: SceneGeometry) -> ChannelModel {
        ChannelModel {
            scene,
            bs_array: ArrayGeometry::half_wavelength(2, 2, 30e9),
            ir_array: ArrayGeometry::half_wavelength(2, 3, 30e9),
            path_loss: PathLossModel::default(),
        }
    }

    #[test]
    fn single_element_response_is_one() {
        let g = ArrayGeometry::half_wavelength(1, 1, 30e9);
        let a = array_response(&g, 1.234, -0.4);
        assert_eq!(a.len(), 1);
        assert_relative_eq!(a[0].re, 1.0);
        assert_relative_eq!(a[0].im, 0.0);
    }

    #[test]
    fn broadside_response_is_all_ones() {
        let g = ArrayGeometry::half_wavelength(4, 4, 30e9);
        let a = array_response(&g, 0.0, 0.0);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|x| (x - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn two_by_two_response_matches_hand_phases() {
        // Half-wavelength spacing: phase = π·(c·sin(az)·cos(el) + r·sin(el)).
        let g = ArrayGeometry::half_wavelength(2, 2, 30e9);
        let az = std::f64::consts::FRAC_PI_6;
        let a = array_response(&g, az, 0.0);
        let expected = [0.0, std::f64::consts::PI * 0.5, 0.0, std::f64::consts::PI * 0.5];
        for (x, p) in a.iter().zip(expected) {
            assert!((x - C64::from_polar(1.0, p)).norm() < 1e-12);
            assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn path_gain_anchor_and_power_law() {
        let f = 30e9;
        let anchor = (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * f)).powi(2);
        assert_relative_eq!(path_gain(1.0, true, f).unwrap(), anchor, max_relative = 1e-15);
        let d = 37.0;
        assert_relative_eq!(
            path_gain(2.0 * d, true, f).unwrap(),
            path_gain(d, true, f).unwrap() / 4.0,
            max_relative = 1e-12
        );
        // (299792458 / (4π·30e9))² / 100² evaluated independently.
        assert_relative_eq!(
            path_gain(100.0, true, f).unwrap(),
            6.3238e-11,
            max_relative = 1e-4
        );
        assert!(path_gain(5.0, false, f).unwrap() < path_gain(5.0, true, f).unwrap());
    }

    #[test]
    fn path_gain_rejects_zero_distance() {
        assert!(matches!(
            path_gain(0.0, true, 30e9),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn building_blocks_direct_link() {
        let scene = SceneGeometry::default();
        let bs = Point3::new(0.0, 0.0, 20.0);
        let ue = Point3::new(20.0, 0.0, 0.0);
        assert!(!los_visible(&bs, &ue, &scene));
        assert!(!los_visible(&ue, &bs, &scene));
    }

    #[test]
    fn empty_scene_is_visible() {
        let scene = SceneGeometry {
            building: None,
            ..SceneGeometry::default()
        };
        assert!(los_visible(
            &Point3::new(0.0, 0.0, 20.0),
            &Point3::new(20.0, 0.0, 0.0),
            &scene
        ));
    }

    #[test]
    fn roof_grazing_ray_is_visible() {
        let scene = SceneGeometry::default();
        let a = Point3::new(0.0, 0.0, 18.0);
        let b = Point3::new(20.0, 0.0, 18.0);
        assert!(los_visible(&a, &b, &scene));
        let lower = Point3::new(20.0, 0.0, 17.999);
        assert!(!los_visible(&Point3::new(0.0, 0.0, 17.999), &lower, &scene));
    }

    #[test]
    fn effective_csi_scales_rows() {
        let g = DMatrix::from_fn(2, 2, |r, c| C64::new(r as f64 + 1.0, c as f64 - 0.5));
        let a = C64::new(0.3, -1.2);
        let b = C64::new(-2.0, 0.7);
        let real = ChannelRealization {
            g: g.clone(),
            h: vec![
                DVector::from_vec(vec![a, b]),
                DVector::from_element(2, C64::new(1.0, 0.0)),
                DVector::zeros(2),
            ],
            los_flags: vec![true; 3],
            bs_ir_los: true,
        };
        let csi = effective_csi(&real, 1.0, 1.0).unwrap();
        for m in 0..2 {
            assert_eq!(csi.d[0][(0, m)], a * g[(0, m)]);
            assert_eq!(csi.d[0][(1, m)], b * g[(1, m)]);
        }
        assert_eq!(csi.d[1], g);
        assert!(csi.d[2].iter().all(|x| *x == C64::new(0.0, 0.0)));
    }

    #[test]
    fn effective_csi_rejects_mismatch() {
        let real = ChannelRealization {
            g: DMatrix::zeros(3, 2),
            h: vec![DVector::zeros(2)],
            los_flags: vec![true],
            bs_ir_los: true,
        };
        assert!(matches!(
            effective_csi(&real, 1.0, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_blockage_and_clear_geometry_gives_all_los() {
        let scene = SceneGeometry {
            ue_blockage_probability: 0.0,
            ..SceneGeometry::default()
        };
        let cm = model(scene);
        let ir = Point3::new(20.0, 0.0, 25.0);
        let ues: Vec<_> = (0..4).map(|k| Point3::new(18.0 + k as f64, 1.0, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let r = cm.sample_channels(&ir, &ues, &mut rng).unwrap();
            assert!(r.los_flags.iter().all(|&f| f));
            assert!(r.bs_ir_los);
            assert_eq!((r.g.nrows(), r.g.ncols()), (6, 4));
            assert!(r.h.iter().all(|h| h.len() == 6));
        }
    }

    #[test]
    fn certain_blockage_gives_all_nlos() {
        let scene = SceneGeometry {
            ue_blockage_probability: 1.0,
            blocker_elevation_deg: (89.0, 90.0),
            ..SceneGeometry::default()
        };
        let cm = model(scene);
        let ir = Point3::new(20.0, 0.0, 25.0);
        let ues = vec![Point3::new(15.0, 3.0, 0.0), Point3::new(25.0, -4.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r = cm.sample_channels(&ir, &ues, &mut rng).unwrap();
            assert!(r.los_flags.iter().all(|&f| !f));
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let cm = model(SceneGeometry::default());
        let ir = Point3::new(20.0, 10.0, 20.0);
        let ues = vec![Point3::new(19.0, 0.5, 0.0), Point3::new(22.0, -1.0, 0.0)];
        let a = cm
            .sample_channels(&ir, &ues, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = cm
            .sample_channels(&ir, &ues, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.h, b.h);
        assert_eq!(a.los_flags, b.los_flags);
    }

    #[test]
    fn default_blockage_reduces_to_linear_form_on_full_range() {
        let scene = SceneGeometry {
            ue_blockage_probability: 0.2,
            blocker_elevation_deg: (0.0, 90.0),
            ..SceneGeometry::default()
        };
        assert_relative_eq!(scene.body_blockage_probability(30.0), 0.2 * (1.0 - 30.0 / 90.0));
        assert_relative_eq!(scene.body_blockage_probability(90.0), 0.0);
    }

    #[test]
    fn fully_correlated_blockage_blocks_equal_elevations_together() {
        let scene = SceneGeometry {
            ue_blockage_probability: 0.5,
            blocker_elevation_deg: (0.0, 90.0),
            blockage_correlation: 1.0,
            ..SceneGeometry::default()
        };
        let cm = model(scene);
        let ir = Point3::new(20.0, 0.0, 10.0);
        let ues = vec![
            Point3::new(25.0, 0.0, 0.0),
            Point3::new(15.0, 0.0, 0.0),
            Point3::new(20.0, 5.0, 0.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut blocked = 0;
        for _ in 0..400 {
            let r = cm.sample_channels(&ir, &ues, &mut rng).unwrap();
            assert!(r.los_flags.iter().all(|&f| f == r.los_flags[0]));
            blocked += !r.los_flags[0] as usize;
        }
        let expected = 0.5 * (1.0 - 2f64.atan().to_degrees() / 90.0);
        assert!((blocked as f64 / 400.0 - expected).abs() < 0.05);
    }
}
