//! Antenna gain models.
//!
//! [`UlaPanel`] is a vertical uniform linear array that is omnidirectional
//! in azimuth: a parabolic element cut (65 degree 3 dB beamwidth, bounded
//! side-lobe floor) multiplied by the classic N-element array factor. The
//! whole pattern steers with the tilt, so the global maximum always sits at
//! the steering direction with gain `element_max + 10*log10(n)`.
//!
//! [`DipoleAntenna`] is an ideal half-wave dipole used by the localization
//! link budget, together with [`polarization_match`] for the mismatch loss
//! between two linearly polarized dipoles across a propagation path.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AntennaError {
    #[error("array needs at least one element, got {0}")]
    NoElements(usize),
    #[error("element spacing must be positive and finite, got {0} wavelengths")]
    InvalidSpacing(f64),
    #[error("tilt must be finite, got {0}")]
    InvalidTilt(f64),
    #[error("dipole axis must be a nonzero finite vector")]
    ZeroAxis,
}

/// Vertical uniform linear array panel. Positive `tilt_deg` steers the main
/// lobe below the horizon (downtilt), negative above it (uptilt).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaPanel {
    n_elements: usize,
    element_spacing_wl: f64,
    tilt_deg: f64,
    element_max_gain_dbi: f64,
    side_lobe_floor_db: f64,
    // Cached steering terms.
    boresight_deg: f64,
    sin_boresight: f64,
    element_max_gain_linear: f64,
}

/// 3 dB beamwidth of the parabolic element cut, degrees.
const ELEMENT_BEAMWIDTH_DEG: f64 = 65.0;

impl UlaPanel {
    pub fn new(
        n_elements: usize,
        element_spacing_wl: f64,
        tilt_deg: f64,
        element_max_gain_dbi: f64,
        side_lobe_floor_db: f64,
    ) -> Result<Self, AntennaError> {
        if n_elements == 0 {
            return Err(AntennaError::NoElements(n_elements));
        }
        if !(element_spacing_wl.is_finite() && element_spacing_wl > 0.0) {
            return Err(AntennaError::InvalidSpacing(element_spacing_wl));
        }
        if !tilt_deg.is_finite() {
            return Err(AntennaError::InvalidTilt(tilt_deg));
        }
        let boresight_deg = -tilt_deg;
        Ok(Self {
            n_elements,
            element_spacing_wl,
            tilt_deg,
            element_max_gain_dbi,
            side_lobe_floor_db,
            boresight_deg,
            sin_boresight: boresight_deg.to_radians().sin(),
            element_max_gain_linear: 10f64.powf(element_max_gain_dbi / 10.0),
        })
    }

    /// The study baseline: 8 elements at half-wavelength spacing, 8 dBi
    /// element gain, 30 dB side-lobe floor.
    pub fn with_tilt(tilt_deg: f64) -> Result<Self, AntennaError> {
        Self::new(8, 0.5, tilt_deg, 8.0, -30.0)
    }

    /// Panel steered `angle_deg` below the horizon.
    pub fn downtilt(angle_deg: f64) -> Result<Self, AntennaError> {
        Self::with_tilt(angle_deg)
    }

    /// Panel steered `angle_deg` above the horizon.
    pub fn uptilt(angle_deg: f64) -> Result<Self, AntennaError> {
        Self::with_tilt(-angle_deg)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn tilt_deg(&self) -> f64 {
        self.tilt_deg
    }

    /// Elevation of the main lobe: `-tilt_deg`.
    pub fn boresight_deg(&self) -> f64 {
        self.boresight_deg
    }

    /// Array factor |sum_n exp(j*2*pi*n*d*(sin(el) - sin(el_steer)))|^2 / N,
    /// evaluated in closed form; peaks at N on the steering direction.
    pub fn array_factor_linear(&self, sin_elevation: f64) -> f64 {
        let n = self.n_elements as f64;
        let x = std::f64::consts::PI
            * self.element_spacing_wl
            * (sin_elevation - self.sin_boresight);
        let sx = x.sin();
        // sin(Nx)/sin(x) -> N as sin(x) -> 0 (main and grating lobes).
        if sx.abs() < 1e-12 {
            return n;
        }
        let ratio = (n * x).sin() / sx;
        ratio * ratio / n
    }

    /// Parabolic element cut in dB, `offset_deg` away from boresight.
    fn element_pattern_db(&self, offset_deg: f64) -> f64 {
        let falloff = 12.0 * (offset_deg / ELEMENT_BEAMWIDTH_DEG).powi(2);
        -falloff.min(-self.side_lobe_floor_db)
    }

    /// Linear gain given both `sin(elevation)` and the elevation in degrees.
    /// Callers on hot paths usually know `sin(elevation)` already.
    pub fn gain_linear_parts(&self, sin_elevation: f64, elevation_deg: f64) -> f64 {
        let element_db = self.element_pattern_db(elevation_deg - self.boresight_deg);
        self.element_max_gain_linear
            * 10f64.powf(element_db / 10.0)
            * self.array_factor_linear(sin_elevation)
    }

    /// Gain in dBi toward the given elevation (degrees above the horizon).
    pub fn gain_db(&self, elevation_deg: f64) -> f64 {
        10.0 * self
            .gain_linear_parts(elevation_deg.to_radians().sin(), elevation_deg)
            .log10()
    }
}

/// Ideal lossless half-wave dipole with a fixed polarization axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleAntenna {
    axis: Vector3<f64>,
    peak_gain_linear: f64,
}

/// Boresight gain of a half-wave dipole.
pub const HALF_WAVE_DIPOLE_PEAK: f64 = 1.64;

impl DipoleAntenna {
    pub fn new(axis: Vector3<f64>) -> Result<Self, AntennaError> {
        let norm = axis.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(AntennaError::ZeroAxis);
        }
        Ok(Self {
            axis: axis / norm,
            peak_gain_linear: HALF_WAVE_DIPOLE_PEAK,
        })
    }

    pub fn z_oriented() -> Self {
        Self::new(Vector3::z()).expect("unit axis")
    }

    pub fn y_oriented() -> Self {
        Self::new(Vector3::y()).expect("unit axis")
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    /// Linear gain toward `direction`: 1.64*(cos(pi/2 cos(psi))/sin(psi))^2
    /// with psi the angle between the axis and the direction. Exactly zero
    /// along the axis.
    pub fn gain_linear(&self, direction: &Vector3<f64>) -> f64 {
        let norm = direction.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let cos_psi = (self.axis.dot(direction) / norm).clamp(-1.0, 1.0);
        let sin2_psi = 1.0 - cos_psi * cos_psi;
        if sin2_psi <= f64::EPSILON {
            return 0.0;
        }
        let num = (std::f64::consts::FRAC_PI_2 * cos_psi).cos();
        self.peak_gain_linear * num * num / sin2_psi
    }
}

/// Polarization match between two dipoles across a path: the squared inner
/// product of their polarization unit vectors, each the antenna axis
/// projected onto the plane transverse to the path. Returns 0 when either
/// axis is (numerically) parallel to the path, where the gain is zero anyway.
pub fn polarization_match(
    tx: &DipoleAntenna,
    rx: &DipoleAntenna,
    path_direction: &Vector3<f64>,
) -> f64 {
    let norm = path_direction.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let k = path_direction / norm;
    let transverse = |axis: &Vector3<f64>| -> Option<Vector3<f64>> {
        let t = axis - k * axis.dot(&k);
        let n2 = t.norm_squared();
        if n2 < 1e-24 {
            None
        } else {
            Some(t / n2.sqrt())
        }
    };
    match (transverse(&tx.axis), transverse(&rx.axis)) {
        (Some(a), Some(b)) => {
            let dot = a.dot(&b);
            (dot * dot).clamp(0.0, 1.0)
        }
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // 8 + 10*log10(8), the pattern maximum for the baseline panel.
    const BASELINE_PEAK_DBI: f64 = 17.030899869919438;

    /// Array factor by explicit phasor summation; the independent route
    /// checked against the closed form.
    fn array_factor_by_sum(panel: &UlaPanel, sin_elevation: f64) -> f64 {
        use num_complex::Complex64;
        let d = 0.5;
        let u = sin_elevation - panel.boresight_deg().to_radians().sin();
        let sum: Complex64 = (0..panel.n_elements())
            .map(|n| Complex64::from_polar(1.0, std::f64::consts::TAU * n as f64 * d * u))
            .sum();
        sum.norm_sqr() / panel.n_elements() as f64
    }

    #[test]
    fn untilted_panel_peaks_at_the_horizon() {
        let panel = UlaPanel::with_tilt(0.0).unwrap();
        assert_relative_eq!(panel.gain_db(0.0), BASELINE_PEAK_DBI, max_relative = 1e-12);
    }

    #[test]
    fn downtilted_panel_peaks_at_minus_tilt() {
        let panel = UlaPanel::downtilt(6.0).unwrap();
        assert_relative_eq!(panel.gain_db(-6.0), BASELINE_PEAK_DBI, max_relative = 1e-12);
        // Global maximum over a dense elevation sweep sits at the steering angle.
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut el = -90.0;
        while el <= 90.0 {
            let g = panel.gain_db(el);
            if g > best.0 {
                best = (g, el);
            }
            el += 0.01;
        }
        assert!(best.0 <= BASELINE_PEAK_DBI + 1e-9);
        assert_abs_diff_eq!(best.1, -6.0, epsilon = 0.011);
    }

    #[test]
    fn uptilt_is_the_mirrored_downtilt() {
        let up = UlaPanel::uptilt(20.0).unwrap();
        let down = UlaPanel::downtilt(20.0).unwrap();
        assert_eq!(up.boresight_deg(), 20.0);
        for el in [-80.0, -35.5, -2.0, 0.25, 14.0, 62.0] {
            assert_relative_eq!(up.gain_db(el), down.gain_db(-el), max_relative = 1e-12);
        }
    }

    #[test]
    fn untilted_pattern_is_symmetric_about_the_horizon() {
        let panel = UlaPanel::with_tilt(0.0).unwrap();
        assert_relative_eq!(panel.gain_db(10.0), panel.gain_db(-10.0), max_relative = 1e-12);
    }

    #[test]
    fn first_null_of_the_6_degree_downtilt() {
        // sin(el) - sin(-6 deg) = 1/(N*d) = 1/4 puts the first null at
        // asin(1/4 - sin(6 deg)).
        let panel = UlaPanel::downtilt(6.0).unwrap();
        let el_null = (0.25 - 6f64.to_radians().sin()).asin().to_degrees();
        assert_abs_diff_eq!(el_null, 8.36458578360835, epsilon = 1e-9);
        let af = panel.array_factor_linear(el_null.to_radians().sin());
        assert!(af < 1e-12, "array factor at the null was {af}");
    }

    #[test]
    fn closed_form_matches_phasor_sum_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let tilt: f64 = rng.gen_range(-90.0..90.0);
            let el: f64 = rng.gen_range(-90.0..90.0);
            let panel = UlaPanel::with_tilt(tilt).unwrap();
            let s = el.to_radians().sin();
            let closed = panel.array_factor_linear(s);
            let summed = array_factor_by_sum(&panel, s);
            assert!(
                (closed - summed).abs() <= 1e-9 * panel.n_elements() as f64,
                "tilt {tilt} el {el}: {closed} vs {summed}"
            );
        }
    }

    #[test]
    fn side_lobe_floor_bounds_the_element_cut() {
        // Steered 60 degrees up, the element offset at el = -90 is 150 deg,
        // far past where the parabola crosses the 30 dB floor.
        let panel = UlaPanel::uptilt(60.0).unwrap();
        assert_eq!(panel.element_pattern_db(-150.0), -30.0);
        assert_eq!(panel.element_pattern_db(150.0), -30.0);
        assert!(panel.element_pattern_db(10.0) > -1.0);
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(matches!(
            UlaPanel::new(0, 0.5, 6.0, 8.0, -30.0),
            Err(AntennaError::NoElements(0))
        ));
        assert!(matches!(
            UlaPanel::new(8, 0.0, 6.0, 8.0, -30.0),
            Err(AntennaError::InvalidSpacing(_))
        ));
        assert!(matches!(
            UlaPanel::with_tilt(f64::NAN),
            Err(AntennaError::InvalidTilt(_))
        ));
        assert!(matches!(
            DipoleAntenna::new(Vector3::zeros()),
            Err(AntennaError::ZeroAxis)
        ));
    }

    #[test]
    fn dipole_peak_broadside_and_null_on_axis() {
        let dip = DipoleAntenna::z_oriented();
        assert_eq!(dip.gain_linear(&Vector3::x()), HALF_WAVE_DIPOLE_PEAK);
        assert_eq!(dip.gain_linear(&Vector3::z()), 0.0);
        assert_eq!(dip.gain_linear(&(-Vector3::z())), 0.0);
    }

    #[test]
    fn dipole_gain_at_45_degrees() {
        // 1.64*(cos(pi/2*cos(45 deg))/sin(45 deg))^2, evaluated independently.
        let dip = DipoleAntenna::z_oriented();
        let dir = Vector3::new(1.0, 0.0, 1.0);
        assert_relative_eq!(
            dip.gain_linear(&dir),
            0.6466522179907462,
            max_relative = 1e-12
        );
    }

    #[test]
    fn dipole_integrates_to_the_full_sphere() {
        // A lossless pattern must average to 1 over the sphere:
        // integral of g dOmega = 4*pi within the 1.64 peak approximation.
        let dip = DipoleAntenna::z_oriented();
        let n = 20_000;
        let mut integral = 0.0;
        for i in 0..n {
            let theta = (i as f64 + 0.5) * std::f64::consts::PI / n as f64;
            let dir = Vector3::new(theta.sin(), 0.0, theta.cos());
            integral += dip.gain_linear(&dir) * theta.sin() * std::f64::consts::PI / n as f64;
        }
        integral *= std::f64::consts::TAU;
        let sphere = 4.0 * std::f64::consts::PI;
        assert!((integral / sphere - 1.0).abs() < 0.02);
    }

    #[test]
    fn cross_polarized_dipoles_have_zero_match_broadside() {
        let tx = DipoleAntenna::z_oriented();
        let rx = DipoleAntenna::y_oriented();
        assert_eq!(polarization_match(&tx, &rx, &Vector3::x()), 0.0);
        assert_eq!(polarization_match(&tx, &tx, &Vector3::x()), 1.0);
    }

    #[test]
    fn oblique_path_couples_a_quarter_of_the_power() {
        let tx = DipoleAntenna::z_oriented();
        let rx = DipoleAntenna::y_oriented();
        let path = Vector3::new(1.0, 1.0, 1.0);
        assert_relative_eq!(polarization_match(&tx, &rx, &path), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn path_parallel_to_an_axis_gives_zero_match() {
        let tx = DipoleAntenna::z_oriented();
        let rx = DipoleAntenna::y_oriented();
        assert_eq!(polarization_match(&tx, &rx, &Vector3::z()), 0.0);
        assert_eq!(polarization_match(&rx, &tx, &Vector3::y()), 0.0);
    }

    proptest! {
        #[test]
        fn prop_dipole_gain_bounded_by_peak(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
        ) {
            prop_assume!(x * x + y * y + z * z > 1e-6);
            let dip = DipoleAntenna::z_oriented();
            let g = dip.gain_linear(&Vector3::new(x, y, z));
            prop_assert!((0.0..=HALF_WAVE_DIPOLE_PEAK + 1e-12).contains(&g));
        }

        #[test]
        fn prop_polarization_match_is_a_symmetric_fraction(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0,
            px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0,
        ) {
            prop_assume!(ax * ax + ay * ay + az * az > 1e-3);
            prop_assume!(bx * bx + by * by + bz * bz > 1e-3);
            prop_assume!(px * px + py * py + pz * pz > 1e-3);
            let a = DipoleAntenna::new(Vector3::new(ax, ay, az)).unwrap();
            let b = DipoleAntenna::new(Vector3::new(bx, by, bz)).unwrap();
            let path = Vector3::new(px, py, pz);
            let chi = polarization_match(&a, &b, &path);
            prop_assert!((0.0..=1.0).contains(&chi));
            let flipped = polarization_match(&b, &a, &path);
            prop_assert!((chi - flipped).abs() < 1e-12);
        }

        #[test]
        fn prop_array_factor_peaks_at_n(tilt in -85.0f64..85.0, el in -90.0f64..90.0) {
            let panel = UlaPanel::with_tilt(tilt).unwrap();
            let af = panel.array_factor_linear(el.to_radians().sin());
            prop_assert!(af <= panel.n_elements() as f64 + 1e-9);
            prop_assert!(af >= 0.0);
        }
    }
}
