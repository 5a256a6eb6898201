//! TDOA localization accuracy over corridor slices.
//!
//! Four ground sensors at the corners of a rectangular corridor slice
//! observe a UAV sounding transmitter. Per-branch link SNRs — dipole
//! element patterns plus polarization matching — set per-sensor TOA
//! variances, which feed a TDOA Fisher information matrix; the position
//! error bound at a point is `sqrt(trace(FIM^-1))`. The module sweeps
//! corridor slices into RMSE distributions and medians, and provides a
//! Monte Carlo Gauss-Newton estimator as an independent check that the
//! bound is attainable.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

use crate::antenna::{polarization_match, DipoleAntenna};
use crate::channel::{fspl_db, ChannelError, SPEED_OF_LIGHT_M_S};

/// FIM eigenvalue ratio below which a point is declared unobservable.
pub const OBSERVABILITY_EIGENVALUE_RATIO: f64 = 1e-12;

/// Default evaluation grid spacing across corridor slices.
pub const DEFAULT_SLICE_SPACING_M: f64 = 25.0;

const LM_LAMBDA_INIT: f64 = 1e-3;
const LM_LAMBDA_GROW: f64 = 10.0;
const LM_LAMBDA_SHRINK: f64 = 0.3;
const LM_LAMBDA_MIN: f64 = 1e-12;
const LM_LAMBDA_MAX: f64 = 1e12;
const LM_MAX_ITERATIONS: usize = 50;
const LM_STEP_TOLERANCE_M: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("corridor slice extent must be positive and finite, got {0} m")]
    InvalidExtent(f64),
    #[error("slice height must be non-negative and finite, got {0} m")]
    InvalidHeight(f64),
    #[error("grid spacing {spacing_m} m is invalid for a {dx_m} x {dy_m} m slice")]
    InvalidSpacing { spacing_m: f64, dx_m: f64, dy_m: f64 },
    #[error("bandwidth must be positive and finite, got {0} Hz")]
    InvalidBandwidth(f64),
    #[error("carrier frequency must be positive and finite, got {0} Hz")]
    InvalidCarrier(f64),
    #[error("transmit power must be finite, got {0} dBm")]
    InvalidTxPower(f64),
    #[error("{sensors} sensors supplied with {variances} TOA variances")]
    LinkCountMismatch { sensors: usize, variances: usize },
    #[error("TDOA needs at least 4 sensors with finite TOA variance, found {usable}")]
    TooFewUsableSensors { usable: usize },
    #[error("UAV position coincides with sensor {index}")]
    CoincidentSensor { index: usize },
    #[error("TDOA covariance matrix is singular")]
    SingularCovariance,
    #[error("point ({x}, {y}, {z}) is unobservable: the TDOA geometry has a blind direction")]
    UnobservablePoint { x: f64, y: f64, z: f64 },
    #[error("no observable grid points in the slice at height {height_m} m")]
    NoObservablePoints { height_m: f64 },
    #[error("corridor sweep needs at least one slice height")]
    NoHeights,
    #[error("Monte Carlo trial count must be positive")]
    NoTrials,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Antenna configuration of the UAV-to-sensor sounding links.
///
/// Every mode keeps a z-oriented dipole as the primary element; the richer
/// modes add a horizontal y-oriented dipole so that links passing near the
/// vertical axial null of the z element still carry energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AntennaMode {
    /// Single z dipole at both ends.
    Siso,
    /// Single z dipole on the UAV, orthogonal z + y pair at each sensor.
    Miso,
    /// Orthogonal z + y pairs at both ends.
    Mimo,
}

impl AntennaMode {
    /// UAV-side dipoles. Each transmit dipole sounds in its own orthogonal
    /// slot at the full transmit power.
    pub fn transmit_dipoles(&self) -> Vec<DipoleAntenna> {
        match self {
            AntennaMode::Siso | AntennaMode::Miso => vec![DipoleAntenna::z_oriented()],
            AntennaMode::Mimo => vec![DipoleAntenna::z_oriented(), DipoleAntenna::y_oriented()],
        }
    }

    /// Sensor-side dipoles whose outputs are combined with MRC.
    pub fn receive_dipoles(&self) -> Vec<DipoleAntenna> {
        match self {
            AntennaMode::Siso => vec![DipoleAntenna::z_oriented()],
            AntennaMode::Miso | AntennaMode::Mimo => {
                vec![DipoleAntenna::z_oriented(), DipoleAntenna::y_oriented()]
            }
        }
    }
}

impl fmt::Display for AntennaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AntennaMode::Siso => "siso",
            AntennaMode::Miso => "miso",
            AntennaMode::Mimo => "mimo",
        };
        f.write_str(name)
    }
}

/// Radio parameters of the UAV sounding transmitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UavRadioParams {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
}

impl Default for UavRadioParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 20.0,
            bandwidth_hz: 10.0e6,
            carrier_hz: 2.4e9,
        }
    }
}

impl UavRadioParams {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(LocalizationError::InvalidBandwidth(self.bandwidth_hz));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(LocalizationError::InvalidCarrier(self.carrier_hz));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(LocalizationError::InvalidTxPower(self.tx_power_dbm));
        }
        Ok(())
    }

    /// RMS effective bandwidth of a flat spectrum, `beta = B / sqrt(12)`.
    pub fn effective_bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz / 12.0_f64.sqrt()
    }

    /// `beta^2 = B^2 / 12`, the factor entering the TOA variance.
    pub fn effective_bandwidth_sq(&self) -> f64 {
        self.bandwidth_hz * self.bandwidth_hz / 12.0
    }

    /// Thermal noise power over the sounding bandwidth (no receiver noise
    /// figure is applied to the sensing receivers).
    pub fn noise_power_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10()
    }
}

/// Four ground sensors at the corners of a `dx x dy` rectangle at z = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorConstellation {
    sensors: [Vector3<f64>; 4],
}

impl SensorConstellation {
    /// Corner sensors at (±dx/2, ±dy/2, 0), ordered (+,+), (−,+), (−,−), (+,−).
    pub fn rectangle(dx_m: f64, dy_m: f64) -> Result<Self, LocalizationError> {
        for extent in [dx_m, dy_m] {
            if !(extent.is_finite() && extent > 0.0) {
                return Err(LocalizationError::InvalidExtent(extent));
            }
        }
        let hx = 0.5 * dx_m;
        let hy = 0.5 * dy_m;
        Ok(Self {
            sensors: [
                Vector3::new(hx, hy, 0.0),
                Vector3::new(-hx, hy, 0.0),
                Vector3::new(-hx, -hy, 0.0),
                Vector3::new(hx, -hy, 0.0),
            ],
        })
    }

    pub fn sensors(&self) -> &[Vector3<f64>] {
        &self.sensors
    }
}

/// Per-branch and MRC-combined SNR of one UAV-to-sensor link.
#[derive(Clone, Debug)]
pub struct LinkSnr {
    /// Linear SNR per (transmit dipole, receive dipole) pair, in
    /// transmit-major order.
    pub branch_snrs: Vec<f64>,
    /// MRC output SNR: the sum of the branch SNRs.
    pub combined: f64,
}

/// Branch and combined SNRs for the sounding link between the UAV at
/// `point` and a sensor.
///
/// Each branch sees the free-space loss at the carrier, both dipole element
/// gains, and the polarization match of the two elements across the path;
/// each transmit dipole sounds at the full transmit power in its own
/// orthogonal slot, and the receiver combines every (tx, rx) branch with
/// MRC, so the combined SNR is the plain sum over branches.
pub fn link_snr(
    point: &Vector3<f64>,
    sensor: &Vector3<f64>,
    mode: AntennaMode,
    params: &UavRadioParams,
) -> Result<LinkSnr, LocalizationError> {
    params.validate()?;
    let offset = point - sensor;
    let distance = offset.norm();
    let fspl = fspl_db(distance, params.carrier_hz)?;
    let unity_gain_snr_db = params.tx_power_dbm - fspl - params.noise_power_dbm();
    let unity_gain_snr = 10.0_f64.powf(unity_gain_snr_db / 10.0);
    let direction = offset / distance;

    let transmit = mode.transmit_dipoles();
    let receive = mode.receive_dipoles();
    let mut branch_snrs = Vec::with_capacity(transmit.len() * receive.len());
    for tx in &transmit {
        for rx in &receive {
            let pattern = tx.gain_linear(&direction)
                * rx.gain_linear(&direction)
                * polarization_match(tx, rx, &direction);
            branch_snrs.push(unity_gain_snr * pattern);
        }
    }
    let combined = branch_snrs.iter().sum();
    Ok(LinkSnr {
        branch_snrs,
        combined,
    })
}

/// TOA estimation variance in s² for a link at the given combined SNR:
/// `sigma_tau^2 = 1 / (8 pi^2 beta^2 SNR)` with `beta^2 = B^2/12` for a
/// flat spectrum. A non-positive SNR yields +infinity — an uninformative
/// link that downstream FIM assembly drops.
pub fn toa_variance(snr_linear: f64, params: &UavRadioParams) -> f64 {
    if snr_linear <= 0.0 {
        return f64::INFINITY;
    }
    1.0 / (8.0 * PI * PI * params.effective_bandwidth_sq() * snr_linear)
}

/// Position error bound at one UAV position.
#[derive(Clone, Debug)]
pub struct CrlbResult {
    pub point: Vector3<f64>,
    /// Position Fisher information in 1/m².
    pub fim: Matrix3<f64>,
    /// `sqrt(trace(FIM^-1))`; +infinity when the point is unobservable.
    pub rmse_m: f64,
    /// False when the smallest FIM eigenvalue falls below
    /// [`OBSERVABILITY_EIGENVALUE_RATIO`] times the largest.
    pub observable: bool,
    /// Combined per-sensor link SNRs in dB (empty when the result was
    /// assembled directly from TOA variances).
    pub link_snr_db: Vec<f64>,
}

/// Fisher information of the 3D position from per-sensor TOA variances.
///
/// TOAs are differenced against the first usable sensor; links with
/// infinite variance are dropped, and at least four usable sensors must
/// remain. The TDOA covariance is `sigma_ref^2 * 11^T + diag(sigma_i^2)`,
/// and the information matrix is `H^T Q^-1 H` with rows
/// `h_i = (u_i - u_ref) / c` of unit vectors from sensor to UAV.
pub fn fim_from_links(
    point: &Vector3<f64>,
    sensors: &[Vector3<f64>],
    toa_variances_s2: &[f64],
) -> Result<CrlbResult, LocalizationError> {
    if sensors.len() != toa_variances_s2.len() {
        return Err(LocalizationError::LinkCountMismatch {
            sensors: sensors.len(),
            variances: toa_variances_s2.len(),
        });
    }
    let usable: Vec<usize> = toa_variances_s2
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, _)| i)
        .collect();
    if usable.len() < 4 {
        return Err(LocalizationError::TooFewUsableSensors {
            usable: usable.len(),
        });
    }

    let mut units = Vec::with_capacity(usable.len());
    for &i in &usable {
        let offset = point - sensors[i];
        let norm = offset.norm();
        if norm == 0.0 {
            return Err(LocalizationError::CoincidentSensor { index: i });
        }
        units.push(offset / norm);
    }

    let n = usable.len() - 1;
    let mut h = DMatrix::<f64>::zeros(n, 3);
    for (row, unit) in units.iter().skip(1).enumerate() {
        let direction = (unit - units[0]) / SPEED_OF_LIGHT_M_S;
        for col in 0..3 {
            h[(row, col)] = direction[col];
        }
    }
    let reference_variance = toa_variances_s2[usable[0]];
    let q = DMatrix::<f64>::from_fn(n, n, |i, j| {
        reference_variance
            + if i == j {
                toa_variances_s2[usable[i + 1]]
            } else {
                0.0
            }
    });
    let cholesky = q
        .cholesky()
        .ok_or(LocalizationError::SingularCovariance)?;
    let weighted = cholesky.solve(&h);
    let fim_dyn = h.transpose() * weighted;
    let mut fim = Matrix3::from_fn(|i, j| fim_dyn[(i, j)]);
    fim = 0.5 * (fim + fim.transpose());

    let eigenvalues = fim.symmetric_eigen().eigenvalues;
    let lambda_max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let observable =
        lambda_max > 0.0 && lambda_min >= OBSERVABILITY_EIGENVALUE_RATIO * lambda_max;
    let rmse_m = if observable {
        eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>().sqrt()
    } else {
        f64::INFINITY
    };
    Ok(CrlbResult {
        point: *point,
        fim,
        rmse_m,
        observable,
        link_snr_db: Vec::new(),
    })
}

/// CRLB at one UAV position for a constellation and antenna mode.
pub fn tdoa_fim(
    point: &Vector3<f64>,
    constellation: &SensorConstellation,
    mode: AntennaMode,
    params: &UavRadioParams,
) -> Result<CrlbResult, LocalizationError> {
    let combined: Vec<f64> = constellation
        .sensors()
        .iter()
        .map(|sensor| link_snr(point, sensor, mode, params).map(|snr| snr.combined))
        .collect::<Result<_, _>>()?;
    let variances: Vec<f64> = combined
        .iter()
        .map(|&snr| toa_variance(snr, params))
        .collect();
    let mut result = fim_from_links(point, constellation.sensors(), &variances)?;
    result.link_snr_db = combined
        .iter()
        .map(|&snr| {
            if snr > 0.0 {
                10.0 * snr.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(result)
}

/// One evaluated grid point of a corridor slice.
#[derive(Clone, Debug, Serialize)]
pub struct SlicePoint {
    pub x_m: f64,
    pub y_m: f64,
    pub rmse_m: f64,
    pub observable: bool,
}

/// RMSE field of one corridor slice height.
#[derive(Clone, Debug)]
pub struct SliceStats {
    height_m: f64,
    points: Vec<SlicePoint>,
    sorted_rmse_m: Vec<f64>,
    n_unobservable: usize,
}

impl SliceStats {
    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    /// Every evaluated grid point in row-major (x, then y) order.
    pub fn points(&self) -> &[SlicePoint] {
        &self.points
    }

    pub fn n_observable(&self) -> usize {
        self.sorted_rmse_m.len()
    }

    pub fn n_unobservable(&self) -> usize {
        self.n_unobservable
    }

    /// Median RMSE over observable points (midpoint average for even counts).
    pub fn median_rmse_m(&self) -> f64 {
        let sorted = &self.sorted_rmse_m;
        let n = sorted.len();
        if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }

    /// Empirical `Pr(RMSE <= delta)` over observable points.
    pub fn cdf(&self, delta_m: f64) -> f64 {
        if self.sorted_rmse_m.is_empty() {
            return f64::NAN;
        }
        let below = self.sorted_rmse_m.partition_point(|&r| r <= delta_m);
        below as f64 / self.sorted_rmse_m.len() as f64
    }
}

/// Corridor-slice sweep configuration.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub dx_m: f64,
    pub dy_m: f64,
    pub heights_m: Vec<f64>,
    pub mode: AntennaMode,
    pub spacing_m: f64,
    pub params: UavRadioParams,
}

impl SweepConfig {
    pub fn new(dx_m: f64, dy_m: f64, heights_m: Vec<f64>, mode: AntennaMode) -> Self {
        Self {
            dx_m,
            dy_m,
            heights_m,
            mode,
            spacing_m: DEFAULT_SLICE_SPACING_M,
            params: UavRadioParams::default(),
        }
    }
}

/// CRLB RMSE distributions over corridor slices, one per height.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub dx_m: f64,
    pub dy_m: f64,
    pub mode: AntennaMode,
    pub slices: Vec<SliceStats>,
}

/// Evaluates the CRLB over a half-offset uniform grid on each slice.
///
/// Points whose geometry is blind in some direction — or that lose a link
/// to an antenna null entirely — are excluded from the distribution and
/// counted as unobservable. A slice with no observable points at all is an
/// error.
pub fn corridor_sweep(config: &SweepConfig) -> Result<SweepResult, LocalizationError> {
    config.params.validate()?;
    let constellation = SensorConstellation::rectangle(config.dx_m, config.dy_m)?;
    if config.heights_m.is_empty() {
        return Err(LocalizationError::NoHeights);
    }
    for &height in &config.heights_m {
        if !(height.is_finite() && height >= 0.0) {
            return Err(LocalizationError::InvalidHeight(height));
        }
    }
    if !(config.spacing_m.is_finite() && config.spacing_m > 0.0) {
        return Err(LocalizationError::InvalidSpacing {
            spacing_m: config.spacing_m,
            dx_m: config.dx_m,
            dy_m: config.dy_m,
        });
    }
    let nx = (config.dx_m / config.spacing_m).floor() as usize;
    let ny = (config.dy_m / config.spacing_m).floor() as usize;
    if nx == 0 || ny == 0 {
        return Err(LocalizationError::InvalidSpacing {
            spacing_m: config.spacing_m,
            dx_m: config.dx_m,
            dy_m: config.dy_m,
        });
    }

    let mut slices = Vec::with_capacity(config.heights_m.len());
    for &height in &config.heights_m {
        let coordinates: Vec<(f64, f64)> = (0..nx)
            .flat_map(|ix| {
                let x = -0.5 * config.dx_m + (ix as f64 + 0.5) * config.spacing_m;
                (0..ny).map(move |iy| {
                    let y = -0.5 * config.dy_m + (iy as f64 + 0.5) * config.spacing_m;
                    (x, y)
                })
            })
            .collect();
        let points: Vec<SlicePoint> = coordinates
            .par_iter()
            .map(|&(x, y)| {
                let point = Vector3::new(x, y, height);
                match tdoa_fim(&point, &constellation, config.mode, &config.params) {
                    Ok(result) => Ok(SlicePoint {
                        x_m: x,
                        y_m: y,
                        rmse_m: result.rmse_m,
                        observable: result.observable,
                    }),
                    // A link swallowed by an antenna null leaves fewer than
                    // four usable sensors: the point is unusable, not fatal.
                    Err(LocalizationError::TooFewUsableSensors { .. }) => Ok(SlicePoint {
                        x_m: x,
                        y_m: y,
                        rmse_m: f64::INFINITY,
                        observable: false,
                    }),
                    Err(other) => Err(other),
                }
            })
            .collect::<Result<_, _>>()?;

        let mut sorted_rmse_m: Vec<f64> = points
            .iter()
            .filter(|p| p.observable)
            .map(|p| p.rmse_m)
            .collect();
        sorted_rmse_m.sort_by(|a, b| a.partial_cmp(b).expect("observable RMSE is finite"));
        if sorted_rmse_m.is_empty() {
            return Err(LocalizationError::NoObservablePoints { height_m: height });
        }
        let n_unobservable = points.len() - sorted_rmse_m.len();
        slices.push(SliceStats {
            height_m: height,
            points,
            sorted_rmse_m,
            n_unobservable,
        });
    }
    Ok(SweepResult {
        dx_m: config.dx_m,
        dy_m: config.dy_m,
        mode: config.mode,
        slices,
    })
}

fn tdoa_prediction(position: &Vector3<f64>, sensors: &[Vector3<f64>]) -> Vector3<f64> {
    let reference = (position - sensors[0]).norm();
    Vector3::from_fn(|i, _| {
        ((position - sensors[i + 1]).norm() - reference) / SPEED_OF_LIGHT_M_S
    })
}

fn tdoa_jacobian(position: &Vector3<f64>, sensors: &[Vector3<f64>]) -> Matrix3<f64> {
    let reference = (position - sensors[0]).normalize();
    Matrix3::from_fn(|row, col| {
        let unit = (position - sensors[row + 1]).normalize();
        (unit[col] - reference[col]) / SPEED_OF_LIGHT_M_S
    })
}

/// Damped Gauss-Newton refinement of a TDOA position estimate.
fn lm_refine(
    measured: &Vector3<f64>,
    sensors: &[Vector3<f64>],
    q_inv: &Matrix3<f64>,
    start: Vector3<f64>,
) -> Vector3<f64> {
    let cost = |x: &Vector3<f64>| {
        let residual = measured - tdoa_prediction(x, sensors);
        residual.dot(&(q_inv * residual))
    };
    let mut x = start;
    let mut current_cost = cost(&x);
    let mut lambda = LM_LAMBDA_INIT;
    for _ in 0..LM_MAX_ITERATIONS {
        let jacobian = tdoa_jacobian(&x, sensors);
        let gauss = jacobian.transpose() * q_inv * jacobian;
        let gradient =
            jacobian.transpose() * (q_inv * (measured - tdoa_prediction(&x, sensors)));
        let scale = gauss.trace() / 3.0;
        let damped = gauss + Matrix3::identity() * (lambda * scale);
        let Some(cholesky) = damped.cholesky() else {
            lambda *= LM_LAMBDA_GROW;
            if lambda > LM_LAMBDA_MAX {
                break;
            }
            continue;
        };
        let step = cholesky.solve(&gradient);
        let candidate = x + step;
        let candidate_cost = cost(&candidate);
        if candidate_cost < current_cost {
            x = candidate;
            current_cost = candidate_cost;
            lambda = (lambda * LM_LAMBDA_SHRINK).max(LM_LAMBDA_MIN);
            if step.norm() < LM_STEP_TOLERANCE_M {
                break;
            }
        } else {
            lambda *= LM_LAMBDA_GROW;
            if lambda > LM_LAMBDA_MAX {
                break;
            }
        }
    }
    x
}

/// Monte Carlo RMSE of the Gauss-Newton TDOA estimator at a point.
///
/// Each trial draws independent per-sensor TOA errors at the true-position
/// variances (so the TDOA vector carries the reference-sensor correlation),
/// then refines from the truth with a damped Gauss-Newton solver weighted
/// by the fixed TDOA covariance. The returned RMSE is directly comparable
/// to [`CrlbResult::rmse_m`] at the same point.
pub fn monte_carlo_rmse<R: Rng + ?Sized>(
    point: &Vector3<f64>,
    constellation: &SensorConstellation,
    mode: AntennaMode,
    params: &UavRadioParams,
    trials: usize,
    rng: &mut R,
) -> Result<f64, LocalizationError> {
    if trials == 0 {
        return Err(LocalizationError::NoTrials);
    }
    let bound = tdoa_fim(point, constellation, mode, params)?;
    if !bound.observable {
        return Err(LocalizationError::UnobservablePoint {
            x: point.x,
            y: point.y,
            z: point.z,
        });
    }
    let sensors = constellation.sensors();
    let variances: Vec<f64> = sensors
        .iter()
        .map(|sensor| {
            link_snr(point, sensor, mode, params).map(|snr| toa_variance(snr.combined, params))
        })
        .collect::<Result<_, _>>()?;
    let q = Matrix3::from_fn(|i, j| {
        variances[0] + if i == j { variances[i + 1] } else { 0.0 }
    });
    let q_inv = q
        .cholesky()
        .ok_or(LocalizationError::SingularCovariance)?
        .inverse();
    let noise: Vec<Normal<f64>> = variances
        .iter()
        .map(|&v| Normal::new(0.0, v.sqrt()).expect("finite positive TOA std"))
        .collect();
    let truth_tdoas = tdoa_prediction(point, sensors);

    let mut sum_squared_error = 0.0;
    for _ in 0..trials {
        let epsilon: Vec<f64> = noise.iter().map(|n| n.sample(rng)).collect();
        let measured =
            truth_tdoas + Vector3::from_fn(|i, _| epsilon[i + 1] - epsilon[0]);
        let estimate = lm_refine(&measured, sensors, &q_inv, *point);
        sum_squared_error += (estimate - point).norm_squared();
    }
    Ok((sum_squared_error / trials as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FROZEN_TOLERANCE: f64 = 1e-9;

    fn params() -> UavRadioParams {
        UavRadioParams::default()
    }

    fn corridor() -> SensorConstellation {
        SensorConstellation::rectangle(500.0, 1000.0).unwrap()
    }

    #[test]
    fn rectangle_orders_corners_counterclockwise_from_positive_quadrant() {
        let c = SensorConstellation::rectangle(500.0, 1000.0).unwrap();
        let expected = [
            Vector3::new(250.0, 500.0, 0.0),
            Vector3::new(-250.0, 500.0, 0.0),
            Vector3::new(-250.0, -500.0, 0.0),
            Vector3::new(250.0, -500.0, 0.0),
        ];
        assert_eq!(c.sensors(), expected.as_slice());
    }

    #[test]
    fn rectangle_rejects_degenerate_extents() {
        for (dx, dy) in [
            (0.0, 1000.0),
            (-500.0, 1000.0),
            (500.0, f64::NAN),
            (500.0, f64::INFINITY),
        ] {
            assert!(matches!(
                SensorConstellation::rectangle(dx, dy),
                Err(LocalizationError::InvalidExtent(_))
            ));
        }
    }

    #[test]
    fn z_dipoles_directly_overhead_yield_zero_snr_and_dead_link() {
        let sensor = Vector3::new(250.0, 500.0, 0.0);
        let overhead = Vector3::new(250.0, 500.0, 100.0);
        let snr = link_snr(&overhead, &sensor, AntennaMode::Siso, &params()).unwrap();
        assert_eq!(snr.combined, 0.0);
        assert_eq!(toa_variance(snr.combined, &params()), f64::INFINITY);
        // With one corner link dead, only three usable sensors remain.
        let err = tdoa_fim(&overhead, &corridor(), AntennaMode::Siso, &params()).unwrap_err();
        assert!(matches!(
            err,
            LocalizationError::TooFewUsableSensors { usable: 3 }
        ));
    }

    #[test]
    fn orthogonal_pair_survives_directly_overhead() {
        let sensor = Vector3::new(250.0, 500.0, 0.0);
        let overhead = Vector3::new(250.0, 500.0, 100.0);
        let snr = link_snr(&overhead, &sensor, AntennaMode::Mimo, &params()).unwrap();
        assert!(snr.combined > 0.0);
        let result = tdoa_fim(&overhead, &corridor(), AntennaMode::Mimo, &params()).unwrap();
        assert!(result.rmse_m.is_finite());
    }

    #[test]
    fn branch_count_matches_mode() {
        let point = Vector3::new(100.0, 50.0, 120.0);
        let sensor = Vector3::new(-30.0, 70.0, 0.0);
        for (mode, branches) in [
            (AntennaMode::Siso, 1),
            (AntennaMode::Miso, 2),
            (AntennaMode::Mimo, 4),
        ] {
            let snr = link_snr(&point, &sensor, mode, &params()).unwrap();
            assert_eq!(snr.branch_snrs.len(), branches);
            assert_relative_eq!(
                snr.combined,
                snr.branch_snrs.iter().sum::<f64>(),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn doubling_distance_along_a_ray_divides_every_branch_by_four() {
        let sensor = Vector3::new(0.0, 0.0, 0.0);
        let near = Vector3::new(30.0, 40.0, 50.0);
        let far = 2.0 * near;
        let snr_near = link_snr(&near, &sensor, AntennaMode::Mimo, &params()).unwrap();
        let snr_far = link_snr(&far, &sensor, AntennaMode::Mimo, &params()).unwrap();
        for (n, f) in snr_near.branch_snrs.iter().zip(&snr_far.branch_snrs) {
            if *n == 0.0 {
                assert_eq!(*f, 0.0);
            } else {
                assert_relative_eq!(n / f, 4.0, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(snr_near.combined / snr_far.combined, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn toa_std_at_snr_100_matches_frozen_value() {
        let sigma = toa_variance(100.0, &params()).sqrt();
        assert_relative_eq!(sigma, 3.898484006168381e-9, max_relative = 1e-12);
        assert_relative_eq!(
            sigma * SPEED_OF_LIGHT_M_S,
            1.1687361026829062,
            max_relative = 1e-12
        );
    }

    #[test]
    fn hundredfold_snr_divides_toa_std_by_ten() {
        let low = toa_variance(37.0, &params()).sqrt();
        let high = toa_variance(3700.0, &params()).sqrt();
        assert_relative_eq!(low / high, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn combined_snr_matches_frozen_interior_values() {
        let point = Vector3::new(112.5, 237.5, 100.0);
        let sensor = Vector3::new(250.0, 500.0, 0.0);
        let siso = link_snr(&point, &sensor, AntennaMode::Siso, &params()).unwrap();
        let mimo = link_snr(&point, &sensor, AntennaMode::Mimo, &params()).unwrap();
        assert_relative_eq!(siso.combined, 4997.772121105487, max_relative = FROZEN_TOLERANCE);
        assert_relative_eq!(mimo.combined, 5970.655252700719, max_relative = FROZEN_TOLERANCE);
    }

    #[test]
    fn crlb_matches_frozen_values_at_pinned_points() {
        let cases = [
            (
                Vector3::new(112.5, 237.5, 100.0),
                AntennaMode::Siso,
                26.603094703721588,
            ),
            (
                Vector3::new(112.5, 237.5, 100.0),
                AntennaMode::Miso,
                26.464133263986387,
            ),
            (
                Vector3::new(112.5, 237.5, 100.0),
                AntennaMode::Mimo,
                25.97215906167884,
            ),
            (
                Vector3::new(-237.5, -487.5, 100.0),
                AntennaMode::Mimo,
                4.171190081921324,
            ),
            (
                Vector3::new(62.5, -12.5, 500.0),
                AntennaMode::Mimo,
                1022.7854578312957,
            ),
        ];
        for (point, mode, expected) in cases {
            let result = tdoa_fim(&point, &corridor(), mode, &params()).unwrap();
            assert!(result.observable);
            assert_relative_eq!(result.rmse_m, expected, max_relative = FROZEN_TOLERANCE);
        }
    }

    #[test]
    fn dropping_an_infinite_variance_row_equals_omitting_the_sensor() {
        let mut sensors = corridor().sensors().to_vec();
        sensors.push(Vector3::new(300.0, 100.0, 0.0));
        let point = Vector3::new(80.0, -140.0, 150.0);
        let variances = [2.0e-18, 3.0e-18, 2.5e-18, 4.0e-18, f64::INFINITY];
        let with_dead_row = fim_from_links(&point, &sensors, &variances).unwrap();
        let without = fim_from_links(&point, &sensors[..4], &variances[..4]).unwrap();
        assert_relative_eq!(with_dead_row.fim, without.fim, max_relative = 1e-15);
        assert_relative_eq!(with_dead_row.rmse_m, without.rmse_m, max_relative = 1e-15);
    }

    #[test]
    fn reference_sensor_choice_does_not_change_the_fim() {
        let point = Vector3::new(112.5, 237.5, 100.0);
        let sensors = corridor().sensors().to_vec();
        let variances: Vec<f64> = sensors
            .iter()
            .map(|s| {
                let snr = link_snr(&point, s, AntennaMode::Mimo, &params()).unwrap();
                toa_variance(snr.combined, &params())
            })
            .collect();
        let baseline = fim_from_links(&point, &sensors, &variances).unwrap();
        for rotation in 1..4 {
            let mut rotated_sensors = sensors.clone();
            rotated_sensors.rotate_left(rotation);
            let mut rotated_variances = variances.clone();
            rotated_variances.rotate_left(rotation);
            let rotated = fim_from_links(&point, &rotated_sensors, &rotated_variances).unwrap();
            assert_relative_eq!(rotated.fim, baseline.fim, max_relative = 1e-9);
            assert_relative_eq!(rotated.rmse_m, baseline.rmse_m, max_relative = 1e-9);
        }
    }

    #[test]
    fn point_above_centroid_is_z_blind() {
        let result = tdoa_fim(
            &Vector3::new(0.0, 0.0, 100.0),
            &corridor(),
            AntennaMode::Mimo,
            &params(),
        )
        .unwrap();
        assert!(!result.observable);
        assert!(result.rmse_m.is_infinite());
    }

    #[test]
    fn coincident_sensor_is_rejected() {
        let sensors = corridor().sensors().to_vec();
        let err = fim_from_links(&sensors[1].clone(), &sensors, &[1e-18; 4]).unwrap_err();
        assert!(matches!(err, LocalizationError::CoincidentSensor { index: 1 }));
    }

    #[test]
    fn scaling_snr_by_k_scales_rmse_by_inverse_sqrt_k() {
        let point = Vector3::new(112.5, 237.5, 100.0);
        let baseline = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &params()).unwrap();
        let boosted_params = UavRadioParams {
            tx_power_dbm: params().tx_power_dbm + 10.0 * 7.0_f64.log10(),
            ..params()
        };
        let boosted = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &boosted_params).unwrap();
        assert_relative_eq!(
            baseline.rmse_m / boosted.rmse_m,
            7.0_f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rmse_field_mirrors_across_both_axes() {
        let point = Vector3::new(160.0, -320.0, 140.0);
        let base = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &params()).unwrap();
        for mirrored in [
            Vector3::new(-point.x, point.y, point.z),
            Vector3::new(point.x, -point.y, point.z),
        ] {
            let other = tdoa_fim(&mirrored, &corridor(), AntennaMode::Mimo, &params()).unwrap();
            assert_relative_eq!(other.rmse_m, base.rmse_m, max_relative = 1e-9);
        }
    }

    #[test]
    fn richer_antenna_modes_never_lose_on_a_coarse_grid() {
        let config_base = SweepConfig {
            spacing_m: 100.0,
            ..SweepConfig::new(500.0, 1000.0, vec![100.0, 500.0], AntennaMode::Siso)
        };
        let siso = corridor_sweep(&config_base).unwrap();
        let miso = corridor_sweep(&SweepConfig {
            mode: AntennaMode::Miso,
            ..config_base.clone()
        })
        .unwrap();
        let mimo = corridor_sweep(&SweepConfig {
            mode: AntennaMode::Mimo,
            ..config_base.clone()
        })
        .unwrap();
        for (slice_siso, (slice_miso, slice_mimo)) in siso
            .slices
            .iter()
            .zip(miso.slices.iter().zip(mimo.slices.iter()))
        {
            for ((s, m), mm) in slice_siso
                .points()
                .iter()
                .zip(slice_miso.points())
                .zip(slice_mimo.points())
            {
                assert!(m.rmse_m <= s.rmse_m * (1.0 + 1e-9));
                assert!(mm.rmse_m <= m.rmse_m * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn sweep_medians_match_frozen_values() {
        let result = corridor_sweep(&SweepConfig::new(
            500.0,
            1000.0,
            vec![100.0, 500.0],
            AntennaMode::Mimo,
        ))
        .unwrap();
        assert_eq!(result.slices.len(), 2);
        for slice in &result.slices {
            assert_eq!(slice.points().len(), 800);
            assert_eq!(slice.n_unobservable(), 0);
        }
        assert_relative_eq!(
            result.slices[0].median_rmse_m(),
            29.82300989845046,
            max_relative = FROZEN_TOLERANCE
        );
        assert_relative_eq!(
            result.slices[1].median_rmse_m(),
            43.09858408127501,
            max_relative = FROZEN_TOLERANCE
        );

        let wide = corridor_sweep(&SweepConfig::new(
            500.0,
            2000.0,
            vec![100.0],
            AntennaMode::Mimo,
        ))
        .unwrap();
        assert_relative_eq!(
            wide.slices[0].median_rmse_m(),
            222.28448131298683,
            max_relative = FROZEN_TOLERANCE
        );
    }

    #[test]
    fn cdf_is_monotone_and_normalized() {
        let result = corridor_sweep(&SweepConfig {
            spacing_m: 50.0,
            ..SweepConfig::new(500.0, 1000.0, vec![100.0], AntennaMode::Mimo)
        })
        .unwrap();
        let slice = &result.slices[0];
        assert_eq!(slice.cdf(0.0), 0.0);
        let mut previous = 0.0;
        for delta in [1.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1e6] {
            let value = slice.cdf(delta);
            assert!(value >= previous);
            previous = value;
        }
        assert_eq!(slice.cdf(f64::MAX), 1.0);
    }

    #[test]
    fn coplanar_slice_has_no_observable_points() {
        let err = corridor_sweep(&SweepConfig::new(
            500.0,
            1000.0,
            vec![0.0],
            AntennaMode::Mimo,
        ))
        .unwrap_err();
        assert!(matches!(
            err,
            LocalizationError::NoObservablePoints { height_m } if height_m == 0.0
        ));
    }

    #[test]
    fn sweep_validates_inputs() {
        let base = SweepConfig::new(500.0, 1000.0, vec![100.0], AntennaMode::Siso);
        assert!(matches!(
            corridor_sweep(&SweepConfig {
                heights_m: vec![],
                ..base.clone()
            }),
            Err(LocalizationError::NoHeights)
        ));
        assert!(matches!(
            corridor_sweep(&SweepConfig {
                heights_m: vec![-10.0],
                ..base.clone()
            }),
            Err(LocalizationError::InvalidHeight(_))
        ));
        assert!(matches!(
            corridor_sweep(&SweepConfig {
                spacing_m: 0.0,
                ..base.clone()
            }),
            Err(LocalizationError::InvalidSpacing { .. })
        ));
        assert!(matches!(
            corridor_sweep(&SweepConfig {
                spacing_m: 600.0,
                ..base.clone()
            }),
            Err(LocalizationError::InvalidSpacing { .. })
        ));
        assert!(matches!(
            corridor_sweep(&SweepConfig {
                dx_m: -1.0,
                ..base
            }),
            Err(LocalizationError::InvalidExtent(_))
        ));
    }

    #[test]
    fn monte_carlo_estimator_tracks_the_bound_at_a_well_conditioned_point() {
        let point = Vector3::new(-237.5, -487.5, 100.0);
        let bound = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rmse = monte_carlo_rmse(
            &point,
            &corridor(),
            AntennaMode::Mimo,
            &params(),
            1500,
            &mut rng,
        )
        .unwrap();
        let ratio = rmse / bound.rmse_m;
        assert!(
            (0.9..=1.15).contains(&ratio),
            "estimator RMSE {rmse} vs bound {} (ratio {ratio})",
            bound.rmse_m
        );
    }

    #[test]
    fn monte_carlo_is_deterministic_for_a_fixed_seed() {
        let point = Vector3::new(-237.5, -487.5, 100.0);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            monte_carlo_rmse(
                &point,
                &corridor(),
                AntennaMode::Mimo,
                &params(),
                200,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(5).to_bits(), run(5).to_bits());
        assert_ne!(run(5).to_bits(), run(6).to_bits());
    }

    #[test]
    fn monte_carlo_rejects_degenerate_requests() {
        let point = Vector3::new(-237.5, -487.5, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            monte_carlo_rmse(
                &point,
                &corridor(),
                AntennaMode::Mimo,
                &params(),
                0,
                &mut rng
            ),
            Err(LocalizationError::NoTrials)
        ));
        assert!(matches!(
            monte_carlo_rmse(
                &Vector3::new(0.0, 0.0, 100.0),
                &corridor(),
                AntennaMode::Mimo,
                &params(),
                100,
                &mut rng
            ),
            Err(LocalizationError::UnobservablePoint { .. })
        ));
    }

    #[test]
    fn link_count_mismatch_is_rejected() {
        let sensors = corridor().sensors().to_vec();
        let err = fim_from_links(&Vector3::new(0.0, 0.0, 100.0), &sensors, &[1e-18; 3])
            .unwrap_err();
        assert!(matches!(
            err,
            LocalizationError::LinkCountMismatch {
                sensors: 4,
                variances: 3
            }
        ));
    }

    proptest! {
        #[test]
        fn fim_is_symmetric_and_psd_at_random_points(
            x in -400.0..400.0f64,
            y in -900.0..900.0f64,
            z in 50.0..600.0f64,
        ) {
            let point = Vector3::new(x, y, z);
            let result = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &params());
            prop_assume!(result.is_ok());
            let result = result.unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(result.fim[(i, j)], result.fim[(j, i)]);
                }
            }
            let eigenvalues = result.fim.symmetric_eigen().eigenvalues;
            let lambda_max = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            for lambda in eigenvalues.iter() {
                prop_assert!(*lambda >= -1e-9 * lambda_max);
            }
        }

        #[test]
        fn richer_modes_dominate_at_random_points(
            x in -400.0..400.0f64,
            y in -900.0..900.0f64,
            z in 50.0..600.0f64,
        ) {
            let point = Vector3::new(x, y, z);
            let mimo = tdoa_fim(&point, &corridor(), AntennaMode::Mimo, &params());
            let miso = tdoa_fim(&point, &corridor(), AntennaMode::Miso, &params());
            let siso = tdoa_fim(&point, &corridor(), AntennaMode::Siso, &params());
            prop_assume!(mimo.is_ok() && miso.is_ok() && siso.is_ok());
            let (mimo, miso, siso) = (mimo.unwrap(), miso.unwrap(), siso.unwrap());
            prop_assume!(mimo.observable && miso.observable && siso.observable);
            prop_assert!(mimo.rmse_m <= miso.rmse_m * (1.0 + 1e-9));
            prop_assert!(miso.rmse_m <= siso.rmse_m * (1.0 + 1e-9));
        }

        #[test]
        fn toa_variance_decreases_with_snr(snr in 1e-6..1e9f64, factor in 1.001..1e3f64) {
            let low = toa_variance(snr, &params());
            let high = toa_variance(snr * factor, &params());
            prop_assert!(high < low);
        }
    }
}
