//! Propagation and noise models.
//!
//! The two-ray model sums the direct field and a ground-reflected field
//! coherently; antenna gains enter per ray through closures that receive the
//! unit "look" direction from the antenna toward the other endpoint (direct
//! ray) or toward the bounce point (reflected ray). Disabling the ground
//! reflection reduces the model to an exact free-space link budget.
//!
//! Shadow fading is a first-order autoregressive log-normal process per
//! link, stationary from the first sample.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Received powers below this are reported as the floor (deep fade clamp).
pub const RX_POWER_FLOOR_DBM: f64 = -300.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("carrier frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("bandwidth must be positive, got {0} Hz")]
    NonPositiveBandwidth(f64),
    #[error("endpoint below ground at z = {0} m")]
    EndpointBelowGround(f64),
    #[error("transmitter and receiver coincide")]
    DegenerateGeometry,
    #[error("shadow fading sigma must be nonnegative and finite, got {0} dB")]
    InvalidSigma(f64),
    #[error("AR(1) coefficient must lie in (-1, 1), got {0}")]
    InvalidArCoefficient(f64),
}

/// Radio constants for one link budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetParams {
    pub carrier_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub ground_reflection_enabled: bool,
    /// Complex ground reflection coefficient; -1 models a perfect reflector.
    pub reflection_coefficient: Complex64,
}

impl LinkBudgetParams {
    pub fn new(carrier_hz: f64, tx_power_dbm: f64) -> Self {
        Self {
            carrier_hz,
            tx_power_dbm,
            noise_figure_db: 7.0,
            bandwidth_hz: 10.0e6,
            ground_reflection_enabled: true,
            reflection_coefficient: Complex64::new(-1.0, 0.0),
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.carrier_hz
    }
}

/// Free-space path loss 20*log10(4*pi*d*f/c) in dB.
pub fn fspl_db(distance_m: f64, carrier_hz: f64) -> Result<f64, ChannelError> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
        return Err(ChannelError::NonPositiveFrequency(carrier_hz));
    }
    Ok(20.0
        * (4.0 * std::f64::consts::PI * distance_m * carrier_hz / SPEED_OF_LIGHT_M_S).log10())
}

/// Thermal noise power -174 dBm/Hz + 10*log10(B) + NF.
pub fn noise_power_dbm(params: &LinkBudgetParams) -> Result<f64, ChannelError> {
    if !(params.bandwidth_hz.is_finite() && params.bandwidth_hz > 0.0) {
        return Err(ChannelError::NonPositiveBandwidth(params.bandwidth_hz));
    }
    Ok(-174.0 + 10.0 * params.bandwidth_hz.log10() + params.noise_figure_db)
}

/// Received power of the coherent two-ray link in dBm.
///
/// `tx_gain` and `rx_gain` return linear gains for a unit look direction
/// (from that antenna toward the other endpoint, or toward the ground
/// bounce for the reflected ray). Deep destructive fades clamp to
/// [`RX_POWER_FLOOR_DBM`].
pub fn two_ray_rx_power_dbm<GT, GR>(
    tx: Vector3<f64>,
    rx: Vector3<f64>,
    tx_gain: GT,
    rx_gain: GR,
    params: &LinkBudgetParams,
) -> Result<f64, ChannelError>
where
    GT: Fn(Vector3<f64>) -> f64,
    GR: Fn(Vector3<f64>) -> f64,
{
    if tx.z < 0.0 {
        return Err(ChannelError::EndpointBelowGround(tx.z));
    }
    if rx.z < 0.0 {
        return Err(ChannelError::EndpointBelowGround(rx.z));
    }
    if !(params.carrier_hz.is_finite() && params.carrier_hz > 0.0) {
        return Err(ChannelError::NonPositiveFrequency(params.carrier_hz));
    }

    let lambda = params.wavelength_m();
    let field_scale = lambda / (4.0 * std::f64::consts::PI);
    let k = std::f64::consts::TAU / lambda;

    let v = rx - tx;
    let d_direct = v.norm();
    if d_direct == 0.0 {
        return Err(ChannelError::DegenerateGeometry);
    }
    let u = v / d_direct;
    let g_direct = tx_gain(u) * rx_gain(-u);
    let mut field = Complex64::from_polar(g_direct.sqrt() * field_scale / d_direct, -k * d_direct);

    if params.ground_reflection_enabled {
        // Image of the transmitter below the ground plane.
        let image = Vector3::new(tx.x, tx.y, -tx.z);
        let w = rx - image;
        let d_reflected = w.norm();
        if d_reflected > 0.0 {
            let ur = w / d_reflected;
            // Both antennas look down toward the bounce point.
            let tx_look = Vector3::new(ur.x, ur.y, -ur.z);
            let rx_look = -ur;
            let g_reflected = tx_gain(tx_look) * rx_gain(rx_look);
            field += params.reflection_coefficient
                * Complex64::from_polar(
                    g_reflected.sqrt() * field_scale / d_reflected,
                    -k * d_reflected,
                );
        }
    }

    let magnitude = field.norm();
    if magnitude <= 0.0 {
        return Ok(RX_POWER_FLOOR_DBM);
    }
    Ok((params.tx_power_dbm + 20.0 * magnitude.log10()).max(RX_POWER_FLOOR_DBM))
}

/// Log-normal shadow fading: per link, x' = a*x + sigma*sqrt(1-a^2)*w with
/// the first sample drawn from the stationary N(0, sigma^2) distribution.
#[derive(Debug, Clone)]
pub struct ShadowFadingProcess {
    sigma_db: f64,
    ar_coefficient: f64,
    innovation_std_db: f64,
    state_db: Vec<Option<f64>>,
}

impl ShadowFadingProcess {
    pub fn new(sigma_db: f64, ar_coefficient: f64) -> Result<Self, ChannelError> {
        if !(sigma_db.is_finite() && sigma_db >= 0.0) {
            return Err(ChannelError::InvalidSigma(sigma_db));
        }
        if !(ar_coefficient.is_finite() && ar_coefficient.abs() < 1.0) {
            return Err(ChannelError::InvalidArCoefficient(ar_coefficient));
        }
        Ok(Self {
            sigma_db,
            ar_coefficient,
            innovation_std_db: sigma_db * (1.0 - ar_coefficient * ar_coefficient).sqrt(),
            state_db: Vec::new(),
        })
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    pub fn ar_coefficient(&self) -> f64 {
        self.ar_coefficient
    }

    /// Advances the given link by one step and returns its new value in dB.
    pub fn step<R: Rng + ?Sized>(&mut self, link_id: usize, rng: &mut R) -> f64 {
        if link_id >= self.state_db.len() {
            self.state_db.resize(link_id + 1, None);
        }
        let w: f64 = rng.sample(StandardNormal);
        let next = match self.state_db[link_id] {
            None => self.sigma_db * w,
            Some(x) => self.ar_coefficient * x + self.innovation_std_db * w,
        };
        self.state_db[link_id] = Some(next);
        next
    }
}
