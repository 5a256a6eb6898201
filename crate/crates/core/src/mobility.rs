//! Aerial vehicle mobility and handover statistics.
//!
//! One vehicle flies straight lines at constant height inside the center
//! cell, bouncing off the cell boundary onto a uniformly random inward
//! heading. Per 20 ms step the downtilted panel of every site is measured
//! through the two-ray channel plus per-link AR(1) shadow fading, and an
//! A3 event rule (hysteresis + time-to-trigger) drives handovers.
//!
//! A study is one long flight sliced into fixed windows; the per-window
//! handover counts form the reported PMF.

use nalgebra::Vector3;
use rand::Rng;
use thiserror::Error;

use crate::antenna::{AntennaError, UlaPanel};
use crate::channel::{
    two_ray_rx_power_dbm, ChannelError, LinkBudgetParams, ShadowFadingProcess,
};
use crate::scenario::{HexCell, NetworkLayout};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("speed must be nonnegative and finite, got {0} km/h")]
    InvalidSpeed(f64),
    #[error("step duration must be positive and finite, got {0} s")]
    InvalidStep(f64),
    #[error("window must span at least one step, got {0} s")]
    InvalidWindow(f64),
    #[error("study needs at least one window")]
    NoWindows,
    #[error("time to trigger must be nonnegative and finite, got {0} s")]
    InvalidTimeToTrigger(f64),
    #[error("hysteresis must be finite, got {0} dB")]
    InvalidHysteresis(f64),
    #[error("serving cell {serving} out of range for {cells} measured cells")]
    ServingOutOfRange { serving: usize, cells: usize },
    #[error("measurement vector is empty")]
    EmptyMeasurements,
    #[error("layout has no sites")]
    NoSites,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Antenna(#[from] AntennaError),
}

/// Flight parameters: constant height and speed, fixed sampling step,
/// fixed-length counting windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub height_m: f64,
    pub speed_kmph: f64,
    pub step_s: f64,
    pub window_s: f64,
    pub n_windows: usize,
}

impl TrajectoryConfig {
    pub fn new(height_m: f64, speed_kmph: f64) -> Self {
        Self {
            height_m,
            speed_kmph,
            step_s: 0.02,
            window_s: 180.0,
            n_windows: 1000,
        }
    }

    pub fn speed_m_s(&self) -> f64 {
        self.speed_kmph / 3.6
    }

    fn validate(&self) -> Result<(), MobilityError> {
        if !(self.speed_kmph.is_finite() && self.speed_kmph >= 0.0) {
            return Err(MobilityError::InvalidSpeed(self.speed_kmph));
        }
        if !(self.step_s.is_finite() && self.step_s > 0.0) {
            return Err(MobilityError::InvalidStep(self.step_s));
        }
        if self.window_s < self.step_s || !self.window_s.is_finite() {
            return Err(MobilityError::InvalidWindow(self.window_s));
        }
        if self.n_windows == 0 {
            return Err(MobilityError::NoWindows);
        }
        Ok(())
    }
}

/// A3 handover rule: a neighbour must exceed the serving cell by `hom_db`
/// continuously for `ttt_s` before the handover executes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandoverParams {
    pub ttt_s: f64,
    pub hom_db: f64,
}

impl Default for HandoverParams {
    fn default() -> Self {
        Self {
            ttt_s: 0.040,
            hom_db: 2.0,
        }
    }
}

impl HandoverParams {
    fn validate(&self) -> Result<(), MobilityError> {
        if !(self.ttt_s.is_finite() && self.ttt_s >= 0.0) {
            return Err(MobilityError::InvalidTimeToTrigger(self.ttt_s));
        }
        if !self.hom_db.is_finite() {
            return Err(MobilityError::InvalidHysteresis(self.hom_db));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoEvent {
    /// No A3 condition this sample (or a timer is still running).
    Idle,
    /// The A3 condition became true this sample; the timer starts at zero.
    A3Started,
    Handover {
        from: usize,
        to: usize,
    },
}

/// Per-sample handover state machine. The entry condition restarts from
/// scratch whenever it lapses before the time to trigger elapses; at expiry
/// the vehicle attaches to whichever neighbour is best at that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HandoverMachine {
    serving: usize,
    step_s: f64,
    elapsed_s: Option<f64>,
}

impl HandoverMachine {
    pub fn new(initial_serving: usize, step_s: f64) -> Result<Self, MobilityError> {
        if !(step_s.is_finite() && step_s > 0.0) {
            return Err(MobilityError::InvalidStep(step_s));
        }
        Ok(Self {
            serving: initial_serving,
            step_s,
            elapsed_s: None,
        })
    }

    pub fn serving(&self) -> usize {
        self.serving
    }

    pub fn step(
        &mut self,
        rsrp_dbm: &[f64],
        params: &HandoverParams,
    ) -> Result<HoEvent, MobilityError> {
        params.validate()?;
        if rsrp_dbm.is_empty() {
            return Err(MobilityError::EmptyMeasurements);
        }
        if self.serving >= rsrp_dbm.len() {
            return Err(MobilityError::ServingOutOfRange {
                serving: self.serving,
                cells: rsrp_dbm.len(),
            });
        }

        let mut best: Option<(usize, f64)> = None;
        for (i, &r) in rsrp_dbm.iter().enumerate() {
            if i == self.serving {
                continue;
            }
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        let Some((neighbour, neighbour_dbm)) = best else {
            self.elapsed_s = None;
            return Ok(HoEvent::Idle);
        };

        if neighbour_dbm <= rsrp_dbm[self.serving] + params.hom_db {
            self.elapsed_s = None;
            return Ok(HoEvent::Idle);
        }

        let (elapsed, started) = match self.elapsed_s {
            None => (0.0, true),
            Some(e) => (e + self.step_s, false),
        };
        if elapsed >= params.ttt_s - 1e-12 {
            let from = self.serving;
            self.serving = neighbour;
            self.elapsed_s = None;
            return Ok(HoEvent::Handover {
                from,
                to: neighbour,
            });
        }
        self.elapsed_s = Some(elapsed);
        Ok(if started { HoEvent::A3Started } else { HoEvent::Idle })
    }
}

/// Position and heading of the vehicle in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
}

/// Uniform position inside the cell with a uniform heading.
pub fn init_trajectory<R: Rng + ?Sized>(cell: &HexCell, rng: &mut R) -> TrajectoryState {
    let r = cell.circumradius_m;
    loop {
        let x = rng.gen_range(-r..r);
        let y = rng.gen_range(-r..r);
        if cell.contains(x, y) {
            return TrajectoryState {
                x,
                y,
                heading_rad: rng.gen_range(0.0..std::f64::consts::TAU),
            };
        }
    }
}

/// Advances one step: straight flight, or a clip to the boundary followed
/// by a uniformly random inward heading when the step would leave the cell.
pub fn step_trajectory<R: Rng + ?Sized>(
    state: &mut TrajectoryState,
    cell: &HexCell,
    step_length_m: f64,
    rng: &mut R,
) {
    let to = (
        state.x + step_length_m * state.heading_rad.cos(),
        state.y + step_length_m * state.heading_rad.sin(),
    );
    if cell.contains(to.0, to.1) {
        state.x = to.0;
        state.y = to.1;
        return;
    }
    let ((hx, hy), (nx, ny)) = cell.clip((state.x, state.y), to);
    state.x = hx;
    state.y = hy;
    // Uniform over headings that point back into the cell.
    for _ in 0..1024 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        if theta.cos() * nx + theta.sin() * ny < 0.0 {
            let probe = 1e-6 * step_length_m.max(1e-3);
            if cell.contains(state.x + probe * theta.cos(), state.y + probe * theta.sin()) {
                state.heading_rad = theta;
                return;
            }
        }
    }
    // Corner fallback: head straight back toward the center.
    state.heading_rad = (-state.y).atan2(-state.x);
}

/// Distribution of per-window handover counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HoCountPmf {
    /// `counts[h]` = number of windows with exactly `h` handovers.
    pub counts: Vec<usize>,
    pub n_windows: usize,
    pub mean: f64,
    pub variance: f64,
}

impl HoCountPmf {
    fn from_window_counts(window_counts: &[usize]) -> Self {
        let n = window_counts.len();
        let max = window_counts.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0usize; max + 1];
        for &c in window_counts {
            counts[c] += 1;
        }
        let mean = window_counts.iter().sum::<usize>() as f64 / n as f64;
        let variance = window_counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        Self {
            counts,
            n_windows: n,
            mean,
            variance,
        }
    }

    /// Probabilities summing to one.
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.n_windows as f64)
            .collect()
    }
}

/// Runs the windowed handover study: one continuous flight, handovers among
/// the downtilted panels only. Trajectory randomness (start point, bounce
/// headings) and shadow fading innovations draw from separate streams so
/// fading variants can be compared on a fixed flight path.
pub fn run_mobility_study<RT, RS>(
    layout: &NetworkLayout,
    traj: &TrajectoryConfig,
    ho: &HandoverParams,
    params: &LinkBudgetParams,
    sf_sigma_db: f64,
    sf_ar_coefficient: f64,
    traj_rng: &mut RT,
    sf_rng: &mut RS,
) -> Result<HoCountPmf, MobilityError>
where
    RT: Rng + ?Sized,
    RS: Rng + ?Sized,
{
    traj.validate()?;
    ho.validate()?;
    if layout.sites.is_empty() {
        return Err(MobilityError::NoSites);
    }

    let cell = layout.center_cell();
    let panel = UlaPanel::downtilt(
        layout
            .sites
            .first()
            .map(|s| s.downtilt_deg)
            .unwrap_or(6.0),
    )?;
    let panels: Vec<UlaPanel> = layout
        .sites
        .iter()
        .map(|s| {
            if s.downtilt_deg == layout.sites[0].downtilt_deg {
                Ok(panel)
            } else {
                UlaPanel::downtilt(s.downtilt_deg)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut sf = ShadowFadingProcess::new(sf_sigma_db, sf_ar_coefficient)?;

    let step_length = traj.speed_m_s() * traj.step_s;
    let steps_per_window = (traj.window_s / traj.step_s).round() as usize;

    let mut state = init_trajectory(&cell, traj_rng);
    let mut rsrp = vec![0.0f64; layout.sites.len()];

    let measure = |state: &TrajectoryState,
                       rsrp: &mut [f64],
                       sf: &mut ShadowFadingProcess,
                       sf_rng: &mut RS|
     -> Result<(), MobilityError> {
        let uav = Vector3::new(state.x, state.y, traj.height_m);
        for (i, site) in layout.sites.iter().enumerate() {
            let p = two_ray_rx_power_dbm(
                site.position,
                uav,
                |look: Vector3<f64>| {
                    let s = look.z.clamp(-1.0, 1.0);
                    panels[i].gain_linear_parts(s, s.asin().to_degrees())
                },
                |_| 1.0,
                params,
            )?;
            rsrp[i] = p + sf.step(i, sf_rng);
        }
        Ok(())
    };

    // Attach to the strongest cell at the first sample.
    measure(&state, &mut rsrp, &mut sf, sf_rng)?;
    let initial = rsrp
        .iter()
        .enumerate()
        .reduce(|best, cand| if cand.1 > best.1 { cand } else { best })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut machine = HandoverMachine::new(initial, traj.step_s)?;
    machine.step(&rsrp, ho)?;

    let mut window_counts = Vec::with_capacity(traj.n_windows);
    for _ in 0..traj.n_windows {
        let mut handovers = 0usize;
        for _ in 0..steps_per_window {
            step_trajectory(&mut state, &cell, step_length, traj_rng);
            measure(&state, &mut rsrp, &mut sf, sf_rng)?;
            if let HoEvent::Handover { .. } = machine.step(&rsrp, ho)? {
                handovers += 1;
            }
        }
        window_counts.push(handovers);
    }
    Ok(HoCountPmf::from_window_counts(&window_counts))
}
