//! Downlink coverage over an evaluation grid: per-panel RSRP through the
//! two-ray channel, strongest-panel association, SIR against the sum of all
//! other panels, and a fragmentation measure of the resulting serving map.
//!
//! Coverage maps are deterministic; shadow fading does not enter here.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::antenna::{AntennaError, UlaPanel};
use crate::channel::{two_ray_rx_power_dbm, ChannelError, LinkBudgetParams};
use crate::scenario::{CellSite, EvaluationGrid, NetworkLayout};

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("site {site} carries no uptilted panel")]
    MissingUptiltPanel { site: usize },
    #[error("coverage map has no points")]
    EmptyMap,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Antenna(#[from] AntennaError),
}

/// Which of the two per-site panels a value refers to. `Down` wins ties so
/// association is deterministic for co-located identical panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelKind {
    Down,
    Up,
}

impl std::fmt::Display for PanelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PanelKind::Down => write!(f, "down"),
            PanelKind::Up => write!(f, "up"),
        }
    }
}

/// Association result for one grid point. `sir_db` is `f64::INFINITY` when
/// the layout offers no interfering panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoverage {
    pub ix: i32,
    pub iy: i32,
    pub position: Vector3<f64>,
    pub serving_site: usize,
    pub serving_panel: PanelKind,
    pub rsrp_dbm: f64,
    pub sir_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub height_m: f64,
    pub spacing_m: f64,
    pub points: Vec<PointCoverage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageSummary {
    pub n_points: usize,
    /// Smallest finite SIR over the map; absent when every point is
    /// interference-free.
    pub min_sir_db: Option<f64>,
    pub fragmentation_index: usize,
    pub distinct_serving_sites: usize,
    pub site_histogram: BTreeMap<usize, usize>,
    pub tier_histogram: [usize; 3],
    /// Fraction of points served by an uptilted panel on a tier-2 site.
    pub tier2_uptilt_share: f64,
}

/// The panel set a layout radiates from: every site's downtilted panel plus
/// the uptilted one where configured.
fn build_panels(layout: &NetworkLayout) -> Result<Vec<(usize, PanelKind, UlaPanel)>, CoverageError> {
    let mut panels = Vec::with_capacity(layout.sites.len() * 2);
    for site in &layout.sites {
        panels.push((site.id, PanelKind::Down, UlaPanel::downtilt(site.downtilt_deg)?));
        if let Some(up) = site.uptilt_deg {
            panels.push((site.id, PanelKind::Up, UlaPanel::uptilt(up)?));
        }
    }
    Ok(panels)
}

fn panel_rsrp_dbm(
    point: &Vector3<f64>,
    site_position: &Vector3<f64>,
    panel: &UlaPanel,
    params: &LinkBudgetParams,
) -> Result<f64, ChannelError> {
    two_ray_rx_power_dbm(
        *site_position,
        *point,
        |look: Vector3<f64>| {
            let s = look.z.clamp(-1.0, 1.0);
            panel.gain_linear_parts(s, s.asin().to_degrees())
        },
        |_| 1.0,
        params,
    )
}

/// RSRP of one (site, panel) pair at a point, in dBm.
pub fn compute_rsrp(
    point: &Vector3<f64>,
    site: &CellSite,
    panel: PanelKind,
    params: &LinkBudgetParams,
) -> Result<f64, CoverageError> {
    let ula = match panel {
        PanelKind::Down => UlaPanel::downtilt(site.downtilt_deg)?,
        PanelKind::Up => UlaPanel::uptilt(
            site.uptilt_deg
                .ok_or(CoverageError::MissingUptiltPanel { site: site.id })?,
        )?,
    };
    Ok(panel_rsrp_dbm(point, &site.position, &ula, params)?)
}

/// Associates every grid point with its strongest panel and computes the
/// SIR against the linear sum of all other panels. Ties go to the lowest
/// site id, downtilted panel first.
pub fn associate(
    layout: &NetworkLayout,
    grid: &EvaluationGrid,
    params: &LinkBudgetParams,
) -> Result<CoverageMap, CoverageError> {
    if grid.points.is_empty() {
        return Err(CoverageError::EmptyMap);
    }
    let panels = build_panels(layout)?;
    let positions: Vec<Vector3<f64>> = layout.sites.iter().map(|s| s.position).collect();

    let points = grid
        .points
        .par_iter()
        .map(|gp| -> Result<PointCoverage, CoverageError> {
            let mut rsrp = Vec::with_capacity(panels.len());
            for (site_id, kind, ula) in &panels {
                rsrp.push((
                    *site_id,
                    *kind,
                    panel_rsrp_dbm(&gp.position, &positions[*site_id], ula, params)?,
                ));
            }
            // Strongest panel; the (site, panel) ordering of `panels` breaks ties.
            let (serving_site, serving_panel, serving_dbm) = rsrp
                .iter()
                .copied()
                .reduce(|best, cand| if cand.2 > best.2 { cand } else { best })
                .expect("at least one panel");
            let interference_mw: f64 = rsrp
                .iter()
                .filter(|(s, k, _)| !(*s == serving_site && *k == serving_panel))
                .map(|(_, _, dbm)| 10f64.powf(dbm / 10.0))
                .sum();
            let sir_db = if interference_mw > 0.0 {
                serving_dbm - 10.0 * interference_mw.log10()
            } else {
                f64::INFINITY
            };
            Ok(PointCoverage {
                ix: gp.ix,
                iy: gp.iy,
                position: gp.position,
                serving_site,
                serving_panel,
                rsrp_dbm: serving_dbm,
                sir_db,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(CoverageMap {
        height_m: grid.height_m,
        spacing_m: grid.spacing_m,
        points,
    })
}

/// Smallest finite SIR over the map; `None` when no point sees interference.
pub fn min_sir_db(map: &CoverageMap) -> Option<f64> {
    map.points
        .iter()
        .map(|p| p.sir_db)
        .filter(|s| s.is_finite())
        .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.min(s))))
}

/// Number of maximal 4-connected components of equal serving site over the
/// lattice indices. A map with a single serving site scores 1; every extra
/// island of some site adds one.
pub fn fragmentation_index(map: &CoverageMap) -> usize {
    let index: std::collections::HashMap<(i32, i32), usize> = map
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.ix, p.iy), i))
        .collect();
    let mut seen = vec![false; map.points.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..map.points.len() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        let server = map.points[start].serving_site;
        while let Some(i) = stack.pop() {
            let (ix, iy) = (map.points[i].ix, map.points[i].iy);
            for (nx, ny) in [(ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)] {
                if let Some(&j) = index.get(&(nx, ny)) {
                    if !seen[j] && map.points[j].serving_site == server {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    components
}

/// Aggregates a map into the serializable summary used for reports.
pub fn summarize(map: &CoverageMap, layout: &NetworkLayout) -> CoverageSummary {
    let mut site_histogram = BTreeMap::new();
    let mut tier_histogram = [0usize; 3];
    let mut tier2_up = 0usize;
    for p in &map.points {
        *site_histogram.entry(p.serving_site).or_insert(0) += 1;
        let tier = layout.sites[p.serving_site].tier as usize;
        tier_histogram[tier.min(2)] += 1;
        if tier == 2 && p.serving_panel == PanelKind::Up {
            tier2_up += 1;
        }
    }
    CoverageSummary {
        n_points: map.points.len(),
        min_sir_db: min_sir_db(map),
        fragmentation_index: fragmentation_index(map),
        distinct_serving_sites: site_histogram.len(),
        site_histogram,
        tier_histogram,
        tier2_uptilt_share: tier2_up as f64 / map.points.len().max(1) as f64,
    }
}
