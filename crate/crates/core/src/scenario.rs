//! Network geometry: a two-tier hexagonal site layout, the flat-topped
//! hexagonal cell around the center site, and rectangular evaluation grids
//! clipped to that cell.
//!
//! The lattice uses basis vectors at 30 and 90 degrees, which puts the six
//! nearest neighbours of a site at `isd` metres and orients every cell as a
//! flat-topped hexagon with one vertex pair on the x axis.

use nalgebra::Vector3;
use thiserror::Error;

/// Degrees-based lattice constants for the flat-topped cell orientation.
const EDGE_NORMAL_ANGLES_DEG: [f64; 6] = [30.0, 90.0, 150.0, 210.0, 270.0, 330.0];

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("inter-site distance must be positive and finite, got {0}")]
    InvalidIsd(f64),
    #[error("unsupported tier count {0}, layouts are defined for 0..=2 tiers")]
    UnsupportedTiers(u32),
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("grid height must be finite, got {0}")]
    InvalidHeight(f64),
    #[error("grid is empty: spacing {spacing_m} m leaves no point inside the cell")]
    EmptyGrid { spacing_m: f64 },
}

/// One base-station site. `uptilt_deg` is the extra panel steered above the
/// horizon; `None` means the site only carries the downtilted panel.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSite {
    pub id: usize,
    pub position: Vector3<f64>,
    /// Ring index: 0 for the center site, 1 or 2 for the surrounding rings.
    pub tier: u8,
    pub downtilt_deg: f64,
    pub uptilt_deg: Option<f64>,
}

impl CellSite {
    pub fn has_uptilt_panel(&self) -> bool {
        self.uptilt_deg.is_some()
    }
}

/// Site geometry plus the radio constants shared by every site.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub isd_m: f64,
    pub tiers: u32,
    pub carrier_hz: f64,
    pub bs_power_dbm: f64,
    pub bs_height_m: f64,
    pub sites: Vec<CellSite>,
}

/// Inputs for [`NetworkLayout::build`]; the defaults describe the study
/// baseline (2 GHz macro sites, 46 dBm, 25 m masts, 6 degree downtilt).
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutParams {
    pub isd_m: f64,
    pub tiers: u32,
    pub carrier_hz: f64,
    pub bs_power_dbm: f64,
    pub bs_height_m: f64,
    pub downtilt_deg: f64,
}

impl LayoutParams {
    pub fn new(isd_m: f64, tiers: u32) -> Self {
        Self {
            isd_m,
            tiers,
            carrier_hz: 2.0e9,
            bs_power_dbm: 46.0,
            bs_height_m: 25.0,
            downtilt_deg: 6.0,
        }
    }
}

/// Builds the default two-tier layout: 1 + 6 + 12 sites.
pub fn build_hex_layout(isd_m: f64, tiers: u32) -> Result<NetworkLayout, ScenarioError> {
    NetworkLayout::build(&LayoutParams::new(isd_m, tiers))
}

impl NetworkLayout {
    pub fn build(params: &LayoutParams) -> Result<Self, ScenarioError> {
        if !(params.isd_m.is_finite() && params.isd_m > 0.0) {
            return Err(ScenarioError::InvalidIsd(params.isd_m));
        }
        if params.tiers > 2 {
            return Err(ScenarioError::UnsupportedTiers(params.tiers));
        }

        let isd = params.isd_m;
        // Lattice basis at 30 and 90 degrees; both have length isd.
        let a1 = (isd * 30f64.to_radians().cos(), isd * 30f64.to_radians().sin());
        let a2 = (0.0, isd);

        let mut placed: Vec<(u8, f64, f64, f64)> = Vec::new();
        let t = params.tiers as i32;
        for q in -t..=t {
            for r in -t..=t {
                // Hex (ring) distance in axial coordinates.
                let ring = q.abs().max(r.abs()).max((q + r).abs()) as u32;
                if ring > params.tiers {
                    continue;
                }
                let x = q as f64 * a1.0 + r as f64 * a2.0;
                let y = q as f64 * a1.1 + r as f64 * a2.1;
                let angle = y.atan2(x).rem_euclid(std::f64::consts::TAU);
                placed.push((ring as u8, angle, x, y));
            }
        }
        placed.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite keys"));

        let sites = placed
            .into_iter()
            .enumerate()
            .map(|(id, (tier, _, x, y))| CellSite {
                id,
                position: Vector3::new(x, y, params.bs_height_m),
                tier,
                downtilt_deg: params.downtilt_deg,
                uptilt_deg: None,
            })
            .collect();

        Ok(Self {
            isd_m: params.isd_m,
            tiers: params.tiers,
            carrier_hz: params.carrier_hz,
            bs_power_dbm: params.bs_power_dbm,
            bs_height_m: params.bs_height_m,
            sites,
        })
    }

    /// Returns a copy where every site carries an uptilted panel with the
    /// given per-site angles (degrees above the horizon).
    pub fn with_uptilts(&self, uptilts_deg: &[f64]) -> Self {
        let mut layout = self.clone();
        for (site, &angle) in layout.sites.iter_mut().zip(uptilts_deg) {
            site.uptilt_deg = Some(angle);
        }
        layout
    }

    /// The hexagonal cell around the center site.
    pub fn center_cell(&self) -> HexCell {
        HexCell::new(self.isd_m)
    }
}

/// Flat-topped hexagonal cell centered at the origin: apothem `isd/2`,
/// circumradius `isd/sqrt(3)`, vertices on the x axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexCell {
    pub apothem_m: f64,
    pub circumradius_m: f64,
    normals: [(f64, f64); 6],
}

impl HexCell {
    pub fn new(isd_m: f64) -> Self {
        let normals = EDGE_NORMAL_ANGLES_DEG
            .map(|deg| (deg.to_radians().cos(), deg.to_radians().sin()));
        Self {
            apothem_m: isd_m / 2.0,
            circumradius_m: isd_m / 3f64.sqrt(),
            normals,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.signed_excess(x, y) <= 0.0
    }

    /// Largest half-plane violation; <= 0 inside, > 0 outside.
    pub fn signed_excess(&self, x: f64, y: f64) -> f64 {
        self.normals
            .iter()
            .map(|(nx, ny)| x * nx + y * ny - self.apothem_m)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clips the segment `from -> to` (with `from` inside) to the boundary.
    /// Returns the contact point and the outward normal of the crossed edge.
    pub fn clip(&self, from: (f64, f64), to: (f64, f64)) -> ((f64, f64), (f64, f64)) {
        let mut t_hit = 1.0f64;
        let mut hit_normal = self.normals[0];
        for &(nx, ny) in &self.normals {
            let d_from = from.0 * nx + from.1 * ny - self.apothem_m;
            let d_to = to.0 * nx + to.1 * ny - self.apothem_m;
            if d_to > 0.0 && d_to > d_from {
                let t = -d_from / (d_to - d_from);
                if t < t_hit {
                    t_hit = t;
                    hit_normal = (nx, ny);
                }
            }
        }
        let t = t_hit.clamp(0.0, 1.0);
        (
            (
                from.0 + t * (to.0 - from.0),
                from.1 + t * (to.1 - from.1),
            ),
            hit_normal,
        )
    }
}

/// One evaluation point with its integer lattice index, used for
/// 4-connectivity when measuring coverage fragmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub ix: i32,
    pub iy: i32,
    pub position: Vector3<f64>,
}

/// Horizontal grid of UAV positions at a fixed height, clipped to the
/// center cell. Points sit at half-spacing offsets so none falls on the
/// cell center or the symmetry axes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub height_m: f64,
    pub spacing_m: f64,
    pub points: Vec<GridPoint>,
}

/// Default grid pitch scales with the layout: 25 m at 1000 m ISD.
pub fn default_grid_spacing_m(isd_m: f64) -> f64 {
    isd_m / 40.0
}

pub fn build_grid(
    layout: &NetworkLayout,
    height_m: f64,
    spacing_m: f64,
) -> Result<EvaluationGrid, ScenarioError> {
    if !(spacing_m.is_finite() && spacing_m > 0.0) {
        return Err(ScenarioError::InvalidSpacing(spacing_m));
    }
    if !height_m.is_finite() {
        return Err(ScenarioError::InvalidHeight(height_m));
    }

    let cell = layout.center_cell();
    let reach = (cell.circumradius_m / spacing_m).ceil() as i32 + 1;
    let mut points = Vec::new();
    for ix in -reach..reach {
        for iy in -reach..reach {
            let x = (ix as f64 + 0.5) * spacing_m;
            let y = (iy as f64 + 0.5) * spacing_m;
            if cell.contains(x, y) {
                points.push(GridPoint {
                    ix,
                    iy,
                    position: Vector3::new(x, y, height_m),
                });
            }
        }
    }
    if points.is_empty() {
        return Err(ScenarioError::EmptyGrid { spacing_m });
    }
    Ok(EvaluationGrid {
        height_m,
        spacing_m,
        points,
    })
}
