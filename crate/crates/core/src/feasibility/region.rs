use serde::{Deserialize, Serialize};

use super::polygon;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    /// Convex hull of the contact points projected on the ground plane.
    #[default]
    Flat,
    /// Friction- and actuation-consistent CoM region.
    MultiContact,
}

impl std::str::FromStr for RegionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flat" => Ok(RegionMode::Flat),
            "multi-contact" => Ok(RegionMode::MultiContact),
            other => Err(format!("unknown region mode `{other}` (expected flat or multi-contact)")),
        }
    }
}

/// Convex polygon of admissible CoM ground positions, counter-clockwise.
/// Fewer than three vertices describe a zero-area segment or point region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportRegion {
    pub vertices: Vec<[f64; 2]>,
    pub mode: RegionMode,
    /// Outer/inner area gap at which construction stopped (m²).
    pub tolerance: f64,
}

impl SupportRegion {
    pub fn new(vertices: Vec<[f64; 2]>, mode: RegionMode) -> Self {
        SupportRegion {
            vertices,
            mode,
            tolerance: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        polygon::area(&self.vertices)
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        polygon::contains(&self.vertices, p, tol)
    }

    /// Half-planes `n·x ≤ d` whose intersection is the region. Segments and
    /// points get caps along their extent so the set is bounded.
    pub fn halfplanes(&self) -> Vec<([f64; 2], f64)> {
        let v = &self.vertices;
        match v.len() {
            0 => Vec::new(),
            1 => {
                let [x, y] = v[0];
                vec![([1.0, 0.0], x), ([-1.0, 0.0], -x), ([0.0, 1.0], y), ([0.0, -1.0], -y)]
            }
            2 => {
                let (a, b) = (v[0], v[1]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = (dx * dx + dy * dy).sqrt();
                let t = [dx / len, dy / len];
                let n = [t[1], -t[0]];
                let dot = |u: [f64; 2], p: [f64; 2]| u[0] * p[0] + u[1] * p[1];
                vec![
                    (n, dot(n, a)),
                    ([-n[0], -n[1]], -dot(n, a)),
                    (t, dot(t, b)),
                    ([-t[0], -t[1]], -dot(t, a)),
                ]
            }
            _ => polygon::edge_halfplanes(v),
        }
    }
}

/// Signed distance from `com_xy` to the nearest region edge: positive inside,
/// negative outside, zero on the boundary, −∞ for an empty region.
pub fn stability_margin(region: &SupportRegion, com_xy: [f64; 2]) -> f64 {
    if region.is_empty() {
        return f64::NEG_INFINITY;
    }
    let d = polygon::boundary_distance(&region.vertices, com_xy);
    if region.vertices.len() >= 3 && polygon::contains(&region.vertices, com_xy, 0.0) {
        d
    } else {
        -d
    }
}
