//! 3-DoF catheter kinematics on the vessel tree. The body rides the
//! centerline of a committed route; the articulated tip points off-axis by
//! base_angle + knob deflection, expressed as a rail offset plus a lateral
//! offset clamped inside the lumen.

use serde::{Deserialize, Serialize};

use super::phantom::VesselMap;
use crate::config::SimConfig;
use crate::error::{Error, Result};

/// Knob deflection at full bend, radians.
pub const KNOB_GAIN: f64 = 1.0;
/// Lateral clearance kept from the vessel wall, pixels.
const WALL_PAD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatheterState {
    /// Arclength of the body end along the committed route, pixels.
    pub insertion: f64,
    /// Base roll angle, radians; unbounded, the expert keeps it small.
    pub base_angle: f64,
    /// Normalized tip curvature command in [-1, 1].
    pub knob_bend: f64,
    /// Segment ids from the root; extended/popped as junctions are crossed.
    pub route: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPose {
    pub point: [f64; 2],
    pub heading: f64,
    /// Arclength of the tip's rail foot along the route.
    pub arc: f64,
}

impl CatheterState {
    pub fn at_entry(map: &VesselMap) -> Self {
        let root = map
            .segments
            .iter()
            .position(|s| s.parent.is_none())
            .expect("validated map has a root");
        Self {
            insertion: 0.0,
            base_angle: 0.0,
            knob_bend: 0.0,
            route: vec![root],
        }
    }

    /// Total steering deflection relative to the rail tangent.
    pub fn steer(&self) -> f64 {
        self.base_angle + KNOB_GAIN * self.knob_bend
    }

    /// Derived tip pose. The tip extends tip_len from the body end; its
    /// forward component advances along the rail (clamped at the route end)
    /// and its lateral component is clamped inside the lumen.
    pub fn tip_pose(&self, map: &VesselMap, tip_len: f64) -> TipPose {
        let phi = self.steer();
        let total = map.route_length(&self.route);
        let arc = (self.insertion + tip_len * phi.cos()).clamp(0.0, total);
        let (rail, tangent) = map.pose_on_route(&self.route, arc);
        let r_lim = (map.radius_on_route(&self.route, arc) - WALL_PAD).max(0.0);
        let lateral = (tip_len * phi.sin()).clamp(-r_lim, r_lim);
        // Normal is the tangent rotated +90 degrees (y-down world).
        let normal = [-tangent.sin(), tangent.cos()];
        let point = [rail[0] + lateral * normal[0], rail[1] + lateral * normal[1]];
        TipPose {
            point,
            heading: tangent + phi,
            arc,
        }
    }
}

/// One kinematic step. Branch commits happen when the tip crosses a junction:
/// the child whose initial direction best matches the steering heading is
/// appended to the route. Retraction across a junction pops it again.
pub fn step(
    state: &CatheterState,
    action: [f64; 3],
    map: &VesselMap,
    cfg: &SimConfig,
) -> Result<CatheterState> {
    for (i, a) in action.iter().enumerate() {
        if !a.is_finite() || *a < -1.0 || *a > 1.0 {
            return Err(Error::Simulation(format!(
                "action component {i} out of range: {a}"
            )));
        }
    }
    let mut next = state.clone();
    next.base_angle += cfg.omega_max * action[1] * cfg.dt;
    next.knob_bend = (next.knob_bend + cfg.kappa_max * action[2] * cfg.dt).clamp(-1.0, 1.0);
    next.insertion = (next.insertion + cfg.v_max * action[0] * cfg.dt).max(0.0);

    // Commit branches while the tip would pass the end of the route.
    loop {
        let total = map.route_length(&next.route);
        if next.insertion + cfg.tip_len <= total {
            break;
        }
        let last = *next.route.last().unwrap();
        if map.segments[last].children.is_empty() {
            // Leaf: the end wall stops the body.
            next.insertion = next.insertion.min(total);
            break;
        }
        let (_, junction_tangent) = map.pose_on_route(&next.route, total);
        let heading = junction_tangent + next.steer();
        let chosen = *map.segments[last]
            .children
            .iter()
            .max_by(|&&a, &&b| {
                let da = angle_gap(child_dir(map, a), heading);
                let db = angle_gap(child_dir(map, b), heading);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        next.route.push(chosen);
    }

    // Pop committed branches once the tip is fully back across the junction.
    while next.route.len() > 1 {
        let last = *next.route.last().unwrap();
        let before = map.route_length(&next.route) - map.segments[last].length();
        if next.insertion + cfg.tip_len <= before {
            next.route.pop();
        } else {
            break;
        }
    }
    Ok(next)
}

/// Initial direction of a segment, from its first two vertices.
fn child_dir(map: &VesselMap, seg: usize) -> f64 {
    let pts = &map.segments[seg].points;
    (pts[1][1] - pts[0][1]).atan2(pts[1][0] - pts[0][0])
}

/// Cosine similarity of two directions; larger means closer.
fn angle_gap(a: f64, b: f64) -> f64 {
    (a - b).cos()
}
