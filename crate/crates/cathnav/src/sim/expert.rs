//! Scripted demonstrator: pure pursuit along the route to the target with
//! the knob tracking the lookahead heading, the base slowly absorbing the
//! standing knob deflection, and translation scaled by heading alignment.

use super::kinematics::CatheterState;
use super::phantom::VesselMap;
use crate::config::SimConfig;
use crate::error::Result;

/// Knob feedback gain on steering error.
const GAIN_KNOB: f64 = 6.0;
/// Base-rotation gain on standing knob deflection.
const GAIN_ROT: f64 = 0.6;
/// Translation gain on heading alignment.
const GAIN_TRANS: f64 = 1.4;
/// Steering target is capped at this deflection, radians.
const MAX_STEER: f64 = std::f64::consts::FRAC_PI_2;

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// One control decision. Returns (0,0,0) once the tip is within eps_goal of
/// the target; translation is never negative, so rollouts are forward-only.
pub fn expert_policy(
    state: &CatheterState,
    map: &VesselMap,
    target_id: usize,
    cfg: &SimConfig,
) -> Result<[f64; 3]> {
    let route = map.route_to(target_id)?;
    let target = map
        .targets
        .iter()
        .find(|t| t.id == target_id)
        .expect("route_to validated the id")
        .point;

    let tip = state.tip_pose(map, cfg.tip_len);
    let dist_to_target =
        ((tip.point[0] - target[0]).powi(2) + (tip.point[1] - target[1]).powi(2)).sqrt();
    if dist_to_target <= cfg.eps_goal {
        return Ok([0.0, 0.0, 0.0]);
    }

    // The committed route must be a prefix of the target route; a diverged
    // rollout (possible under extreme noise) stalls and is rejected by the
    // episode step cap.
    let diverged = state
        .route
        .iter()
        .zip(route.iter())
        .any(|(a, b)| a != b)
        || state.route.len() > route.len();

    let total = map.route_length(&route);
    let lookahead = (1.5 * cfg.tip_len).max(6.0);
    let aim_arc = (tip.arc + lookahead).min(total);
    let (aim, _) = map.pose_on_route(&route, aim_arc);
    let (_, rail_tangent) = map.pose_on_route(&route, tip.arc);

    let to_aim = [aim[0] - tip.point[0], aim[1] - tip.point[1]];
    let beta = if to_aim[0].abs() + to_aim[1].abs() < 1e-9 {
        rail_tangent
    } else {
        to_aim[1].atan2(to_aim[0])
    };

    let steer_target = wrap(beta - rail_tangent).clamp(-MAX_STEER, MAX_STEER);
    let knob = (GAIN_KNOB * wrap(steer_target - state.steer())).clamp(-1.0, 1.0);
    let rot = (GAIN_ROT * state.knob_bend).clamp(-1.0, 1.0);

    let align = wrap(beta - tip.heading).cos();
    let slow = ((total - tip.arc) / (4.0 * cfg.eps_goal)).clamp(0.2, 1.0);
    let trans = if diverged {
        0.0
    } else {
        (GAIN_TRANS * align.max(0.0) * slow).clamp(0.0, 1.0)
    };
    Ok([trans, rot, knob])
}
