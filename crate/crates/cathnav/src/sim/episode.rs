//! Expert rollout with seeded action noise, producing the frame/action
//! sequence for one episode. The terminal pair shows the tip at the target
//! with the all-zero stop action.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::expert::expert_policy;
use super::kinematics::{step, CatheterState};
use super::phantom::VesselMap;
use super::render::Renderer;
use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct Episode {
    pub scenario_id: usize,
    pub repetition_id: usize,
    pub seed: u64,
    /// One frame per recorded action row.
    pub frames: Vec<RgbImage>,
    /// Applied (noisy) actions; the last row is the stop action (0,0,0).
    pub states: Vec<[f64; 3]>,
    /// Tip positions, for lumen-containment checks.
    pub tip_trace: Vec<[f64; 2]>,
}

/// Rolls out the expert with additive clipped Gaussian noise until the tip
/// is within eps_goal of the target. Translation stays in [0,1] so episodes
/// are forward-only; rotation and knob stay in [-1,1].
pub fn generate_episode(
    map: &VesselMap,
    renderer: &Renderer,
    target_id: usize,
    repetition_id: usize,
    seed: u64,
    cfg: &SimConfig,
) -> Result<Episode> {
    if cfg.noise_scale < 0.0 {
        return Err(Error::InvalidArgument("noise_scale must be >= 0".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = if cfg.noise_scale > 0.0 {
        Some(Normal::new(0.0, cfg.noise_scale).expect("validated scale"))
    } else {
        None
    };

    let mut state = CatheterState::at_entry(map);
    let mut frames = Vec::new();
    let mut states = Vec::new();
    let mut tip_trace = Vec::new();

    for _ in 0..cfg.step_cap {
        let expert = expert_policy(&state, map, target_id, cfg)?;
        let tip = state.tip_pose(map, cfg.tip_len);
        tip_trace.push(tip.point);
        if expert == [0.0, 0.0, 0.0] {
            // Terminal pair: goal frame plus the stop action.
            frames.push(renderer.render(map, &state, target_id, cfg.tip_len)?);
            states.push([0.0, 0.0, 0.0]);
            return Ok(Episode {
                scenario_id: target_id,
                repetition_id,
                seed,
                frames,
                states,
                tip_trace,
            });
        }
        let mut applied = expert;
        if let Some(n) = &noise {
            for v in applied.iter_mut() {
                *v += n.sample(&mut rng);
            }
        }
        applied[0] = applied[0].clamp(0.0, 1.0);
        applied[1] = applied[1].clamp(-1.0, 1.0);
        applied[2] = applied[2].clamp(-1.0, 1.0);

        frames.push(renderer.render(map, &state, target_id, cfg.tip_len)?);
        states.push(applied);
        state = step(&state, applied, map, cfg)?;
    }
    Err(Error::ExpertFailure {
        target_id,
        steps: cfg.step_cap,
        seed,
    })
}
