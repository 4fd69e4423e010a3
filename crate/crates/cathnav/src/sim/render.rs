//! Deterministic rasterizer: vessel lumen base layer (cached per map),
//! catheter body along the committed route, articulated tip, and the red
//! start/end dots of the active scenario.

use image::{Rgb, RgbImage};

use super::kinematics::CatheterState;
use super::phantom::VesselMap;
use crate::error::{Error, Result};

const BACKGROUND: [f64; 3] = [18.0, 18.0, 22.0];
const LUMEN: [f64; 3] = [108.0, 108.0, 114.0];
const BODY: Rgb<u8> = Rgb([222, 222, 226]);
const TIP: Rgb<u8> = Rgb([245, 245, 250]);
const DOT: Rgb<u8> = Rgb([215, 40, 45]);

const BODY_RADIUS: f64 = 1.6;
const DOT_RADIUS: f64 = 3.2;

pub struct Renderer {
    resolution: usize,
    /// Pixels per world unit.
    scale: f64,
    base: RgbImage,
}

impl Renderer {
    pub fn new(map: &VesselMap, resolution: usize) -> Result<Self> {
        if resolution < 32 {
            return Err(Error::InvalidArgument(format!(
                "render resolution must be >= 32, got {resolution}"
            )));
        }
        let scale = resolution as f64 / map.world_size;
        let mut base = RgbImage::new(resolution as u32, resolution as u32);
        for y in 0..resolution {
            for x in 0..resolution {
                let wx = (x as f64 + 0.5) / scale;
                let wy = (y as f64 + 0.5) / scale;
                let (d, seg) = map.nearest_centerline([wx, wy]);
                let r = map.segments[seg].radius;
                // One world-unit soft edge keeps the wall smooth and the
                // rasterization deterministic.
                let t = (r + 1.0 - d).clamp(0.0, 1.0);
                let px = [
                    BACKGROUND[0] + t * (LUMEN[0] - BACKGROUND[0]),
                    BACKGROUND[1] + t * (LUMEN[1] - BACKGROUND[1]),
                    BACKGROUND[2] + t * (LUMEN[2] - BACKGROUND[2]),
                ];
                base.put_pixel(
                    x as u32,
                    y as u32,
                    Rgb([px[0].round() as u8, px[1].round() as u8, px[2].round() as u8]),
                );
            }
        }
        Ok(Self {
            resolution,
            scale,
            base,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Renders the scene for one scenario: lumen, catheter up to the tip,
    /// and red dots at the entry and the active target.
    pub fn render(
        &self,
        map: &VesselMap,
        state: &CatheterState,
        target_id: usize,
        tip_len: f64,
    ) -> Result<RgbImage> {
        let target = map
            .targets
            .iter()
            .find(|t| t.id == target_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no target with id {target_id}")))?;
        let mut img = self.base.clone();

        // Body: walk the committed route in 1 px world steps.
        let mut s = 0.0;
        while s <= state.insertion {
            let (pt, _) = map.pose_on_route(&state.route, s);
            self.disc(&mut img, pt, BODY_RADIUS, BODY);
            s += 1.0;
        }
        // Tip: straight blend from the body end to the tip point.
        let (body_end, _) = map.pose_on_route(&state.route, state.insertion);
        let tip = state.tip_pose(map, tip_len);
        let n = tip_len.ceil() as usize + 1;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let pt = [
                body_end[0] + t * (tip.point[0] - body_end[0]),
                body_end[1] + t * (tip.point[1] - body_end[1]),
            ];
            self.disc(&mut img, pt, BODY_RADIUS * 0.9, TIP);
        }

        self.disc(&mut img, map.entry, DOT_RADIUS, DOT);
        self.disc(&mut img, target.point, DOT_RADIUS, DOT);
        Ok(img)
    }

    fn disc(&self, img: &mut RgbImage, world_pt: [f64; 2], world_r: f64, color: Rgb<u8>) {
        let cx = world_pt[0] * self.scale;
        let cy = world_pt[1] * self.scale;
        let r = world_r * self.scale;
        let x0 = ((cx - r).floor().max(0.0)) as u32;
        let x1 = ((cx + r).ceil().min(self.resolution as f64 - 1.0)) as u32;
        let y0 = ((cy - r).floor().max(0.0)) as u32;
        let y1 = ((cy + r).ceil().min(self.resolution as f64 - 1.0)) as u32;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
}
