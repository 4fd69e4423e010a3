//! Procedural 2D vascular phantom: a connected tree of centerline polylines
//! with per-segment radii, one entry at the root, and targets at the leaf
//! endpoints. Coordinates are pixels in a square world, y growing downward.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHANTOM_FORMAT_VERSION: u32 = 1;

/// Polyline spacing in pixels; geometric queries interpolate between vertices.
const STEP: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Segment {
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Cumulative arclength per vertex; rebuilt on load, not serialized.
    #[serde(skip)]
    pub cum: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TargetPoint {
    /// 1-based scenario id.
    pub id: usize,
    pub segment: usize,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VesselMap {
    pub world_size: f64,
    pub segments: Vec<Segment>,
    pub entry: [f64; 2],
    pub targets: Vec<TargetPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PhantomFile {
    version: u32,
    map: VesselMap,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

struct GrowTip {
    pos: [f64; 2],
    dir: f64,
    radius: f64,
    parent: Option<usize>,
}

/// Deterministic branching-tree phantom. Targets are the leaf endpoints in
/// creation order; splits happen breadth-first so the tree stays balanced.
pub fn build_phantom(seed: u64, n_targets: usize, world_size: f64) -> Result<VesselMap> {
    if n_targets == 0 {
        return Err(Error::InvalidArgument("n_targets must be >= 1".into()));
    }
    if world_size < 64.0 {
        return Err(Error::InvalidArgument(
            "world_size below 64 px leaves no room for a tree".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let margin = 0.06 * world_size;
    let center = [world_size / 2.0, world_size / 2.0];

    let mut segments: Vec<Segment> = Vec::new();
    let mut queue: std::collections::VecDeque<GrowTip> = std::collections::VecDeque::new();
    let entry = [world_size / 2.0, world_size - margin];
    queue.push_back(GrowTip {
        pos: entry,
        dir: -std::f64::consts::FRAC_PI_2,
        radius: world_size / 22.0,
        parent: None,
    });
    let mut splits_left = n_targets - 1;

    // Interior segments: grow, then split into two children.
    while splits_left > 0 {
        let tip = queue.pop_front().expect("frontier never empties early");
        let len = world_size * rng.gen_range(0.13..0.20);
        let seg_idx = grow_segment(&mut segments, &mut rng, &tip, len, margin, world_size, center);
        let end = *segments[seg_idx].points.last().unwrap();
        let end_dir = segment_end_dir(&segments[seg_idx]);
        let spread = rng.gen_range(0.38..0.58);
        let asym = rng.gen_range(-0.10..0.10);
        let child_radius = (tip.radius * 0.82).max(3.5);
        for sign in [-1.0, 1.0] {
            queue.push_back(GrowTip {
                pos: end,
                dir: end_dir + sign * spread + asym,
                radius: child_radius,
                parent: Some(seg_idx),
            });
        }
        splits_left -= 1;
    }

    // Remaining frontier tips each grow one terminal segment; its endpoint
    // is a target.
    let mut targets = Vec::new();
    while let Some(tip) = queue.pop_front() {
        let len = world_size * rng.gen_range(0.15..0.22);
        let seg_idx = grow_segment(&mut segments, &mut rng, &tip, len, margin, world_size, center);
        targets.push(TargetPoint {
            id: targets.len() + 1,
            segment: seg_idx,
            point: *segments[seg_idx].points.last().unwrap(),
        });
    }

    let mut map = VesselMap {
        world_size,
        segments,
        entry,
        targets,
    };
    map.rebuild_caches();
    debug_assert!(map.validate().is_ok());
    Ok(map)
}

fn grow_segment(
    segments: &mut Vec<Segment>,
    rng: &mut ChaCha20Rng,
    tip: &GrowTip,
    len: f64,
    margin: f64,
    world: f64,
    center: [f64; 2],
) -> usize {
    let mut pos = tip.pos;
    let mut dir = tip.dir;
    let mut points = vec![pos];
    let steps = (len / STEP).ceil() as usize;
    for _ in 0..steps {
        dir += rng.gen_range(-0.07..0.07);
        // Steer back toward the middle when close to a wall.
        let near = pos[0] < 1.6 * margin
            || pos[0] > world - 1.6 * margin
            || pos[1] < 1.6 * margin
            || pos[1] > world - 1.6 * margin;
        if near {
            let to_center = (center[1] - pos[1]).atan2(center[0] - pos[0]);
            dir += 0.30 * wrap_angle(to_center - dir);
        }
        pos = [pos[0] + STEP * dir.cos(), pos[1] + STEP * dir.sin()];
        pos[0] = pos[0].clamp(margin * 0.5, world - margin * 0.5);
        pos[1] = pos[1].clamp(margin * 0.5, world - margin * 0.5);
        points.push(pos);
    }
    let idx = segments.len();
    if let Some(p) = tip.parent {
        segments[p].children.push(idx);
    }
    segments.push(Segment {
        points,
        radius: tip.radius,
        parent: tip.parent,
        children: Vec::new(),
        cum: Vec::new(),
    });
    idx
}

fn segment_end_dir(seg: &Segment) -> f64 {
    let n = seg.points.len();
    let a = seg.points[n.saturating_sub(2)];
    let b = seg.points[n - 1];
    (b[1] - a[1]).atan2(b[0] - a[0])
}

impl Segment {
    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    fn rebuild_cum(&mut self) {
        self.cum = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        self.cum.push(0.0);
        for w in self.points.windows(2) {
            acc += dist(w[0], w[1]);
            self.cum.push(acc);
        }
    }

    /// Position and tangent angle at arclength s (clamped to the segment).
    pub fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        let total = self.length();
        let s = s.clamp(0.0, total);
        // cum is sorted; find the vertex interval containing s.
        let i = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let a = self.points[i];
        let b = self.points[i + 1];
        let span = self.cum[i + 1] - self.cum[i];
        let t = if span > 0.0 { (s - self.cum[i]) / span } else { 0.0 };
        let pos = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let ang = (b[1] - a[1]).atan2(b[0] - a[0]);
        (pos, ang)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl VesselMap {
    pub fn rebuild_caches(&mut self) {
        for s in &mut self.segments {
            s.rebuild_cum();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let roots = self
            .segments
            .iter()
            .filter(|s| s.parent.is_none())
            .count();
        if roots != 1 {
            return Err(Error::Simulation(format!("expected 1 root, found {roots}")));
        }
        for t in &self.targets {
            if t.segment >= self.segments.len() {
                return Err(Error::Simulation(format!(
                    "target {} references missing segment",
                    t.id
                )));
            }
            self.route_to(t.id)?;
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.points.len() < 2 {
                return Err(Error::Simulation(format!("segment {i} is degenerate")));
            }
            if let Some(p) = s.parent {
                let gap = dist(self.segments[p].points[self.segments[p].points.len() - 1], s.points[0]);
                if gap > 1e-9 {
                    return Err(Error::Simulation(format!(
                        "segment {i} detached from parent by {gap:.3} px"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Segment ids from the root to the target's leaf, inclusive.
    pub fn route_to(&self, target_id: usize) -> Result<Vec<usize>> {
        let t = self
            .targets
            .iter()
            .find(|t| t.id == target_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no target with id {target_id}")))?;
        let mut route = vec![t.segment];
        let mut cur = t.segment;
        while let Some(p) = self.segments[cur].parent {
            route.push(p);
            cur = p;
        }
        route.reverse();
        Ok(route)
    }

    pub fn route_length(&self, route: &[usize]) -> f64 {
        route.iter().map(|&i| self.segments[i].length()).sum()
    }

    /// Position and tangent at arclength s along a root-prefixed route.
    pub fn pose_on_route(&self, route: &[usize], s: f64) -> ([f64; 2], f64) {
        let total = self.route_length(route);
        let mut s = s.clamp(0.0, total);
        for (k, &idx) in route.iter().enumerate() {
            let len = self.segments[idx].length();
            if s <= len || k == route.len() - 1 {
                return self.segments[idx].pose_at(s);
            }
            s -= len;
        }
        unreachable!("route is non-empty");
    }

    /// Lumen radius at arclength s along the route.
    pub fn radius_on_route(&self, route: &[usize], s: f64) -> f64 {
        let mut s = s.max(0.0);
        for (k, &idx) in route.iter().enumerate() {
            let len = self.segments[idx].length();
            if s <= len || k == route.len() - 1 {
                return self.segments[idx].radius;
            }
            s -= len;
        }
        unreachable!("route is non-empty");
    }

    /// Distance from a point to the nearest centerline, with that segment's id.
    pub fn nearest_centerline(&self, pt: [f64; 2]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, seg) in self.segments.iter().enumerate() {
            for w in seg.points.windows(2) {
                let d = point_to_segment_dist(pt, w[0], w[1]);
                if d < best.0 {
                    best = (d, i);
                }
            }
        }
        best
    }

    /// True when the point sits inside some vessel's lumen (small tolerance
    /// for polyline discretization).
    pub fn in_lumen(&self, pt: [f64; 2]) -> bool {
        let (d, seg) = self.nearest_centerline(pt);
        d <= self.segments[seg].radius + 1e-6
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PhantomFile {
            version: PHANTOM_FORMAT_VERSION,
            map: self.clone(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: PhantomFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.version != PHANTOM_FORMAT_VERSION {
            return Err(Error::Simulation(format!(
                "{}: unsupported phantom format version {}",
                path.display(),
                file.version
            )));
        }
        let mut map = file.map;
        map.rebuild_caches();
        map.validate()?;
        Ok(map)
    }
}

fn point_to_segment_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
    dist(p, proj)
}

/// Hand-built single straight vertical channel, for geometric unit tests.
pub fn straight_channel(world_size: f64, radius: f64) -> VesselMap {
    let margin = 0.06 * world_size;
    let x = world_size / 2.0;
    let mut points = Vec::new();
    let mut y = world_size - margin;
    while y > margin {
        points.push([x, y]);
        y -= STEP;
    }
    let seg = Segment {
        points: points.clone(),
        radius,
        parent: None,
        children: Vec::new(),
        cum: Vec::new(),
    };
    let mut map = VesselMap {
        world_size,
        segments: vec![seg],
        entry: points[0],
        targets: vec![TargetPoint {
            id: 1,
            segment: 0,
            point: *points.last().unwrap(),
        }],
    };
    map.rebuild_caches();
    map
}
