//! Per-pixel ray casting against the floor plane, the four room walls and
//! the obstacle boxes. Each pixel shows the nearest surface among the
//! classes enabled in the [`RenderMask`]; disabled classes are transparent
//! and never occlude.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, DepthImage, RgbaImage, SensorMount};
use crate::geometry::Pose;
use crate::world::{FloorMap, Marking, Obstacle, Room, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderMask {
    pub floor: bool,
    pub lane_markings: bool,
    pub obstacles: bool,
    pub walls: bool,
}

impl RenderMask {
    pub const ALL: RenderMask = RenderMask {
        floor: true,
        lane_markings: true,
        obstacles: true,
        walls: true,
    };
    pub const NONE: RenderMask = RenderMask {
        floor: false,
        lane_markings: false,
        obstacles: false,
        walls: false,
    };
    pub const OBSTACLES: RenderMask = RenderMask {
        floor: false,
        lane_markings: false,
        obstacles: true,
        walls: false,
    };
    /// Everything except obstacles: the physical room of a mixed-reality run.
    pub const BACKGROUND: RenderMask = RenderMask {
        floor: true,
        lane_markings: true,
        obstacles: false,
        walls: true,
    };
}

const MARGIN_COLOR: [u8; 3] = [242, 242, 238];
const DASH_COLOR: [u8; 3] = [235, 190, 40];
const WALL_COLOR: [u8; 3] = [176, 180, 188];
const BASEBOARD_COLOR: [u8; 3] = [92, 90, 96];
const BASEBOARD_HEIGHT: f64 = 0.08;

#[derive(Clone, Copy)]
struct Ray {
    o: [f64; 3],
    d: [f64; 3],
}

#[derive(Clone, Copy)]
enum Surface {
    Floor,
    Wall(usize),
    Obstacle(usize, u8),
}

/// Shared per-frame geometry for one sensor pose.
struct Caster<'a> {
    room: &'a Room,
    obstacles: &'a [Obstacle],
    origin: [f64; 3],
    sin: f64,
    cos: f64,
    k: &'a CameraIntrinsics,
}

impl<'a> Caster<'a> {
    fn new(scenario: &'a Scenario, pose: &Pose, k: &'a CameraIntrinsics, mount: &SensorMount) -> Self {
        let (sin, cos) = pose.yaw.sin_cos();
        Self {
            room: &scenario.room,
            obstacles: &scenario.obstacles,
            origin: pose.transform_point([mount.x, mount.y, mount.z]),
            sin,
            cos,
            k,
        }
    }

    /// Ray through pixel `(i, j)`; the direction's optical z component is 1,
    /// so the ray parameter of a hit equals its planar depth.
    fn ray(&self, i: u32, j: u32) -> Ray {
        let a = (f64::from(i) - self.k.cx) / self.k.fx;
        let b = (f64::from(j) - self.k.cy) / self.k.fy;
        let (vx, vy, vz) = (1.0, -a, -b);
        Ray {
            o: self.origin,
            d: [
                self.cos * vx - self.sin * vy,
                self.sin * vx + self.cos * vy,
                vz,
            ],
        }
    }

    fn nearest(&self, ray: &Ray, floor: bool, walls: bool, obstacles: bool) -> Option<(f64, Surface)> {
        let mut best: Option<(f64, Surface)> = None;
        let mut consider = |t: f64, s: Surface| {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, s));
            }
        };
        if floor {
            if let Some(t) = floor_hit(ray) {
                consider(t, Surface::Floor);
            }
        }
        if walls {
            if let Some((t, w)) = wall_hit(ray, self.room) {
                consider(t, Surface::Wall(w));
            }
        }
        if obstacles {
            for (idx, o) in self.obstacles.iter().enumerate() {
                if let Some((t, face)) = box_hit(ray, o) {
                    consider(t, Surface::Obstacle(idx, face));
                }
            }
        }
        best
    }
}

fn floor_hit(ray: &Ray) -> Option<f64> {
    (ray.d[2] < 0.0 && ray.o[2] > 0.0).then(|| -ray.o[2] / ray.d[2])
}

/// Exit point through the room's walls, if it lies between floor and top.
fn wall_hit(ray: &Ray, room: &Room) -> Option<(f64, usize)> {
    let axis = |o: f64, d: f64, hi: f64, lo_id: usize, hi_id: usize| {
        if d > 0.0 {
            Some(((hi - o) / d, hi_id))
        } else if d < 0.0 {
            Some(((0.0 - o) / d, lo_id))
        } else {
            None
        }
    };
    let tx = axis(ray.o[0], ray.d[0], room.width, 0, 1);
    let ty = axis(ray.o[1], ray.d[1], room.depth, 2, 3);
    let (t, id) = match (tx, ty) {
        (Some(a), Some(b)) => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => return None,
    };
    let z = ray.o[2] + t * ray.d[2];
    (t > 0.0 && (0.0..=room.wall_height).contains(&z)).then_some((t, id))
}

/// Slab intersection with an obstacle box; face 0 = top, 1 = length
/// faces, 2 = width faces.
fn box_hit(ray: &Ray, o: &Obstacle) -> Option<(f64, u8)> {
    let (s, c) = o.pose.yaw.sin_cos();
    let rx = ray.o[0] - o.pose.x;
    let ry = ray.o[1] - o.pose.y;
    let lo = [c * rx + s * ry, -s * rx + c * ry, ray.o[2] - o.pose.z];
    let ld = [
        c * ray.d[0] + s * ray.d[1],
        -s * ray.d[0] + c * ray.d[1],
        ray.d[2],
    ];
    let half = [o.footprint.length / 2.0, o.footprint.width / 2.0];
    let bounds = [(-half[0], half[0]), (-half[1], half[1]), (0.0, o.footprint.height)];
    let faces = [1u8, 2, 0];
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut face = 0u8;
    for a in 0..3 {
        let (lo_b, hi_b) = bounds[a];
        if ld[a] == 0.0 {
            if lo[a] < lo_b || lo[a] > hi_b {
                return None;
            }
            continue;
        }
        let mut t1 = (lo_b - lo[a]) / ld[a];
        let mut t2 = (hi_b - lo[a]) / ld[a];
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        if t1 > t_near {
            t_near = t1;
            face = faces[a];
        }
        t_far = t_far.min(t2);
    }
    (t_near <= t_far && t_near > 0.0).then_some((t_near, face))
}

fn hash2(a: i64, b: i64) -> u64 {
    let mut z = (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (b as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn jitter(h: u64, amplitude: i32) -> i32 {
    (h % (2 * amplitude as u64 + 1)) as i32 - amplitude
}

fn add(rgb: [u8; 3], delta: i32) -> [u8; 3] {
    rgb.map(|v| (i32::from(v) + delta).clamp(0, 255) as u8)
}

fn floor_color(texture: &str, x: f64, y: f64) -> [u8; 3] {
    let cx = (x / 0.02).floor() as i64;
    let cy = (y / 0.02).floor() as i64;
    match texture {
        "wood" => {
            let plank = (y / 0.18).floor() as i64;
            let seam = y.rem_euclid(0.18) < 0.006;
            if seam {
                return [88, 60, 36];
            }
            let tint = jitter(hash2(plank, 7), 10);
            let grain = jitter(hash2((x / 0.05).floor() as i64, plank), 5);
            add([152, 108, 66], tint + grain)
        }
        _ => add([128, 126, 120], jitter(hash2(cx, cy), 8)),
    }
}

fn wall_color(wall: usize, z: f64) -> [u8; 3] {
    if z < BASEBOARD_HEIGHT {
        BASEBOARD_COLOR
    } else {
        add(WALL_COLOR, [0, -6, -12, -18][wall])
    }
}

fn obstacle_color(color: [u8; 3], face: u8) -> [u8; 3] {
    let shade = [1.0, 0.85, 0.7][face as usize];
    color.map(|v| (f64::from(v) * shade).round() as u8)
}

/// RGBA render of the masked scene classes as seen from a camera mounted on
/// a vehicle at `pose`. Covered pixels have alpha 255, all others alpha 0.
pub fn render_rgb(
    scenario: &Scenario,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    mount: &SensorMount,
    mask: RenderMask,
) -> RgbaImage {
    let w = intrinsics.width;
    let h = intrinsics.height;
    let mut img = RgbaImage::transparent(w, h);
    if mask == RenderMask::NONE {
        return img;
    }
    let caster = Caster::new(scenario, pose, intrinsics, mount);
    let floor_map: Option<std::sync::Arc<FloorMap>> =
        mask.lane_markings.then(|| scenario.floor_map());
    let floor_enabled = mask.floor || mask.lane_markings;
    img.data
        .par_chunks_mut(w as usize * 4)
        .enumerate()
        .for_each(|(j, row)| {
            for i in 0..w {
                let ray = caster.ray(i, j as u32);
                let Some((t, surface)) =
                    caster.nearest(&ray, floor_enabled, mask.walls, mask.obstacles)
                else {
                    continue;
                };
                let p = [
                    ray.o[0] + t * ray.d[0],
                    ray.o[1] + t * ray.d[1],
                    ray.o[2] + t * ray.d[2],
                ];
                let rgb = match surface {
                    Surface::Floor => {
                        let marking = floor_map
                            .as_ref()
                            .map_or(Marking::None, |m| m.marking([p[0], p[1]]));
                        match marking {
                            Marking::Margin => Some(MARGIN_COLOR),
                            Marking::CenterDash => Some(DASH_COLOR),
                            Marking::None => mask
                                .floor
                                .then(|| floor_color(&scenario.floor_texture, p[0], p[1])),
                        }
                    }
                    Surface::Wall(id) => Some(wall_color(id, p[2])),
                    Surface::Obstacle(idx, face) => {
                        Some(obstacle_color(scenario.obstacles[idx].color, face))
                    }
                };
                if let Some(rgb) = rgb {
                    let k = i as usize * 4;
                    row[k..k + 3].copy_from_slice(&rgb);
                    row[k + 3] = 255;
                }
            }
        });
    img
}

/// ToF depth render against walls and obstacles; the floor returns nothing.
pub fn render_depth(
    scenario: &Scenario,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    mount: &SensorMount,
    max_range: f32,
) -> DepthImage {
    render_depth_masked(scenario, pose, intrinsics, mount, max_range, RenderMask::ALL)
}

/// Depth render restricted to the walls and obstacles enabled in `mask`.
///
/// Returns are gated on Euclidean ray length while the stored value is the
/// planar depth along the optical axis.
pub fn render_depth_masked(
    scenario: &Scenario,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    mount: &SensorMount,
    max_range: f32,
    mask: RenderMask,
) -> DepthImage {
    let w = intrinsics.width;
    let mut img = DepthImage::sentinel_filled(w, intrinsics.height, max_range);
    if !mask.walls && !mask.obstacles {
        return img;
    }
    let sentinel = img.sentinel();
    let caster = Caster::new(scenario, pose, intrinsics, mount);
    let max = f64::from(max_range);
    img.data
        .par_chunks_mut(w as usize)
        .enumerate()
        .for_each(|(j, row)| {
            for i in 0..w {
                let ray = caster.ray(i, j as u32);
                let value = caster
                    .nearest(&ray, false, mask.walls, mask.obstacles)
                    .and_then(|(t, _)| {
                        let norm = (ray.d[0] * ray.d[0] + ray.d[1] * ray.d[1] + ray.d[2] * ray.d[2]).sqrt();
                        (t * norm <= max).then_some(t as f32)
                    });
                row[i as usize] = value.unwrap_or(sentinel);
            }
        });
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_scenario, BoxSize, Direction, Room};

    fn bare(mut s: Scenario) -> Scenario {
        s = s.with_obstacles(Vec::new()).unwrap();
        s
    }

    fn cube(id: &str, x: f64, y: f64) -> Obstacle {
        Obstacle {
            id: id.into(),
            pose: Pose::planar(x, y, 0.0),
            footprint: BoxSize::new(0.15, 0.15, 0.2),
            color: [220, 50, 40],
        }
    }

    fn camera() -> (CameraIntrinsics, SensorMount) {
        (CameraIntrinsics::rgb_default(), SensorMount::new(0.0, 0.0, 0.2))
    }

    #[test]
    fn empty_mask_is_transparent() {
        let s = build_scenario("N1").unwrap();
        let (k, m) = camera();
        let img = render_rgb(&s, &s.start, &k, &m, RenderMask::NONE);
        assert!(img.data.chunks_exact(4).all(|p| p[3] == 0));
    }

    #[test]
    fn floor_covers_everything_below_horizon() {
        let s = build_scenario("N1").unwrap();
        let (k, m) = camera();
        let mask = RenderMask {
            floor: true,
            ..RenderMask::NONE
        };
        let img = render_rgb(&s, &Pose::planar(3.0, 3.0, 0.3), &k, &m, mask);
        for j in 0..k.height {
            for i in 0..k.width {
                let below = f64::from(j) > k.cy;
                assert_eq!(img.alpha(i, j) == 255, below, "pixel ({i},{j})");
            }
        }
    }

    #[test]
    fn obstacle_blob_centered_on_projection() {
        let base = build_scenario("N1").unwrap();
        let pose = Pose::planar(2.0, 3.0, 0.0);
        let ob = cube("o", 3.2 + 0.0, 3.0);
        let s = base.with_obstacles(vec![ob.clone()]).unwrap();
        let (k, m) = camera();
        let img = render_rgb(&s, &pose, &k, &m, RenderMask::OBSTACLES);
        let (mut si, mut sj, mut n) = (0.0, 0.0, 0.0);
        for j in 0..k.height {
            for i in 0..k.width {
                if img.alpha(i, j) == 255 {
                    si += f64::from(i);
                    sj += f64::from(j);
                    n += 1.0;
                }
            }
        }
        assert!(n > 0.0);
        let center = m.world_to_optical(&pose, [ob.pose.x, ob.pose.y, 0.1]);
        let uv = k.project(center).unwrap();
        assert!((si / n - uv[0]).abs() < 2.0, "{} vs {}", si / n, uv[0]);
        assert!((sj / n - uv[1]).abs() < 2.0, "{} vs {}", sj / n, uv[1]);
    }

    #[test]
    fn axial_wall_depth() {
        let s = bare(build_scenario("N1").unwrap());
        // Camera 1 m in front of the x = width wall, looking at it.
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 200, 80).unwrap();
        let m = SensorMount::new(0.0, 0.0, 0.5);
        let pose = Pose::planar(s.room.width - 1.0, 3.0, 0.0);
        let d = render_depth(&s, &pose, &k, &m, 5.0);
        assert!((f64::from(d.get(50, 40)) - 1.0).abs() < 1e-6);
        // The 45° ray travels √2 m but reports planar depth 1.
        assert!((f64::from(d.get(150, 40)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_is_sentinel() {
        let s = bare(Scenario::new(
            "big",
            Room {
                width: 40.0,
                depth: 40.0,
                ..Room::generalization()
            },
            crate::world::stadium_track(),
            Vec::new(),
            crate::world::stadium_track().pose_at(0.1, 0.0),
            Direction::CCW,
            "wood",
        )
        .unwrap());
        let (k, m) = (CameraIntrinsics::tof_default(), SensorMount::new(0.0, 0.0, 0.12));
        let d = render_depth(&s, &Pose::planar(20.0, 20.0, 0.0), &k, &m, 5.0);
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn obstacle_never_increases_depth() {
        let base = bare(build_scenario("N1").unwrap());
        let pose = Pose::planar(2.0, 3.0, 0.2);
        let (k, m) = (CameraIntrinsics::tof_default(), SensorMount::new(0.12, 0.0, 0.12));
        let d0 = render_depth(&base, &pose, &k, &m, 5.0);
        let with = base.with_obstacles(vec![cube("a", 2.8, 3.2)]).unwrap();
        let d1 = render_depth(&with, &pose, &k, &m, 5.0);
        assert!(d0.data.iter().zip(&d1.data).all(|(a, b)| b <= a));
        assert!(d0.data.iter().zip(&d1.data).any(|(a, b)| b < a));
    }

    #[test]
    fn background_plus_obstacles_is_full_render() {
        let s = build_scenario("N2").unwrap();
        let (k, m) = camera();
        let pose = s.track.pose_at(4.0, 0.0);
        let full = render_rgb(&s, &pose, &k, &m, RenderMask::ALL);
        let bg = render_rgb(&s, &pose, &k, &m, RenderMask::BACKGROUND);
        let ob = render_rgb(&s, &pose, &k, &m, RenderMask::OBSTACLES);
        for (p, (b, o)) in full
            .data
            .chunks_exact(4)
            .zip(bg.data.chunks_exact(4).zip(ob.data.chunks_exact(4)))
        {
            let expect = if o[3] == 255 { o } else { b };
            assert_eq!(p, expect);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let s = build_scenario("G").unwrap();
        let (k, m) = camera();
        let a = render_rgb(&s, &s.start, &k, &m, RenderMask::ALL);
        let b = render_rgb(&s, &s.start, &k, &m, RenderMask::ALL);
        assert_eq!(a, b);
    }
}
