//! Rooms, tracks, obstacles and the N1 / N2 / G scenario presets.

pub mod collision;
pub mod floor;
pub mod track;

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub use collision::{collision_query, BoxSize, OrientedRect};
pub use floor::{FloorMap, Marking};
pub use track::{lane_query, LaneQuery, Track, TrackSpec};

/// Default vehicle footprint (length × width × height), Donkey-class scale.
pub const VEHICLE_FOOTPRINT: BoxSize = BoxSize {
    length: 0.40,
    width: 0.25,
    height: 0.20,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoomKind {
    Nominal,
    Generalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub kind: RoomKind,
    /// Extent along x, meters. The floor spans [0, width] × [0, depth].
    pub width: f64,
    pub depth: f64,
    pub wall_height: f64,
}

impl Room {
    pub fn nominal() -> Self {
        Self {
            kind: RoomKind::Nominal,
            width: 6.0,
            depth: 6.0,
            wall_height: 3.0,
        }
    }

    pub fn generalization() -> Self {
        Self {
            kind: RoomKind::Generalization,
            width: 10.0,
            depth: 8.0,
            wall_height: 3.0,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] <= self.width && p[1] >= 0.0 && p[1] <= self.depth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    /// Footprint center on the floor.
    pub pose: Pose,
    pub footprint: BoxSize,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    CW,
    CCW,
}

/// Immutable test scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub room: Room,
    pub track: Track,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub start: Pose,
    pub direction: Direction,
    pub floor_texture: String,
    #[serde(skip)]
    floor: OnceLock<Arc<FloorMap>>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.room == other.room
            && self.track == other.track
            && self.obstacles == other.obstacles
            && self.start == other.start
            && self.direction == other.direction
            && self.floor_texture == other.floor_texture
    }
}

/// Obstacles on the nominal layout: 15 cm cube footprint, 20 cm tall.
pub const OBSTACLE_SIZE: BoxSize = BoxSize {
    length: 0.15,
    width: 0.15,
    height: 0.20,
};
pub const OBSTACLE_RED: [u8; 3] = [220, 50, 40];
pub const OBSTACLE_ORANGE: [u8; 3] = [230, 120, 30];

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        room: Room,
        track: Track,
        obstacles: Vec<Obstacle>,
        start: Pose,
        direction: Direction,
        floor_texture: impl Into<String>,
    ) -> Result<Self> {
        let ccw = track.signed_area() > 0.0;
        let track = match (direction, ccw) {
            (Direction::CCW, false) | (Direction::CW, true) => track.reversed(),
            _ => track,
        };
        let s = Self {
            name: name.into(),
            room,
            track,
            obstacles,
            start,
            direction,
            floor_texture: floor_texture.into(),
            floor: OnceLock::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.room.width > 0.0 && self.room.depth > 0.0 && self.room.wall_height > 0.0) {
            return Err(Error::Validation("room dimensions must be positive".into()));
        }
        let ccw = self.track.signed_area() > 0.0;
        if ccw != (self.direction == Direction::CCW) {
            return Err(Error::Validation(
                "control point winding disagrees with direction".into(),
            ));
        }
        if self.track.lane_half_width <= VEHICLE_FOOTPRINT.width / 2.0 {
            return Err(Error::Validation(
                "lane half-width must exceed the vehicle half-width".into(),
            ));
        }
        if !lane_query(&self.start, &self.track).inside {
            return Err(Error::Validation("start pose is outside the lane".into()));
        }
        let mut ids = BTreeSet::new();
        for o in &self.obstacles {
            if !ids.insert(o.id.as_str()) {
                return Err(Error::Validation(format!("duplicate obstacle id {:?}", o.id)));
            }
            if !o.footprint.is_valid() {
                return Err(Error::Validation(format!(
                    "obstacle {:?} has non-positive dimensions",
                    o.id
                )));
            }
            if !self.room.contains(o.pose.xy()) {
                return Err(Error::Validation(format!(
                    "obstacle {:?} lies outside the room",
                    o.id
                )));
            }
        }
        Ok(())
    }

    /// Lazily rasterized Frénet lookup for the floor around the track.
    pub fn floor_map(&self) -> Arc<FloorMap> {
        self.floor
            .get_or_init(|| {
                let band = self.track.lane_half_width + self.track.margin_width + 0.35;
                Arc::new(FloorMap::build(
                    &self.track,
                    [self.room.width, self.room.depth],
                    band,
                ))
            })
            .clone()
    }

    pub fn obstacle(&self, id: &str) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.id == id)
    }

    pub fn with_obstacles(&self, obstacles: Vec<Obstacle>) -> Result<Self> {
        Scenario::new(
            self.name.clone(),
            self.room,
            self.track.clone(),
            obstacles,
            self.start,
            self.direction,
            self.floor_texture.clone(),
        )
    }

    pub fn with_start(&self, start: Pose) -> Result<Self> {
        Scenario::new(
            self.name.clone(),
            self.room,
            self.track.clone(),
            self.obstacles.clone(),
            start,
            self.direction,
            self.floor_texture.clone(),
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Scenario::new(
            raw.name,
            raw.room,
            raw.track,
            raw.obstacles,
            raw.start,
            raw.direction,
            raw.floor_texture,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Obstacle at Frénet coordinates on a track, aligned with travel.
pub fn obstacle_on_track(
    track: &Track,
    id: &str,
    arc: f64,
    lateral: f64,
    size: BoxSize,
    color: [u8; 3],
) -> Obstacle {
    Obstacle {
        id: id.into(),
        pose: track.pose_at(arc, lateral),
        footprint: size,
        color,
    }
}

/// Centerline of the nominal room layout (clockwise, 0.15 m spacing).
///
/// Five right and two left curves (30° to 90°) joined by short straights,
/// with the tightest curves near the vehicle's full-lock radius. The real
/// room coordinates are not public; this is a stand-in with the same
/// topology.
pub const NOMINAL_CONTROL_POINTS: [[f64; 2]; 66] = [
    [1.320, 2.897], [1.320, 3.046], [1.322, 3.195], [1.344, 3.342],
    [1.392, 3.483], [1.464, 3.613], [1.558, 3.729], [1.670, 3.827],
    [1.798, 3.904], [1.937, 3.957], [2.083, 3.985], [2.232, 3.989],
    [2.381, 3.989], [2.529, 4.005], [2.671, 4.050], [2.802, 4.120],
    [2.931, 4.195], [3.060, 4.269], [3.192, 4.339], [3.333, 4.385],
    [3.481, 4.402], [3.629, 4.389], [3.772, 4.347], [3.904, 4.279],
    [4.034, 4.204], [4.163, 4.130], [4.292, 4.055], [4.412, 3.967],
    [4.513, 3.858], [4.593, 3.733], [4.648, 3.594], [4.676, 3.448],
    [4.677, 3.300], [4.651, 3.153], [4.597, 3.014], [4.524, 2.884],
    [4.450, 2.755], [4.375, 2.626], [4.301, 2.497], [4.226, 2.368],
    [4.151, 2.239], [4.077, 2.110], [4.002, 1.981], [3.917, 1.859],
    [3.809, 1.756], [3.683, 1.677], [3.544, 1.624], [3.398, 1.600],
    [3.249, 1.605], [3.104, 1.639], [2.969, 1.701], [2.840, 1.776],
    [2.704, 1.838], [2.560, 1.872], [2.411, 1.878], [2.262, 1.878],
    [2.113, 1.878], [1.964, 1.885], [1.820, 1.921], [1.685, 1.984],
    [1.565, 2.073], [1.466, 2.183], [1.390, 2.311], [1.341, 2.452],
    [1.320, 2.599], [1.320, 2.748],
];

pub fn nominal_track() -> Track {
    Track::new(NOMINAL_CONTROL_POINTS.to_vec(), 0.50, 0.10, true).expect("valid nominal track")
}

/// Stadium centerline: two semicircles of radius 1.5 m joined by 2 m
/// straights, counter-clockwise, centered in the generalization room.
pub fn stadium_control_points() -> Vec<[f64; 2]> {
    let radius: f64 = 1.5;
    let straight: f64 = 2.0;
    let (cx, cy) = (5.0, 4.0);
    let spacing: f64 = 0.15;
    let half = straight / 2.0;
    let n_straight = (straight / spacing).round() as usize;
    let n_arc = (PI * radius / spacing).round() as usize;
    let mut pts = Vec::new();
    for i in 0..n_straight {
        pts.push([cx - half + straight * i as f64 / n_straight as f64, cy - radius]);
    }
    for i in 0..n_arc {
        let a = -PI / 2.0 + PI * i as f64 / n_arc as f64;
        pts.push([cx + half + radius * a.cos(), cy + radius * a.sin()]);
    }
    for i in 0..n_straight {
        pts.push([cx + half - straight * i as f64 / n_straight as f64, cy + radius]);
    }
    for i in 0..n_arc {
        let a = PI / 2.0 + PI * i as f64 / n_arc as f64;
        pts.push([cx - half + radius * a.cos(), cy + radius * a.sin()]);
    }
    pts.into_iter()
        .map(|[x, y]| [(x * 1000.0).round() / 1000.0, (y * 1000.0).round() / 1000.0])
        .collect()
}

pub fn stadium_track() -> Track {
    Track::new(stadium_control_points(), 0.50, 0.03, false).expect("valid stadium track")
}

pub const PRESETS: [&str; 3] = ["N1", "N2", "G"];

/// Scenario presets.
///
/// * N1: two obstacles on straights shortly after right turns.
/// * N2: same track, first obstacle directly on a turn and the second
///   immediately after it.
/// * G: stadium layout in the generalization room with thin margins, no
///   center line, one obstacle on a straight and one on a curve.
pub fn build_scenario(name: &str) -> Result<Scenario> {
    match name {
        "N1" | "N2" => {
            let track = nominal_track();
            let obstacles = if name == "N1" {
                vec![
                    obstacle_on_track(&track, "obs1", 5.35, -0.08, OBSTACLE_SIZE, OBSTACLE_RED),
                    obstacle_on_track(&track, "obs2", 9.65, 0.10, OBSTACLE_SIZE, OBSTACLE_ORANGE),
                ]
            } else {
                vec![
                    obstacle_on_track(&track, "obs1", 4.50, 0.0, OBSTACLE_SIZE, OBSTACLE_RED),
                    obstacle_on_track(&track, "obs2", 5.45, -0.10, OBSTACLE_SIZE, OBSTACLE_ORANGE),
                ]
            };
            let start = track.pose_at(2.25, 0.0);
            Scenario::new(
                name,
                Room::nominal(),
                track,
                obstacles,
                start,
                Direction::CW,
                "concrete",
            )
        }
        "G" => {
            let track = stadium_track();
            let obstacles = vec![
                obstacle_on_track(&track, "obs1", 1.2, 0.08, OBSTACLE_SIZE, OBSTACLE_RED),
                obstacle_on_track(&track, "obs2", 4.4, -0.05, OBSTACLE_SIZE, OBSTACLE_ORANGE),
            ];
            let start = track.pose_at(0.05, 0.0);
            Scenario::new(
                "G",
                Room::generalization(),
                track,
                obstacles,
                start,
                Direction::CCW,
                "wood",
            )
        }
        other => Err(Error::Lookup(format!("unknown scenario preset {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_straight(track: &Track, arc: f64) -> bool {
        // Centerline curvature stays near zero under the obstacle footprint.
        (-3..=3).all(|k| track.curvature_at(arc + 0.025 * k as f64).abs() < 0.15)
    }

    #[test]
    fn n1_obstacles_on_straights() {
        let s = build_scenario("N1").unwrap();
        assert_eq!(s.obstacles.len(), 2);
        for o in &s.obstacles {
            let q = lane_query(&o.pose, &s.track);
            assert!(q.inside);
            assert!(on_straight(&s.track, q.arc_position), "{} not on a straight", o.id);
        }
    }

    #[test]
    fn n2_first_obstacle_on_curve() {
        let s = build_scenario("N2").unwrap();
        let n1 = build_scenario("N1").unwrap();
        assert_eq!(s.track, n1.track);
        assert_eq!(s.obstacles.len(), 2);
        let q = lane_query(&s.obstacles[0].pose, &s.track);
        assert!(s.track.curvature_at(q.arc_position).abs() > 0.8);
    }

    #[test]
    fn g_is_stadium_with_one_straight_one_curve() {
        let s = build_scenario("G").unwrap();
        assert_eq!(s.room.kind, RoomKind::Generalization);
        assert!(!s.track.has_center_dots);
        assert_ne!(s.floor_texture, build_scenario("N1").unwrap().floor_texture);
        let q0 = lane_query(&s.obstacles[0].pose, &s.track);
        let q1 = lane_query(&s.obstacles[1].pose, &s.track);
        assert!(on_straight(&s.track, q0.arc_position));
        assert!((s.track.curvature_at(q1.arc_position) - 1.0 / 1.5).abs() < 0.1);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(build_scenario("N3"), Err(Error::Lookup(_))));
    }

    #[test]
    fn nominal_fits_room_with_lanes() {
        let s = build_scenario("N1").unwrap();
        let outer = s.track.lane_half_width + s.track.margin_width;
        let n = 400;
        for k in 0..n {
            let arc = s.track.length() * k as f64 / n as f64;
            for d in [-outer, outer] {
                assert!(s.room.contains(s.track.frenet_to_world(arc, d)));
            }
        }
    }

    #[test]
    fn lanes_do_not_overlap() {
        for track in [nominal_track(), stadium_track()] {
            let n = 300;
            let l = track.length();
            let pts: Vec<[f64; 2]> = (0..n).map(|k| track.point_at(l * k as f64 / n as f64).0).collect();
            let corridor = 2.0 * (track.lane_half_width + track.margin_width);
            for i in 0..n {
                for j in 0..n {
                    let gap = (i as f64 - j as f64).abs() / n as f64 * l;
                    if gap.min(l - gap) < 2.0 {
                        continue;
                    }
                    let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                    assert!(d > corridor, "sections {i} and {j} only {d:.3} m apart");
                }
            }
        }
    }

    #[test]
    fn presets_are_deterministic_and_round_trip() {
        for name in PRESETS {
            let a = build_scenario(name).unwrap().to_toml().unwrap();
            let b = build_scenario(name).unwrap().to_toml().unwrap();
            assert_eq!(a, b);
            let back = Scenario::from_toml(&a).unwrap();
            assert_eq!(back, build_scenario(name).unwrap());
            assert_eq!(back.to_toml().unwrap(), a);
        }
    }

    #[test]
    fn schema_uses_fixed_key_names() {
        let text = build_scenario("N1").unwrap().to_toml().unwrap();
        for key in ["[room]", "[track]", "control_points", "[[obstacles]]", "[start]", "direction"] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn validation_failures() {
        let s = build_scenario("N1").unwrap();
        let mut dup = s.obstacles.clone();
        dup[1].id = dup[0].id.clone();
        assert!(matches!(s.with_obstacles(dup), Err(Error::Validation(_))));
        assert!(matches!(
            s.with_start(Pose::planar(0.1, 0.1, 0.0)),
            Err(Error::Validation(_))
        ));
        let mut far = s.obstacles.clone();
        far[0].pose.x = 50.0;
        assert!(s.with_obstacles(far).is_err());
    }
}
