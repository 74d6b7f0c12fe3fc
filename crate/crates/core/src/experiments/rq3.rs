//! Perception-gap protocols: obstacle placement (camera boxes and depth
//! centroids), lane placement, and the synchronized-frame battery.

use rayon::prelude::*;

use super::report::{fmt, mean_std, Report};
use super::Campaign;
use crate::error::{Error, Result};
use crate::metrics::{cloud_stats, image_battery, iou, lane_alignment, perceptual_distance, ImageMetricReport, PixelBox};
use crate::mixing::{mix_depth, mix_rgb};
use crate::plant::GapProfile;
use crate::rng::derive_seed;
use crate::runtime::{real_frames, sim_frames, SenseRequest};
use crate::sensing::{depth_to_cloud, render_rgb, DepthImage, PointCloud, RenderMask, RgbImage, RgbaImage, SensorRig};
use crate::geometry::Pose;
use crate::world::{obstacle_on_track, Obstacle, Scenario, OBSTACLE_RED, OBSTACLE_SIZE};

pub const OBSTACLE_DISTANCES: [f64; 4] = [0.4, 0.8, 1.2, 1.6];
/// Lateral offset of each obstacle of a dual placement, meters.
pub const DUAL_LATERAL: f64 = 0.2;
/// Arc position of the vehicle during the placement protocols.
pub const PLACEMENT_ARC: f64 = 0.05;
/// Center, both lane halves and both margins.
pub const LANE_OFFSETS: [f64; 5] = [0.0, 0.2, -0.2, 0.4, -0.4];
pub const LANE_ARC: f64 = 0.4;
/// Image rows sampled for lane anchors.
pub const LANE_ROWS: [u32; 12] = [125, 135, 145, 155, 165, 175, 185, 195, 205, 215, 225, 235];
/// A pixel belongs to a marking when every channel reaches this level.
pub const MARKING_LEVEL: u8 = 215;
pub const BATTERY_FRAMES: usize = 100;

fn request(pose: Pose, rgb: bool, depth: bool, noise_seed: u64) -> SenseRequest {
    SenseRequest {
        rgb,
        depth,
        real_pose: pose,
        sim_pose: pose,
        timestamp: 0.0,
        noise_seed,
    }
}

/// Tight box around the pixels an overlay covers.
pub fn overlay_box(img: &RgbaImage) -> Option<PixelBox> {
    let mut b: Option<[u32; 4]> = None;
    for j in 0..img.height {
        for i in 0..img.width {
            if img.alpha(i, j) > 0 {
                let v = b.get_or_insert([i, j, i, j]);
                *v = [v[0].min(i), v[1].min(j), v[2].max(i), v[3].max(j)];
            }
        }
    }
    b.map(|[x0, y0, x1, y1]| PixelBox::new(f64::from(x0), f64::from(y0), f64::from(x1 + 1), f64::from(y1 + 1)))
}

fn centroid(cloud: &PointCloud) -> Option<[f64; 3]> {
    if cloud.is_empty() {
        return None;
    }
    let n = cloud.len() as f64;
    let mut c = [0.0; 3];
    for p in &cloud.points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    Some(c)
}

fn cloud(depth: &DepthImage, rig: &SensorRig) -> Result<PointCloud> {
    depth_to_cloud(depth, &rig.tof, rig.min_range)
}

/// The eight placements: each distance with one central obstacle, and with
/// two obstacles mirrored about the centerline.
pub fn obstacle_configurations(scenario: &Scenario) -> Vec<(String, f64, Vec<Obstacle>)> {
    let track = &scenario.track;
    let mut out = Vec::new();
    for &d in &OBSTACLE_DISTANCES {
        let arc = PLACEMENT_ARC + d;
        out.push((
            format!("single_{d}"),
            d,
            vec![obstacle_on_track(track, "center", arc, 0.0, OBSTACLE_SIZE, OBSTACLE_RED)],
        ));
        out.push((
            format!("dual_{d}"),
            d,
            vec![
                obstacle_on_track(track, "left", arc, DUAL_LATERAL, OBSTACLE_SIZE, OBSTACLE_RED),
                obstacle_on_track(track, "right", arc, -DUAL_LATERAL, OBSTACLE_SIZE, OBSTACLE_RED),
            ],
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementResult {
    pub iou: Option<f64>,
    pub centroid_distance: Option<f64>,
    pub real_points: usize,
    pub sim_points: usize,
}

/// Camera box overlap and depth-centroid distance of one obstacle seen by
/// the real sensors (miscalibrated, noisy) and by the simulator.
pub fn measure_placement(scenario: &Scenario, obstacle: &Obstacle, pose: Pose, rig: &SensorRig, gap: &GapProfile, noise_seed: u64) -> Result<PlacementResult> {
    let only = scenario.with_obstacles(vec![obstacle.clone()])?;
    let real_k = rig.rgb.shifted(gap.perception.principal_offset_px);
    let real_box = overlay_box(&render_rgb(&only, &pose, &real_k, &rig.rgb_mount, RenderMask::OBSTACLES));
    let sim_box = overlay_box(&render_rgb(&only, &pose, &rig.rgb, &rig.rgb_mount, RenderMask::OBSTACLES));
    let iou = match (real_box, sim_box) {
        (Some(a), Some(b)) => Some(iou(&a, &b)?),
        _ => None,
    };
    let req = request(pose, false, true, noise_seed);
    let real = real_frames(&only, rig, gap, &req, RenderMask::OBSTACLES).depth.expect("depth requested");
    let sim = sim_frames(&only, rig, &req, RenderMask::OBSTACLES).depth.expect("depth requested");
    let (rc, sc) = (cloud(&real, rig)?, cloud(&sim, rig)?);
    let centroid_distance = match (centroid(&rc), centroid(&sc)) {
        (Some(a), Some(b)) => Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()),
        _ => None,
    };
    Ok(PlacementResult {
        iou,
        centroid_distance,
        real_points: rc.len(),
        sim_points: sc.len(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), fmt)
}

pub fn obstacle_report(campaign: &Campaign, gap: &GapProfile) -> Result<Report> {
    let mut report = Report::new(
        "rq3_obstacle",
        &["scenario", "configuration", "distance", "obstacle", "repetition", "iou", "centroid_distance", "real_points", "sim_points"],
    );
    let rig = &campaign.run.rig;
    for scenario in campaign.scenarios()? {
        let pose = scenario.track.pose_at(PLACEMENT_ARC, 0.0);
        let configs = obstacle_configurations(&scenario);
        let jobs: Vec<(usize, usize, usize)> = configs
            .iter()
            .enumerate()
            .flat_map(|(c, (_, _, obs))| (0..obs.len()).flat_map(move |o| (0..campaign.repetitions).map(move |r| (c, o, r))))
            .collect();
        let results: Vec<Result<PlacementResult>> = jobs
            .par_iter()
            .map(|&(c, o, r)| {
                let seed = derive_seed(campaign.seeds[0], "rq3_obstacle", (c * 16 + o) as u64 * 1024 + r as u64);
                measure_placement(&scenario, &configs[c].2[o], pose, rig, gap, seed)
            })
            .collect();
        for (&(c, o, r), res) in jobs.iter().zip(results) {
            let (name, d, obs) = &configs[c];
            let res = res?;
            report.row(vec![
                scenario.name.clone(),
                name.clone(),
                fmt(*d),
                obs[o].id.clone(),
                r.to_string(),
                opt(res.iou),
                opt(res.centroid_distance),
                res.real_points.to_string(),
                res.sim_points.to_string(),
            ]);
        }
        for (name, _, _) in &configs {
            let keep = |row: &[String]| row[1] == *name && row[0] == scenario.name;
            let (im, _) = mean_std(&report.values("iou", keep));
            let (cm, _) = mean_std(&report.values("centroid_distance", keep));
            report.summary.push(format!("{} {name}: IoU {}, centroid distance {} m", scenario.name, fmt(im), fmt(cm)));
        }
    }
    Ok(report)
}

/// One anchor per sampled row: the mean column of its marking pixels.
pub fn lane_anchors(img: &RgbImage) -> Vec<[f64; 2]> {
    LANE_ROWS
        .iter()
        .filter(|&&j| j < img.height)
        .filter_map(|&j| {
            let cols: Vec<f64> = (0..img.width)
                .filter(|&i| img.get(i, j).iter().all(|&c| c >= MARKING_LEVEL))
                .map(f64::from)
                .collect();
            (!cols.is_empty()).then(|| [cols.iter().sum::<f64>() / cols.len() as f64, f64::from(j)])
        })
        .collect()
}

pub fn lane_report(campaign: &Campaign, gap: &GapProfile) -> Result<Report> {
    let mut report = Report::new("rq3_lane", &["scenario", "lateral", "direction", "repetition", "alignment_px", "real_anchors", "sim_anchors"]);
    let rig = &campaign.run.rig;
    for scenario in campaign.scenarios()? {
        let empty = scenario.with_obstacles(Vec::new())?;
        for &d in &LANE_OFFSETS {
            for (dir, flip) in [("forward", 0.0), ("reverse", std::f64::consts::PI)] {
                let base = empty.track.pose_at(LANE_ARC, d);
                let pose = Pose { yaw: crate::geometry::normalize_angle(base.yaw + flip), ..base };
                for r in 0..campaign.repetitions {
                    let req = request(pose, true, false, derive_seed(campaign.seeds[0], "rq3_lane", r as u64));
                    let real = real_frames(&empty, rig, gap, &req, RenderMask::BACKGROUND).rgb.expect("rgb requested");
                    let sim = sim_frames(&empty, rig, &req, RenderMask::BACKGROUND).rgb.expect("rgb requested").to_rgb();
                    let (a, b) = (lane_anchors(&real), lane_anchors(&sim));
                    let alignment = lane_alignment(&a, &b).map_or_else(
                        |e| {
                            log::warn!("lane alignment at lateral {d} {dir}: {e}");
                            "nan".to_string()
                        },
                        fmt,
                    );
                    report.row(vec![scenario.name.clone(), fmt(d), dir.into(), r.to_string(), alignment, a.len().to_string(), b.len().to_string()]);
                }
            }
        }
        let (m, s) = mean_std(&report.values("alignment_px", |row| row[0] == scenario.name));
        report.summary.push(format!("{} lane alignment {} ± {} px", scenario.name, fmt(m), fmt(s)));
    }
    Ok(report)
}

/// Frames of one synchronized sample: the pseudo-real recording, the pure
/// simulator render, and the mixed-reality composite.
#[derive(Debug, Clone)]
pub struct SampleFrames {
    pub real_rgb: RgbImage,
    pub real_depth: DepthImage,
    pub sim_rgb: RgbImage,
    pub sim_depth: DepthImage,
    pub mixed_rgb: RgbImage,
    pub mixed_depth: DepthImage,
}

pub fn sample_frames(scenario: &Scenario, rig: &SensorRig, gap: &GapProfile, pose: Pose, noise_seed: u64) -> Result<SampleFrames> {
    let req = request(pose, true, true, noise_seed);
    let real = real_frames(scenario, rig, gap, &req, RenderMask::ALL);
    let sim = sim_frames(scenario, rig, &req, RenderMask::ALL);
    let background = real_frames(scenario, rig, gap, &req, RenderMask::BACKGROUND);
    let overlay = sim_frames(scenario, rig, &req, RenderMask::OBSTACLES);
    Ok(SampleFrames {
        mixed_rgb: mix_rgb(background.rgb.as_ref().expect("rgb requested"), overlay.rgb.as_ref().expect("rgb requested"))?,
        mixed_depth: mix_depth(background.depth.as_ref().expect("depth requested"), overlay.depth.as_ref().expect("depth requested"))?,
        real_rgb: real.rgb.expect("rgb requested"),
        real_depth: real.depth.expect("depth requested"),
        sim_rgb: sim.rgb.expect("rgb requested").to_rgb(),
        sim_depth: sim.depth.expect("depth requested"),
    })
}

/// Poses spread evenly along the centerline from the scenario start.
pub fn battery_poses(scenario: &Scenario, n: usize) -> Vec<Pose> {
    let track = &scenario.track;
    let start = crate::world::lane_query(&scenario.start, track).arc_position;
    let step = track.length() / n as f64;
    (0..n).map(|k| track.pose_at(start + k as f64 * step, 0.0)).collect()
}

struct PairMetrics {
    image: ImageMetricReport,
    cloud_mean: f64,
    cloud_max: f64,
    cloud_std: f64,
    matched: usize,
}

fn compare(campaign: &Campaign, rig: &SensorRig, rgb: &RgbImage, depth: &DepthImage, real: &SampleFrames) -> Result<PairMetrics> {
    let mut image = image_battery(rgb, &real.real_rgb)?;
    if !campaign.perceptual_command.is_empty() {
        image.perceptual_distance = Some(perceptual_distance(&campaign.perceptual_command, rgb, &real.real_rgb)?);
    }
    let c = cloud_stats(&cloud(depth, rig)?, &cloud(&real.real_depth, rig)?);
    let c = match c {
        Ok(c) => c,
        Err(Error::EmptyCorrespondence) => {
            return Ok(PairMetrics { image, cloud_mean: f64::NAN, cloud_max: f64::NAN, cloud_std: f64::NAN, matched: 0 });
        }
        Err(e) => return Err(e),
    };
    Ok(PairMetrics { image, cloud_mean: c.mean, cloud_max: c.max, cloud_std: c.std, matched: c.matched_count })
}

/// Image battery and point-cloud distances of the simulator render and of
/// the mixed-reality composite, each against the pseudo-real recording,
/// over synchronized samples along the track.
pub fn perception_report(campaign: &Campaign, gap: &GapProfile) -> Result<Report> {
    let mut columns = vec!["scenario", "frame", "pair"];
    columns.extend(ImageMetricReport::NAMES);
    columns.extend(["cloud_mean", "cloud_max", "cloud_std", "cloud_matched"]);
    let mut report = Report::new("rq3_perception", &columns);
    let rig = &campaign.run.rig;
    for scenario in campaign.scenarios()? {
        let poses = battery_poses(&scenario, BATTERY_FRAMES);
        let results: Vec<Result<(PairMetrics, PairMetrics)>> = poses
            .par_iter()
            .enumerate()
            .map(|(k, pose)| {
                let f = sample_frames(&scenario, rig, gap, *pose, derive_seed(campaign.seeds[0], "rq3_perception", k as u64))?;
                Ok((compare(campaign, rig, &f.sim_rgb, &f.sim_depth, &f)?, compare(campaign, rig, &f.mixed_rgb, &f.mixed_depth, &f)?))
            })
            .collect();
        let mut wins = 0;
        let (mut vil_cloud, mut mr_cloud) = (Vec::new(), Vec::new());
        for (k, res) in results.into_iter().enumerate() {
            let (vil, mr) = res?;
            wins += usize::from(mr.image.ssim > vil.image.ssim);
            vil_cloud.push(vil.cloud_mean);
            mr_cloud.push(mr.cloud_mean);
            for (pair, m) in [("VIL_vs_RW", vil), ("MR_vs_RW", mr)] {
                let mut row = vec![scenario.name.clone(), k.to_string(), pair.to_string()];
                row.extend(m.image.values().iter().map(|v| if v.is_nan() { String::new() } else { fmt(*v) }));
                row.extend([fmt(m.cloud_mean), fmt(m.cloud_max), fmt(m.cloud_std), m.matched.to_string()]);
                report.row(row);
            }
        }
        let finite = |v: &[f64]| -> Vec<f64> { v.iter().copied().filter(|x| x.is_finite()).collect() };
        report.summary.push(format!("{} SSIM(MR, RW) > SSIM(VIL, RW) on {wins}/{} frames", scenario.name, poses.len()));
        report.summary.push(format!(
            "{} point-cloud mean error: VIL {} m, MR {} m",
            scenario.name,
            fmt(mean_std(&finite(&vil_cloud)).0),
            fmt(mean_std(&finite(&mr_cloud)).0)
        ));
        for pair in ["VIL_vs_RW", "MR_vs_RW"] {
            let (m, s) = mean_std(&report.values("ssim", |row| row[0] == scenario.name && row[2] == pair));
            report.summary.push(format!("{} {pair} SSIM {} ± {}", scenario.name, fmt(m), fmt(s)));
        }
    }
    Ok(report)
}
