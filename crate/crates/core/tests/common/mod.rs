//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use teleop_core::geometry::Vec3;
use teleop_core::retargeting::{synthetic_hand, HandFrame, HandModel};

pub const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");

pub fn config_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(CONFIGS).join(rel)
}

pub fn load_hand(name: &str) -> HandModel {
    HandModel::load(config_path(&format!("hands/{name}.toml"))).unwrap()
}

/// Tip of the planar finger written out with trig, no chain machinery.
pub fn planar_tip(q1: f64, q2: f64) -> Vec3 {
    Vec3::new(
        0.0,
        0.09 + 0.05 * q1.cos() + 0.04 * (q1 + q2).cos(),
        0.05 * q1.sin() + 0.04 * (q1 + q2).sin(),
    )
}

pub fn thumb_tip(t: f64) -> Vec3 {
    Vec3::new(0.025 + 0.1 * t.cos(), 0.025 + 0.1 * t.sin(), 0.0)
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect()
}

/// Exhaustive search over the planar finger's box. Returns (best objective, argmin).
pub fn planar_grid_best(target: Vec3, alpha: f64, step: f64) -> (f64, [f64; 2]) {
    let g = grid(0.0, 1.6, step);
    let t = alpha * target;
    let mut best = (f64::INFINITY, [0.0; 2]);
    for &a in &g {
        for &b in &g {
            let v = (t - planar_tip(a, b)).norm_squared();
            if v < best.0 {
                best = (v, [a, b]);
            }
        }
    }
    best
}

/// Exhaustive search over the two-finger hand (thumb, mcp, pip).
pub fn two_finger_grid_best(thumb: Vec3, index: Vec3, alpha: f64, step: f64) -> f64 {
    let t_thumb = alpha * thumb;
    let t_index = alpha * index;
    let thumb_best = grid(0.0, 1.2, step)
        .into_iter()
        .map(|t| (t_thumb - thumb_tip(t)).norm_squared())
        .fold(f64::INFINITY, f64::min);
    let g = grid(0.0, 1.6, step);
    let mut index_best = f64::INFINITY;
    for &a in &g {
        for &b in &g {
            index_best = index_best.min((t_index - planar_tip(a, b)).norm_squared());
        }
    }
    thumb_best + index_best
}

/// Slowly curling synthetic hand with Gaussian keypoint noise.
pub fn noisy_hand_stream(seed: u64, frames: usize, sigma: f64) -> Vec<HandFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let phases: [f64; 5] = [(); 5].map(|_| rng.random_range(0.0..std::f64::consts::TAU));
    (0..frames)
        .map(|i| {
            let t = i as f64 / 30.0;
            let curls = std::array::from_fn(|f| 0.4 + 0.3 * (0.8 * t + phases[f]).sin());
            let clean = synthetic_hand(t, curls);
            let mut k = *clean.keypoints();
            for p in k.iter_mut().skip(1) {
                *p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
            HandFrame::new(t, k).unwrap()
        })
        .collect()
}

pub fn mean_step(q: &[teleop_core::kinematics::JointVector]) -> f64 {
    if q.len() < 2 {
        return 0.0;
    }
    q.windows(2).map(|w| w[0].distance(&w[1])).sum::<f64>() / (q.len() - 1) as f64
}

/// Exoskeleton posture around which [`exo_stream`] oscillates: elbow bent,
/// wrist in front of the shoulder.
pub const EXO_NOMINAL: [f64; 6] = [0.0, 0.6, 0.0, -1.3, 0.0, 0.0];

/// Smooth two-arm exoskeleton joint stream with hand frames, `dt` = 1/100 s.
pub fn exo_stream(frames: usize) -> Vec<teleop_core::session::InputFrame> {
    use teleop_core::session::{ArmInput, InputFrame};
    let arm = |t: f64, phase: f64| {
        let q = EXO_NOMINAL
            .iter()
            .enumerate()
            .map(|(j, q0)| q0 + 0.3 * (0.7 * t + phase + j as f64).sin())
            .collect();
        let c = 0.6 + 0.5 * (1.3 * t + phase).sin();
        ArmInput::joints(q).with_hand(synthetic_hand(t, [c, c * 0.9, c * 1.1, c, c * 0.8]))
    };
    (0..frames)
        .map(|i| {
            let t = i as f64 * 0.01;
            InputFrame {
                timestamp: t,
                arms: vec![Some(arm(t, 0.0)), Some(arm(t, 1.5))],
            }
        })
        .collect()
}
