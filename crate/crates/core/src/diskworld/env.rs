use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::filtering::Episode;
use crate::rng;

const MID: f64 = 128.0 / 255.0;

/// Colors a distractor may take; excludes the target red and the black
/// background. Every channel is a multiple of 1/255.
pub const PALETTE: [[f64; 3]; 8] = [
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
    [MID, MID, MID],
    [MID, 0.0, 1.0],
];
pub const TARGET_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

/// Radii at the reference 128-pixel resolution.
const REFERENCE_SIZE: f64 = 128.0;
const REFERENCE_TARGET_RADIUS: f64 = 7.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub image_size: usize,
    pub n_distractors: usize,
    pub target_radius: f64,
    /// Each distractor draws its radius uniformly from this set.
    pub distractor_radii: Vec<f64>,
    pub sigma_action: f64,
    pub sigma_dyn: f64,
    pub steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::scaled(32, 10, 20)
    }
}

fn scale_radius(r: f64, image_size: usize) -> f64 {
    (r * image_size as f64 / REFERENCE_SIZE).round().max(2.0)
}

impl EnvConfig {
    /// Radii scaled from the 128-pixel reference, never below 2 pixels.
    pub fn scaled(image_size: usize, n_distractors: usize, steps: usize) -> Self {
        EnvConfig {
            image_size,
            n_distractors,
            target_radius: scale_radius(REFERENCE_TARGET_RADIUS, image_size),
            distractor_radii: (3..=10).map(|r| scale_radius(r as f64, image_size)).collect(),
            sigma_action: 4.0,
            sigma_dyn: 2.0,
            steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        if !(self.target_radius >= 1.0) || self.distractor_radii.iter().any(|&r| !(r >= 1.0)) {
            return bad("disk radii must be at least one pixel".into());
        }
        if self.n_distractors > 0 && self.distractor_radii.is_empty() {
            return bad("distractors need at least one radius".into());
        }
        if !(self.sigma_action >= 0.0) || !(self.sigma_dyn >= 0.0) {
            return bad(format!(
                "noise stds must be non-negative, got {} and {}",
                self.sigma_action, self.sigma_dyn
            ));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.image_size * self.image_size * 3
    }
}

/// Motion of one disk: positions `s₀..s_T` and the ingredients of every step.
#[derive(Clone, Debug, PartialEq)]
pub struct DiskTrack {
    /// `[T + 1, 2]`
    pub positions: Tensor,
    /// Commanded velocities `[T, 2]`.
    pub actions: Tensor,
    /// `[T, 2]`
    pub action_noise: Tensor,
    /// `[T, 2]`
    pub dyn_noise: Tensor,
}

impl DiskTrack {
    fn simulate<R: Rng>(cfg: &EnvConfig, rng: &mut R) -> Self {
        let extent = cfg.image_size as f64;
        let t_max = cfg.steps;
        let mut pos = vec![rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)];
        let mut positions = pos.clone();
        let mut actions = Vec::with_capacity(2 * t_max);
        let mut action_noise = Vec::with_capacity(2 * t_max);
        let mut dyn_noise = Vec::with_capacity(2 * t_max);
        for _ in 0..t_max {
            for p in pos.iter_mut() {
                let a: f64 = StandardNormal.sample(rng);
                let ea: f64 = StandardNormal.sample(rng);
                let e: f64 = StandardNormal.sample(rng);
                let (ea, e) = (ea * cfg.sigma_action, e * cfg.sigma_dyn);
                *p = *p + a + ea + e;
                actions.push(a);
                action_noise.push(ea);
                dyn_noise.push(e);
            }
            positions.extend_from_slice(&pos);
        }
        let m = |d: Vec<f64>, rows| Tensor::matrix(rows, 2, d).expect("two columns");
        DiskTrack {
            positions: m(positions, t_max + 1),
            actions: m(actions, t_max),
            action_noise: m(action_noise, t_max),
            dyn_noise: m(dyn_noise, t_max),
        }
    }

    /// Positions re-derived from `s₀` and the stored increments.
    pub fn resimulate(&self) -> Tensor {
        let t_max = self.actions.rows();
        let mut pos = self.positions.row(0).to_vec();
        let mut out = pos.clone();
        for t in 0..t_max {
            for k in 0..2 {
                pos[k] = pos[k] + self.actions.row(t)[k] + self.action_noise.row(t)[k] + self.dyn_noise.row(t)[k];
            }
            out.extend_from_slice(&pos);
        }
        Tensor::matrix(t_max + 1, 2, out).expect("two columns")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distractor {
    pub track: DiskTrack,
    pub radius: f64,
    /// Index into [`PALETTE`].
    pub color: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub target: DiskTrack,
    pub distractors: Vec<Distractor>,
    pub target_radius: f64,
    pub image_size: usize,
    /// Frames for `t = 1..T`, `[T, H·W·3]` channel-last.
    pub observations: Tensor,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.target.actions.rows()
    }

    /// Filtering problem: commanded actions, frames and target states.
    pub fn episode(&self) -> Episode {
        let t_max = self.steps();
        let truths = Tensor::matrix(t_max, 2, self.target.positions.data()[2..].to_vec()).expect("two columns");
        Episode {
            observations: self.observations.clone(),
            actions: self.target.actions.clone(),
            truths: Some(truths),
            initial_state: self.target.positions.row(0).to_vec(),
        }
    }
}

/// Simulate one trajectory; all randomness comes from `seed`.
pub fn generate_trajectory(cfg: &EnvConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let mut r = rng::stream(seed, &[rng::DATA]);
    let target = DiskTrack::simulate(cfg, &mut r);
    let mut distractors = Vec::with_capacity(cfg.n_distractors);
    for _ in 0..cfg.n_distractors {
        let track = DiskTrack::simulate(cfg, &mut r);
        let radius = cfg.distractor_radii[r.gen_range(0..cfg.distractor_radii.len())];
        let color = r.gen_range(0..PALETTE.len());
        distractors.push(Distractor { track, radius, color });
    }
    let observations = render_observations(cfg.image_size, &target, cfg.target_radius, &distractors)?;
    Ok(Trajectory {
        observations,
        target,
        distractors,
        target_radius: cfg.target_radius,
        image_size: cfg.image_size,
    })
}

/// Frames `t = 1..T` for the given tracks.
pub fn render_observations(
    image_size: usize,
    target: &DiskTrack,
    target_radius: f64,
    distractors: &[Distractor],
) -> Result<Tensor> {
    let steps = target.actions.rows();
    let obs_dim = image_size * image_size * 3;
    let mut data = Vec::with_capacity(steps * obs_dim);
    for t in 1..=steps {
        let others: Vec<([f64; 2], f64, [f64; 3])> = distractors
            .iter()
            .map(|d| {
                let p = d.track.positions.row(t);
                ([p[0], p[1]], d.radius, PALETTE[d.color])
            })
            .collect();
        let p = target.positions.row(t);
        data.extend(render_frame(image_size, [p[0], p[1]], target_radius, &others));
    }
    Tensor::matrix(steps, obs_dim, data)
}

/// Rasterize one frame as channel-last `H·W·3` values in `[0, 1]`.
///
/// Pixel `(row, col)` belongs to a disk when its center `(col + ½, row + ½)`
/// lies within the radius. The target is drawn first and distractors over
/// it in order.
pub fn render_frame(image_size: usize, target: [f64; 2], target_radius: f64, distractors: &[([f64; 2], f64, [f64; 3])]) -> Vec<f64> {
    let mut frame = vec![0.0; image_size * image_size * 3];
    let mut paint = |center: [f64; 2], radius: f64, color: [f64; 3]| {
        let r2 = radius * radius;
        let lo = |c: f64| ((c - radius - 1.0).floor().max(0.0) as usize).min(image_size);
        let hi = |c: f64| ((c + radius + 1.0).ceil().max(0.0) as usize).min(image_size);
        for row in lo(center[1])..hi(center[1]) {
            for col in lo(center[0])..hi(center[0]) {
                let dx = col as f64 + 0.5 - center[0];
                let dy = row as f64 + 0.5 - center[1];
                if dx * dx + dy * dy <= r2 {
                    let k = (row * image_size + col) * 3;
                    frame[k..k + 3].copy_from_slice(&color);
                }
            }
        }
    };
    paint(target, target_radius, TARGET_COLOR);
    for &(c, r, color) in distractors {
        paint(c, r, color);
    }
    frame
}

/// Empirical std of `s_{t+1} − s_t − a_t` per axis over a long run.
pub fn increment_std(track: &DiskTrack) -> [f64; 2] {
    let t_max = track.actions.rows();
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let inc: Vec<f64> = (0..t_max)
            .map(|t| track.positions.row(t + 1)[k] - track.positions.row(t)[k] - track.actions.row(t)[k])
            .collect();
        let m = inc.iter().sum::<f64>() / t_max as f64;
        *o = (inc.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (t_max as f64 - 1.0)).sqrt();
    }
    out
}

/// A single disk track of `steps` steps, for statistics of the dynamics.
pub fn sample_track(cfg: &EnvConfig, seed: u64) -> DiskTrack {
    DiskTrack::simulate(cfg, &mut rng::stream(seed, &[rng::DATA]))
}
