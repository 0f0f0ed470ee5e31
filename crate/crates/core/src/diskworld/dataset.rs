//! Train/validation/test splits and their on-disk format.
//!
//! Frames are not stored: they are a deterministic function of the stored
//! tracks, radii and colors and are re-rendered on load.

use std::path::Path;

use super::env::{generate_trajectory, render_observations, DiskTrack, Distractor, EnvConfig, Trajectory, PALETTE};
use crate::autodiff::Tensor;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::filtering::Episode;
use crate::nn::Normalizer;
use crate::rng;

pub const DATASET_MAGIC: &str = "FLOWPF-DATA";
pub const DATASET_VERSION: u32 = 1;
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: EnvConfig,
    pub seed: u64,
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

impl Dataset {
    /// Trajectory `j` (counted across splits in train, val, test order)
    /// uses its own stream derived from `(seed, j)`.
    pub fn generate(config: &EnvConfig, seed: u64, n_train: usize, n_val: usize, n_test: usize) -> Result<Self> {
        config.validate()?;
        let mut all = (0..n_train + n_val + n_test)
            .map(|j| generate_trajectory(config, rng::derive(seed, &[rng::DATA, j as u64])))
            .collect::<Result<Vec<_>>>()?;
        let test = all.split_off(n_train + n_val);
        let val = all.split_off(n_train);
        Ok(Dataset {
            config: config.clone(),
            seed,
            train: all,
            val,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, name: &str) -> Result<&[Trajectory]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            _ => Err(Error::Config(format!("unknown split `{name}`"))),
        }
    }

    pub fn episodes(&self, split: &str) -> Result<Vec<Episode>> {
        Ok(self.split(split)?.iter().map(Trajectory::episode).collect())
    }

    /// Per-channel statistics of the training frames.
    pub fn observation_normalizer(&self) -> Normalizer {
        let rows = self
            .train
            .iter()
            .flat_map(|t| (0..t.steps()).map(move |i| t.observations.row(i)));
        Normalizer::fit(rows, 3)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let cfg = &self.config;
        c.set_meta("env.image_size", cfg.image_size);
        c.set_meta("env.n_distractors", cfg.n_distractors);
        c.set_meta("env.target_radius", format!("{:?}", cfg.target_radius));
        let radii: Vec<String> = cfg.distractor_radii.iter().map(|r| format!("{r:?}")).collect();
        c.set_meta("env.distractor_radii", radii.join(","));
        c.set_meta("env.sigma_action", format!("{:?}", cfg.sigma_action));
        c.set_meta("env.sigma_dyn", format!("{:?}", cfg.sigma_dyn));
        c.set_meta("env.steps", cfg.steps);
        c.set_meta("seed", self.seed);
        for split in SPLITS {
            let trajs = self.split(split).expect("known split");
            c.set_meta(&format!("n_{split}"), trajs.len());
            for (j, tr) in trajs.iter().enumerate() {
                let p = format!("{split}/{j}");
                c.set_meta(&format!("{p}/image_size"), tr.image_size);
                c.insert(format!("{p}/target_radius"), Tensor::scalar(tr.target_radius));
                put_track(&mut c, &format!("{p}/target"), &tr.target);
                let radii = tr.distractors.iter().map(|d| d.radius).collect();
                let colors = tr.distractors.iter().map(|d| d.color as f64).collect();
                c.insert(format!("{p}/distractor_radii"), Tensor::vector(radii));
                c.insert(format!("{p}/distractor_colors"), Tensor::vector(colors));
                for (k, d) in tr.distractors.iter().enumerate() {
                    put_track(&mut c, &format!("{p}/distractor/{k}"), &d.track);
                }
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let radii_raw = c.meta("env.distractor_radii")?;
        let distractor_radii = if radii_raw.is_empty() {
            Vec::new()
        } else {
            radii_raw
                .split(',')
                .map(|r| r.parse().map_err(|_| Error::Format(format!("bad radius `{r}`"))))
                .collect::<Result<_>>()?
        };
        let config = EnvConfig {
            image_size: c.meta_parse("env.image_size")?,
            n_distractors: c.meta_parse("env.n_distractors")?,
            target_radius: c.meta_parse("env.target_radius")?,
            distractor_radii,
            sigma_action: c.meta_parse("env.sigma_action")?,
            sigma_dyn: c.meta_parse("env.sigma_dyn")?,
            steps: c.meta_parse("env.steps")?,
        };
        let mut splits = Vec::with_capacity(3);
        for split in SPLITS {
            let n: usize = c.meta_parse(&format!("n_{split}"))?;
            let trajs = (0..n)
                .map(|j| read_trajectory(c, &format!("{split}/{j}")))
                .collect::<Result<Vec<_>>>()?;
            splits.push(trajs);
        }
        let test = splits.pop().expect("three splits");
        let val = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Dataset {
            config,
            seed: c.meta_parse("seed")?,
            train,
            val,
            test,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container().write(path, DATASET_MAGIC, DATASET_VERSION)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path, DATASET_MAGIC, DATASET_VERSION)?)
    }
}

fn put_track(c: &mut Container, prefix: &str, t: &DiskTrack) {
    c.insert(format!("{prefix}/positions"), t.positions.clone());
    c.insert(format!("{prefix}/actions"), t.actions.clone());
    c.insert(format!("{prefix}/action_noise"), t.action_noise.clone());
    c.insert(format!("{prefix}/dyn_noise"), t.dyn_noise.clone());
}

fn get_track(c: &Container, prefix: &str) -> Result<DiskTrack> {
    Ok(DiskTrack {
        positions: c.tensor(&format!("{prefix}/positions"))?.clone(),
        actions: c.tensor(&format!("{prefix}/actions"))?.clone(),
        action_noise: c.tensor(&format!("{prefix}/action_noise"))?.clone(),
        dyn_noise: c.tensor(&format!("{prefix}/dyn_noise"))?.clone(),
    })
}

fn read_trajectory(c: &Container, prefix: &str) -> Result<Trajectory> {
    let image_size: usize = c.meta_parse(&format!("{prefix}/image_size"))?;
    let target_radius = c.tensor(&format!("{prefix}/target_radius"))?.item();
    let target = get_track(c, &format!("{prefix}/target"))?;
    let radii = c.tensor(&format!("{prefix}/distractor_radii"))?.data().to_vec();
    let colors = c.tensor(&format!("{prefix}/distractor_colors"))?.data().to_vec();
    if radii.len() != colors.len() {
        return Err(Error::Format(format!("{prefix}: distractor radii and colors disagree")));
    }
    let distractors = radii
        .iter()
        .zip(&colors)
        .enumerate()
        .map(|(k, (&radius, &color))| {
            let color = color as usize;
            if color >= PALETTE.len() {
                return Err(Error::Format(format!("{prefix}: color index {color} out of range")));
            }
            Ok(Distractor {
                track: get_track(c, &format!("{prefix}/distractor/{k}"))?,
                radius,
                color,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let observations = render_observations(image_size, &target, target_radius, &distractors)?;
    Ok(Trajectory {
        target,
        distractors,
        target_radius,
        image_size,
        observations,
    })
}

/// Write every frame of `trajectory` as an 8-bit RGB PNG named
/// `{prefix}_t{t:03}.png` into `dir`.
pub fn export_pngs(trajectory: &Trajectory, dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let size = trajectory.image_size as u32;
    let mut written = Vec::new();
    for t in 0..trajectory.steps() {
        let bytes: Vec<u8> = trajectory
            .observations
            .row(t)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::RgbImage::from_raw(size, size, bytes)
            .ok_or_else(|| Error::Format("frame has the wrong number of pixels".into()))?;
        let path = dir.join(format!("{prefix}_t{:03}.png", t + 1));
        img.save(&path).map_err(|e| Error::Format(format!("png export failed: {e}")))?;
        written.push(path);
    }
    Ok(written)
}
