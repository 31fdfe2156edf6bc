//! Seeded synthetic datasets for tests and benchmarks.
//!
//! All generators place particles in a cube of side `box_size` and are
//! deterministic for a given [`SynthParams`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthModel {
    /// One uniform configuration repeated every frame.
    Static,
    /// Constant per-particle velocity, each component uniform in
    /// `[-step, step]`.
    Drift,
    /// Gaussian random walk with per-step standard deviation `step`.
    Brownian,
    /// `clusters` Gaussian blobs, each a few percent of the box wide, with
    /// Brownian motion.
    Clusters,
    /// Fresh uniform positions every frame; no temporal correlation.
    Uniform,
}

impl SynthModel {
    pub const ALL: [SynthModel; 5] = [
        SynthModel::Static,
        SynthModel::Drift,
        SynthModel::Brownian,
        SynthModel::Clusters,
        SynthModel::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthModel::Static => "static",
            SynthModel::Drift => "drift",
            SynthModel::Brownian => "brownian",
            SynthModel::Clusters => "clusters",
            SynthModel::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub model: SynthModel,
    pub particles: usize,
    pub frames: usize,
    pub dims: usize,
    pub step: f64,
    pub clusters: usize,
    pub box_size: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(model: SynthModel, particles: usize, frames: usize, seed: u64) -> Self {
        SynthParams {
            model,
            particles,
            frames,
            dims: 3,
            step: 1e-3,
            clusters: 8,
            box_size: 10.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::InvalidConfig("at least one dimension is required".into()));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be finite and non-negative, got {}", self.step)));
        }
        if !(self.box_size > 0.0 && self.box_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("box size must be positive, got {}", self.box_size)));
        }
        if self.model == SynthModel::Clusters && self.clusters == 0 {
            return Err(Error::InvalidConfig("clusters model needs k >= 1".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, side: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen::<f64>() * side).collect()
}

pub fn generate(params: &SynthParams) -> Result<Vec<Frame>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let len = params.particles * params.dims;
    let side = params.box_size;
    let walk = Normal::new(0.0, params.step).expect("validated step");

    let mut pos = match params.model {
        SynthModel::Clusters => {
            let centers = uniform(&mut rng, params.clusters * params.dims, side);
            let spread = Normal::new(0.0, 0.02 * side).expect("positive spread");
            let mut pos = Vec::with_capacity(len);
            for _ in 0..params.particles {
                let c = rng.gen_range(0..params.clusters);
                for k in 0..params.dims {
                    pos.push(centers[c * params.dims + k] + spread.sample(&mut rng));
                }
            }
            pos
        }
        _ => uniform(&mut rng, len, side),
    };
    let velocity: Vec<f64> = match params.model {
        SynthModel::Drift => (0..len).map(|_| rng.gen_range(-1.0..=1.0) * params.step).collect(),
        _ => Vec::new(),
    };

    let mut frames = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        if t > 0 {
            match params.model {
                SynthModel::Static => {}
                SynthModel::Drift => pos.iter_mut().zip(&velocity).for_each(|(x, v)| *x += v),
                SynthModel::Brownian | SynthModel::Clusters => {
                    pos.iter_mut().for_each(|x| *x += walk.sample(&mut rng));
                }
                SynthModel::Uniform => pos = uniform(&mut rng, len, side),
            }
        }
        frames.push(Frame::new(t as u64, params.dims, pos.clone())?);
    }
    Ok(frames)
}
