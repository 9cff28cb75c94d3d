use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const MAX_SHIFT: i64 = 4;

/// A BEV feature translated by a fixed integer shift every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSpec {
    /// `[B, C, Hb, Wb]`.
    pub base_feature: Tensor,
    /// `(dy, dx)` pixels per frame.
    pub shift: (i64, i64),
    pub n_frames: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// How a motion file supplies its base feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseFeature {
    Tensor(Tensor),
    /// A few random plane waves per channel with periods of 6 to 12 pixels.
    Smooth { shape: Vec<usize>, seed: u64 },
}

impl BaseFeature {
    pub fn build(&self) -> Result<Tensor> {
        match self {
            BaseFeature::Tensor(t) => Ok(t.clone()),
            BaseFeature::Smooth { shape, seed } => smooth_field(shape, *seed),
        }
    }
}

pub fn smooth_field(shape: &[usize], seed: u64) -> Result<Tensor> {
    let probe = Tensor::zeros(shape);
    let (b, c, h, w) = probe.dims4("smooth_field")?;
    let mut rng = SeededRng::new(seed);
    let mut out = Tensor::zeros(shape);
    for plane in 0..b * c {
        for _ in 0..3 {
            let period = rng.uniform_in(6.0, 12.0);
            let angle = rng.uniform_in(0.0, TAU);
            let phase = rng.uniform_in(0.0, TAU);
            let amp = rng.uniform_in(0.3, 1.0);
            let (ky, kx) = (TAU / period * angle.sin(), TAU / period * angle.cos());
            for y in 0..h {
                for x in 0..w {
                    out.data_mut()[(plane * h + y) * w + x] += amp * (ky * y as f64 + kx * x as f64 + phase).sin();
                }
            }
        }
    }
    Ok(out)
}

/// JSON form of [`MotionSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpecFile {
    pub base: BaseFeature,
    pub shift: (i64, i64),
    pub n_frames: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MotionSpec {
    pub fn from_file(file: &MotionSpecFile) -> Result<Self> {
        let spec = MotionSpec {
            base_feature: file.base.build()?,
            shift: file.shift,
            n_frames: file.n_frames,
            noise_sigma: file.noise_sigma,
            seed: file.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MotionSpecFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(&file)
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "MotionSpec";
        self.base_feature.dims4(OP)?;
        let (dy, dx) = self.shift;
        if dy.abs() > MAX_SHIFT || dx.abs() > MAX_SHIFT {
            return Err(Error::invalid(OP, format!("shift ({dy}, {dx}) exceeds {MAX_SHIFT} pixels")));
        }
        if self.n_frames < 2 {
            return Err(Error::invalid(OP, format!("need at least 2 frames, got {}", self.n_frames)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(OP, format!("noise_sigma {} must be finite and >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MovingBev {
    /// Noisy frames.
    pub frames: Vec<Tensor>,
    /// The same frames without noise.
    pub clean: Vec<Tensor>,
    pub shift: (i64, i64),
}

/// `base` translated by `(dy, dx)` with zero fill: `out[y, x] = base[y - dy, x - dx]`.
pub fn shift_feature(base: &Tensor, dy: i64, dx: i64) -> Result<Tensor> {
    let (_, _, h, w) = base.dims4("shift_feature")?;
    Ok(Tensor::from_fn(base.shape(), |i| {
        let (plane, y, x) = (i / (h * w), (i / w) % h, i % w);
        let (sy, sx) = (y as i64 - dy, x as i64 - dx);
        if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
            base.data()[(plane * h + sy as usize) * w + sx as usize]
        } else {
            0.0
        }
    }))
}

/// Frame `t` is the base shifted by `t * shift`, plus seeded Gaussian noise.
pub fn make_moving_bev(spec: &MotionSpec) -> Result<MovingBev> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let (dy, dx) = spec.shift;
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut clean = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames as i64 {
        let c = shift_feature(&spec.base_feature, t * dy, t * dx)?;
        let noise = rng.normal_tensor(c.shape(), spec.noise_sigma);
        let mut f = c.clone();
        f.axpy(1.0, &noise)?;
        frames.push(f);
        clean.push(c);
    }
    Ok(MovingBev {
        frames,
        clean,
        shift: spec.shift,
    })
}
