use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdf::{gaussian_target, DepthBinSpec, DepthSupervisionBatch};
use crate::rng::SeededRng;
use crate::rten::{self, Dtype};
use crate::tensor::Tensor;

/// Half-open pixel rectangle `[top, bottom) x [left, right)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.bottom).contains(&y) && (self.left..self.right).contains(&x)
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.top >= self.bottom || self.left >= self.right || self.bottom > height || self.right > width {
            return Err(Error::invalid(
                "Rect",
                format!("{self:?} is empty or leaves the {height}x{width} frame"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Full,
    Rect(Rect),
    /// Pixels with `((y - cy) / ry)^2 + ((x - cx) / rx)^2 <= 1`.
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Region {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect(r) => r.contains(y, x),
            Region::Ellipse { cy, cx, ry, rx } => {
                let (dy, dx) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                dy * dy + dx * dx <= 1.0
            }
        }
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        match *self {
            Region::Full => Ok(()),
            Region::Rect(r) => r.validate(height, width),
            Region::Ellipse { cy, cx, ry, rx } => {
                let inside = (0.0..height as f64).contains(&cy) && (0.0..width as f64).contains(&cx);
                if !inside || !(ry > 0.0) || !(rx > 0.0) {
                    return Err(Error::invalid(
                        "Region",
                        format!("ellipse centre ({cy}, {cx}) radii ({ry}, {rx}) invalid for {height}x{width}"),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A region painted at constant depth (metres).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub region: Region,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Painted in order; together they must cover the frame.
    pub background_planes: Vec<Layer>,
    /// Painted after the planes, later objects occluding earlier ones.
    pub objects: Vec<Layer>,
    pub sparse_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// A 5 m object and a 30 m object over a 15 m / 40 m split background.
    pub fn canonical() -> Self {
        SceneSpec {
            width: 32,
            height: 24,
            background_planes: vec![
                Layer {
                    region: Region::Full,
                    depth: 40.0,
                },
                Layer {
                    region: Region::Rect(Rect {
                        top: 12,
                        left: 0,
                        bottom: 24,
                        right: 32,
                    }),
                    depth: 15.0,
                },
            ],
            objects: vec![
                Layer {
                    region: Region::Rect(Rect {
                        top: 14,
                        left: 4,
                        bottom: 21,
                        right: 12,
                    }),
                    depth: 5.0,
                },
                Layer {
                    region: Region::Ellipse {
                        cy: 5.0,
                        cx: 22.0,
                        ry: 3.0,
                        rx: 4.0,
                    },
                    depth: 30.0,
                },
            ],
            sparse_fraction: 0.1,
            noise_sigma: 0.0,
            seed: 42,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn validate(&self, bins: &DepthBinSpec) -> Result<()> {
        const OP: &str = "SceneSpec";
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(OP, "frame must be at least 1x1"));
        }
        if !(0.0..=1.0).contains(&self.sparse_fraction) {
            return Err(Error::invalid(OP, format!("sparse_fraction {} outside [0, 1]", self.sparse_fraction)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(OP, format!("noise_sigma {} must be finite and >= 0", self.noise_sigma)));
        }
        for layer in self.background_planes.iter().chain(&self.objects) {
            layer.region.validate(self.height, self.width)?;
            if !bins.contains(layer.depth) {
                return Err(Error::invalid(
                    OP,
                    format!("depth {} outside [{}, {}]", layer.depth, bins.d_min(), bins.d_max()),
                ));
            }
        }
        Ok(())
    }
}

/// Ground truth for one frame (`B = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthScene {
    /// `[1, H, W]` metres.
    pub d_dense: Tensor,
    pub mask_dense: Tensor,
    pub d_sparse: Tensor,
    pub mask_sparse: Tensor,
    /// `[1, K, H, W]`, one plane per object; `None` without objects.
    pub instance_masks: Option<Tensor>,
}

impl DepthScene {
    /// Per-pixel discretised Gaussian around the dense depth, `[1, D, H, W]`.
    pub fn perfect_prediction(&self, bins: &DepthBinSpec, sigma: f64) -> Result<Tensor> {
        let (_, h, w) = self.d_dense.dims3("perfect_prediction")?;
        let d = bins.count();
        let mut prob = Tensor::zeros(&[1, d, h, w]);
        for (px, &depth) in self.d_dense.data().iter().enumerate() {
            let g = gaussian_target(depth, bins, sigma)?;
            for (k, &v) in g.data().iter().enumerate() {
                prob.data_mut()[k * h * w + px] = v;
            }
        }
        Ok(prob)
    }

    pub fn batch(&self, prob: Tensor) -> Result<DepthSupervisionBatch> {
        DepthSupervisionBatch::new(
            prob,
            self.d_sparse.clone(),
            self.mask_sparse.clone(),
            self.d_dense.clone(),
            self.mask_dense.clone(),
            self.instance_masks.clone(),
        )
    }

    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut named = vec![
            ("d_dense", &self.d_dense),
            ("mask_dense", &self.mask_dense),
            ("d_sparse", &self.d_sparse),
            ("mask_sparse", &self.mask_sparse),
        ];
        if let Some(m) = &self.instance_masks {
            named.push(("instance_masks", m));
        }
        for (name, t) in named {
            rten::write(dir.join(format!("{name}.rten")), t, Dtype::F64)?;
        }
        Ok(())
    }
}

/// Paints the scene back to front and draws the sparse samples.
///
/// Sparse samples are a seeded subset of `floor(sparse_fraction * H * W)`
/// distinct pixels with Gaussian noise added, clamped into the bin range.
pub fn make_depth_scene(spec: &SceneSpec, bins: &DepthBinSpec) -> Result<DepthScene> {
    spec.validate(bins)?;
    let (h, w) = (spec.height, spec.width);
    let mut dense = vec![f64::NAN; h * w];
    for layer in spec.background_planes.iter().chain(&spec.objects) {
        for (px, d) in dense.iter_mut().enumerate() {
            if layer.region.contains(px / w, px % w) {
                *d = layer.depth;
            }
        }
    }
    if let Some(px) = dense.iter().position(|d| d.is_nan()) {
        return Err(Error::invalid(
            "make_depth_scene",
            format!("pixel ({}, {}) is not covered by any background plane", px / w, px % w),
        ));
    }

    let mut rng = SeededRng::new(spec.seed);
    let count = (spec.sparse_fraction * (h * w) as f64).floor() as usize;
    let mut order: Vec<usize> = (0..h * w).collect();
    for i in 0..count {
        let j = i + rng.below(h * w - i);
        order.swap(i, j);
    }
    let mut sparse = vec![0.0; h * w];
    let mut mask_sparse = vec![0.0; h * w];
    for &px in &order[..count] {
        let noisy = dense[px] + spec.noise_sigma * rng.normal();
        sparse[px] = noisy.clamp(bins.d_min(), bins.d_max());
        mask_sparse[px] = 1.0;
    }

    let instance_masks = (!spec.objects.is_empty()).then(|| {
        let k = spec.objects.len();
        Tensor::from_fn(&[1, k, h, w], |i| {
            let (obj, px) = (i / (h * w), i % (h * w));
            if spec.objects[obj].region.contains(px / w, px % w) {
                1.0
            } else {
                0.0
            }
        })
    });

    Ok(DepthScene {
        d_dense: Tensor::new(vec![1, h, w], dense)?,
        mask_dense: Tensor::ones(&[1, h, w]),
        d_sparse: Tensor::new(vec![1, h, w], sparse)?,
        mask_sparse: Tensor::new(vec![1, h, w], mask_sparse)?,
        instance_masks,
    })
}
