//! Synthetic one-shot cases.
//!
//! Every patch whose center falls inside the object region draws its feature
//! from an isotropic Gaussian around the object centroid, every other patch
//! from one around the background centroid. Reference and target share the
//! two centroids but place their objects differently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config_text::parse_entries;
use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::matching::FeatureMap;
use crate::patching::{build_patch_grid, PatchGrid};
use crate::scalar::Scalar;

/// Object primitive in pixel coordinates. A pixel belongs to the shape when
/// its center `(x + 0.5, y + 0.5)` does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Half-open box `[x0, x1) x [y0, y1)`.
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
}

impl Shape {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => px >= x0 && px < x1 && py >= y0 && py < y1,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (u, v) = ((px - cx) / rx, (py - cy) / ry);
                rx > 0.0 && ry > 0.0 && u * u + v * v <= 1.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub feature_dim: usize,
    /// Per-component standard deviation of the feature noise.
    pub sigma: f64,
    /// Distance between the object and background centroids.
    pub separation: f64,
    pub ref_shapes: Vec<Shape>,
    pub target_shapes: Vec<Shape>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSample<T: Scalar = f32> {
    pub reference: FeatureMap<T>,
    pub ref_mask: MaskImage,
    pub target: FeatureMap<T>,
    pub target_mask: MaskImage,
}

fn rasterize(width: usize, height: usize, shapes: &[Shape]) -> MaskImage {
    MaskImage::from_fn(width, height, |x, y| {
        shapes.iter().any(|s| s.contains(x, y))
    })
}

fn check_mask(mask: &MaskImage, which: &str) -> Result<()> {
    if mask.count_ones() == 0 {
        return Err(Error::DegenerateGeometry(format!(
            "{which} object region is empty"
        )));
    }
    let (w, h) = (mask.width(), mask.height());
    let touches = (0..w).any(|x| mask.get(x, 0) || mask.get(x, h - 1))
        || (0..h).any(|y| mask.get(0, y) || mask.get(w - 1, y));
    if touches {
        return Err(Error::DegenerateGeometry(format!(
            "{which} object region touches the image border"
        )));
    }
    Ok(())
}

fn features<T: Scalar>(
    grid: &PatchGrid,
    mask: &MaskImage,
    centroids: &[Vec<f64>; 2],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    let dim = centroids[0].len();
    let mut data = Vec::with_capacity(grid.len() * dim);
    for (x, y) in grid.centers() {
        let centroid = &centroids[usize::from(!mask.get(x, y))];
        for &c in centroid {
            let noise = if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            data.push(T::from_f64_lossy(c + noise));
        }
    }
    data
}

/// Deterministic in `case.seed`.
pub fn generate_synthetic<T: Scalar>(case: &SyntheticCase) -> Result<SyntheticSample<T>> {
    if case.feature_dim == 0 {
        return Err(Error::DegenerateGeometry(
            "feature_dim must be at least 1".into(),
        ));
    }
    if !(case.sigma >= 0.0 && case.sigma.is_finite()) {
        return Err(Error::DegenerateGeometry(format!(
            "invalid sigma {}",
            case.sigma
        )));
    }
    if !(case.separation > 0.0 && case.separation.is_finite()) {
        return Err(Error::DegenerateGeometry(format!(
            "invalid separation {}",
            case.separation
        )));
    }
    let grid = build_patch_grid(case.width, case.height, case.patch_size, case.stride)
        .map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
    let ref_mask = rasterize(case.width, case.height, &case.ref_shapes);
    let target_mask = rasterize(case.width, case.height, &case.target_shapes);
    check_mask(&ref_mask, "reference")?;
    check_mask(&target_mask, "target")?;
    let object_patches = grid.centers().filter(|&(x, y)| ref_mask.get(x, y)).count();
    if object_patches == 0 {
        return Err(Error::DegenerateGeometry(
            "no reference patch center lies on the object".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let direction: Vec<f64> = loop {
        let v: Vec<f64> = (0..case.feature_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            break v.into_iter().map(|x| x / norm).collect();
        }
    };
    let half = case.separation / 2.0;
    let centroids = [
        direction.iter().map(|d| d * half).collect::<Vec<_>>(),
        direction.iter().map(|d| -d * half).collect::<Vec<_>>(),
    ];

    let ref_data = features(&grid, &ref_mask, &centroids, case.sigma, &mut rng);
    let target_data = features(&grid, &target_mask, &centroids, case.sigma, &mut rng);
    Ok(SyntheticSample {
        reference: FeatureMap::new(grid, case.feature_dim, ref_data)?,
        ref_mask,
        target: FeatureMap::new(grid, case.feature_dim, target_data)?,
        target_mask,
    })
}

/// Family of random-geometry cases derived from one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSuite {
    pub seed: u64,
    pub cases: usize,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub feature_dim: usize,
    pub sigma: f64,
    pub separation: f64,
    /// Object half-extent range, as fractions of the image size.
    pub min_extent: f64,
    pub max_extent: f64,
    pub max_shapes: usize,
}

impl Default for SyntheticSuite {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 20,
            width: 192,
            height: 192,
            patch_size: 16,
            stride: 16,
            feature_dim: 16,
            sigma: 0.0,
            separation: 1.0,
            min_extent: 0.15,
            max_extent: 0.35,
            max_shapes: 2,
        }
    }
}

impl SyntheticSuite {
    /// Noise level as a multiple of the centroid separation.
    pub fn with_relative_noise(mut self, factor: f64) -> Self {
        self.sigma = factor * self.separation;
        self
    }

    fn random_shapes(&self, rng: &mut ChaCha8Rng) -> Vec<Shape> {
        let (w, h) = (self.width as f64, self.height as f64);
        let count = rng.random_range(1..=self.max_shapes.max(1));
        (0..count)
            .map(|_| {
                let hx = rng.random_range(self.min_extent..=self.max_extent) * w;
                let hy = rng.random_range(self.min_extent..=self.max_extent) * h;
                // keep one pixel clear of the border
                let cx = rng.random_range((hx + 1.0)..=(w - hx - 1.0).max(hx + 1.0));
                let cy = rng.random_range((hy + 1.0)..=(h - hy - 1.0).max(hy + 1.0));
                if rng.random_bool(0.5) {
                    Shape::Ellipse {
                        cx,
                        cy,
                        rx: hx,
                        ry: hy,
                    }
                } else {
                    Shape::Rect {
                        x0: cx - hx,
                        y0: cy - hy,
                        x1: cx + hx,
                        y1: cy + hy,
                    }
                }
            })
            .collect()
    }

    /// Case `i` uses seed `seed + i`. Draws whose reference object misses
    /// every patch center are redrawn.
    pub fn case(&self, index: usize) -> SyntheticCase {
        let seed = self.seed.wrapping_add(index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9e0e_7a11_0000);
        loop {
            let case = SyntheticCase {
                seed,
                width: self.width,
                height: self.height,
                patch_size: self.patch_size,
                stride: self.stride,
                feature_dim: self.feature_dim,
                sigma: self.sigma,
                separation: self.separation,
                ref_shapes: self.random_shapes(&mut rng),
                target_shapes: self.random_shapes(&mut rng),
            };
            let grid = build_patch_grid(self.width, self.height, self.patch_size, self.stride);
            let Ok(grid) = grid else { return case };
            let covers = |shapes: &[Shape]| {
                grid.centers()
                    .any(|(x, y)| shapes.iter().any(|s| s.contains(x, y)))
            };
            if covers(&case.ref_shapes) {
                return case;
            }
        }
    }

    pub fn all_cases(&self) -> Vec<SyntheticCase> {
        (0..self.cases).map(|i| self.case(i)).collect()
    }

    pub const KEYS: [&'static str; 12] = [
        "seed",
        "cases",
        "width",
        "height",
        "patch_size",
        "stride",
        "feature_dim",
        "sigma",
        "separation",
        "min_extent",
        "max_extent",
        "max_shapes",
    ];

    /// `key = value` lines over the defaults.
    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut s = Self::default();
        for e in parse_entries(text, source_name)? {
            match e.key.as_str() {
                "seed" => s.seed = e.parse(source_name)?,
                "cases" => s.cases = e.parse(source_name)?,
                "width" => s.width = e.parse(source_name)?,
                "height" => s.height = e.parse(source_name)?,
                "patch_size" => s.patch_size = e.parse(source_name)?,
                "stride" => s.stride = e.parse(source_name)?,
                "feature_dim" => s.feature_dim = e.parse(source_name)?,
                "sigma" => s.sigma = e.parse(source_name)?,
                "separation" => s.separation = e.parse(source_name)?,
                "min_extent" => s.min_extent = e.parse(source_name)?,
                "max_extent" => s.max_extent = e.parse(source_name)?,
                "max_shapes" => s.max_shapes = e.parse(source_name)?,
                other => return Err(e.error(source_name, format!("unknown key `{other}`"))),
            }
        }
        if !(0.0 < s.min_extent && s.min_extent <= s.max_extent && s.max_extent < 0.5) {
            return Err(Error::InvalidValue(format!(
                "{source_name}: need 0 < min_extent <= max_extent < 0.5"
            )));
        }
        Ok(s)
    }
}
