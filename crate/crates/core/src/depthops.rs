//! Instance depth normalization, depth losses and per-pixel depth error.
//!
//! Normalized instance depth lives in `[-1, 1]` and is mapped back to meters
//! as `mean_depth + range * normalized`. All losses iterate row-major over
//! the pixels flagged valid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepthError {
    #[error("raster {0}x{1} does not match raster {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("raster {width}x{height} expects {expected} values, got {got}")]
    BadLength {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("denormalized depth {value} at pixel {index} is not positive")]
    NonPositiveResult { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("prediction and truth share no valid pixel")]
    EmptyOverlap,
}

/// Dense depth raster with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map; pixels with non-finite values are flagged invalid.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        check_len(width, height, values.len())?;
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, DepthError> {
        check_len(width, height, values.len())?;
        check_len(width, height, valid.len())?;
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Absolute depth map: pixels that are not strictly positive are invalid.
    pub fn absolute(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        check_len(width, height, values.len())?;
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    fn same_shape(&self, w: usize, h: usize) -> Result<(), DepthError> {
        if self.width != w || self.height != h {
            return Err(DepthError::DimensionMismatch(self.width, self.height, w, h));
        }
        Ok(())
    }
}

/// Grayscale image with luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        check_len(width, height, values.len())?;
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DepthError::InvalidParameter(
                "luminance must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Rec. 601 luma from interleaved RGB in `[0, 1]`.
    pub fn from_rgb(width: usize, height: usize, rgb: &[f64]) -> Result<Self, DepthError> {
        check_len(width, height, rgb.len() / 3)?;
        if !rgb.len().is_multiple_of(3) {
            return Err(DepthError::BadLength {
                width,
                height,
                expected: width * height * 3,
                got: rgb.len(),
            });
        }
        let values = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Self::new(width, height, values)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

fn check_len(width: usize, height: usize, got: usize) -> Result<(), DepthError> {
    if width * height != got {
        return Err(DepthError::BadLength {
            width,
            height,
            expected: width * height,
            got,
        });
    }
    Ok(())
}

/// Squashes logits into `[-1, 1]` with `2 * sigmoid(x) - 1`.
pub fn normalize_activation(logits: &DepthMap) -> DepthMap {
    // 2σ(x) − 1 = tanh(x / 2): odd and saturating at exactly ±1.
    let values = logits
        .values
        .iter()
        .zip(&logits.valid)
        .map(|(&x, &ok)| if ok { (0.5 * x).tanh() } else { x })
        .collect();
    DepthMap {
        width: logits.width,
        height: logits.height,
        values,
        valid: logits.valid.clone(),
    }
}

/// Maps a normalized instance depth map back to meters.
pub fn denormalize(
    normalized: &DepthMap,
    mean_depth: f64,
    range: f64,
) -> Result<DepthMap, DepthError> {
    if !(range > 0.0) || !range.is_finite() {
        return Err(DepthError::InvalidParameter(format!(
            "depth range must be positive, got {range}"
        )));
    }
    if !(mean_depth > 0.0) || !mean_depth.is_finite() {
        return Err(DepthError::InvalidParameter(format!(
            "mean depth must be positive, got {mean_depth}"
        )));
    }
    let mut values = Vec::with_capacity(normalized.values.len());
    for (index, (&d, &ok)) in normalized.values.iter().zip(&normalized.valid).enumerate() {
        if !ok {
            values.push(0.0);
            continue;
        }
        let value = mean_depth + range * d;
        if !(value > 0.0) {
            return Err(DepthError::NonPositiveResult { index, value });
        }
        values.push(value);
    }
    Ok(DepthMap {
        width: normalized.width,
        height: normalized.height,
        values,
        valid: normalized.valid.clone(),
    })
}

/// Pixels `(x, y)` whose forward neighbours `(x+1, y)` and `(x, y+1)` exist
/// and all three are valid.
fn smoothness_support(map: &DepthMap) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (w, h) = (map.width, map.height);
    (0..h.saturating_sub(1))
        .flat_map(move |y| (0..w.saturating_sub(1)).map(move |x| (x, y)))
        .filter(move |&(x, y)| map.is_valid(x, y) && map.is_valid(x + 1, y) && map.is_valid(x, y + 1))
}

/// Edge-aware smoothness: mean of `|∂x D| e^{-|∂x I|} + |∂y D| e^{-|∂y I|}`.
///
/// Forward differences; the last row and column have no forward neighbour
/// and are excluded. Returns 0 when no pixel qualifies.
pub fn smoothness_loss(normalized: &DepthMap, image: &GrayImage) -> Result<f64, DepthError> {
    normalized.same_shape(image.width, image.height)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in smoothness_support(normalized) {
        let d = normalized.at(x, y);
        let i = image.at(x, y);
        let gx = (normalized.at(x + 1, y) - d).abs() * (-(image.at(x + 1, y) - i).abs()).exp();
        let gy = (normalized.at(x, y + 1) - d).abs() * (-(image.at(x, y + 1) - i).abs()).exp();
        sum += gx + gy;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Subgradient of [`smoothness_loss`] with respect to every pixel of the map
/// (`sign(0) = 0` at kinks).
pub fn smoothness_loss_grad(
    normalized: &DepthMap,
    image: &GrayImage,
) -> Result<Vec<f64>, DepthError> {
    normalized.same_shape(image.width, image.height)?;
    let w = normalized.width;
    let mut grad = vec![0.0; normalized.values.len()];
    let support: Vec<(usize, usize)> = smoothness_support(normalized).collect();
    if support.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / support.len() as f64;
    let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
    for (x, y) in support {
        let d = normalized.at(x, y);
        let i = image.at(x, y);
        let wx = (-(image.at(x + 1, y) - i).abs()).exp() * scale;
        let wy = (-(image.at(x, y + 1) - i).abs()).exp() * scale;
        let sx = sign(normalized.at(x + 1, y) - d) * wx;
        let sy = sign(normalized.at(x, y + 1) - d) * wy;
        grad[y * w + x + 1] += sx;
        grad[(y + 1) * w + x] += sy;
        grad[y * w + x] -= sx + sy;
    }
    Ok(grad)
}

/// Weights of the combined depth loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLossConfig {
    /// Variance focus of the scale-invariant log term.
    pub variance_focus: f64,
    pub silog_weight: f64,
    pub relsq_weight: f64,
}

impl Default for DepthLossConfig {
    fn default() -> Self {
        Self {
            variance_focus: 0.85,
            silog_weight: 1.0,
            relsq_weight: 1.0,
        }
    }
}

/// The two terms of [`silog_relsq_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthLoss {
    pub silog: f64,
    pub relsq: f64,
    pub total: f64,
}

fn joint_valid(pred: &DepthMap, truth: &DepthMap) -> Result<Vec<usize>, DepthError> {
    pred.same_shape(truth.width, truth.height)?;
    let idx: Vec<usize> = (0..pred.values.len())
        .filter(|&i| {
            pred.valid[i] && truth.valid[i] && pred.values[i] > 0.0 && truth.values[i] > 0.0
        })
        .collect();
    if idx.is_empty() {
        return Err(DepthError::EmptyOverlap);
    }
    Ok(idx)
}

/// Scale-invariant log error plus relative squared error over jointly valid
/// pixels.
///
/// With `g = ln pred − ln truth`, the log term is
/// `mean(g²) − variance_focus · mean(g)²` and the relative term is
/// `mean((pred − truth)² / truth²)`.
pub fn silog_relsq_loss(
    pred: &DepthMap,
    truth: &DepthMap,
    config: &DepthLossConfig,
) -> Result<DepthLoss, DepthError> {
    let idx = joint_valid(pred, truth)?;
    let n = idx.len() as f64;
    let (mut sum_g, mut sum_g2, mut sum_rel) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (p, t) = (pred.values[i], truth.values[i]);
        let g = p.ln() - t.ln();
        sum_g += g;
        sum_g2 += g * g;
        sum_rel += (p - t) * (p - t) / (t * t);
    }
    let mean_g = sum_g / n;
    let silog = (sum_g2 / n - config.variance_focus * mean_g * mean_g).max(0.0);
    let relsq = sum_rel / n;
    Ok(DepthLoss {
        silog,
        relsq,
        total: config.silog_weight * silog + config.relsq_weight * relsq,
    })
}

/// `|pred − truth| / truth` per pixel; only jointly valid pixels are valid.
pub fn abs_rel_error(pred: &DepthMap, truth: &DepthMap) -> Result<DepthMap, DepthError> {
    let idx = joint_valid(pred, truth)?;
    let mut values = vec![0.0; pred.values.len()];
    let mut valid = vec![false; pred.values.len()];
    for i in idx {
        values[i] = (pred.values[i] - truth.values[i]).abs() / truth.values[i];
        valid[i] = true;
    }
    Ok(DepthMap {
        width: pred.width,
        height: pred.height,
        values,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_examples() {
        let m = DepthMap::new(4, 1, vec![0.0, 3.0, -3.0, 800.0]).unwrap();
        let n = normalize_activation(&m);
        assert_eq!(n.values[0], 0.0);
        assert_eq!(n.values[1], -n.values[2]);
        assert_eq!(n.values[3], 1.0);
        let naive = 2.0 / (1.0 + (-3.0f64).exp()) - 1.0;
        assert!((n.values[1] - naive).abs() < 1e-15);
        let m = DepthMap::new(1, 1, vec![-1e300]).unwrap();
        assert_eq!(normalize_activation(&m).values[0], -1.0);
    }

    #[test]
    fn denormalize_examples() {
        let zero = DepthMap::filled(3, 2, 0.0);
        assert!(denormalize(&zero, 10.0, 3.0).unwrap().values.iter().all(|&v| v == 10.0));
        let one = DepthMap::filled(3, 2, 1.0);
        assert!(denormalize(&one, 10.0, 3.0).unwrap().values.iter().all(|&v| v == 13.0));
        let low = DepthMap::filled(1, 1, -1.0);
        assert!(matches!(
            denormalize(&low, 2.0, 3.0),
            Err(DepthError::NonPositiveResult { index: 0, .. })
        ));
        assert!(matches!(denormalize(&low, 2.0, 0.0), Err(DepthError::InvalidParameter(_))));
    }

    #[test]
    fn denormalize_keeps_invalid_pixels_invalid() {
        let m = DepthMap::with_mask(2, 1, vec![0.5, -5.0], vec![true, false]).unwrap();
        let d = denormalize(&m, 4.0, 2.0).unwrap();
        assert_eq!(d.values[0], 5.0);
        assert!(!d.valid[1]);
    }

    #[test]
    fn smoothness_constant_map_is_zero() {
        let d = DepthMap::filled(5, 4, 0.3);
        let img = GrayImage::new(5, 4, (0..20).map(|i| i as f64 / 20.0).collect()).unwrap();
        assert_eq!(smoothness_loss(&d, &img).unwrap(), 0.0);
    }

    #[test]
    fn smoothness_three_by_three_ramp() {
        // D(x, y) = 0.1 x, constant image: x-term 0.1 at each of 4 interior pixels.
        let d = DepthMap::new(3, 3, (0..9).map(|i| 0.1 * (i % 3) as f64).collect()).unwrap();
        let img = GrayImage::new(3, 3, vec![0.5; 9]).unwrap();
        let loss = smoothness_loss(&d, &img).unwrap();
        assert!((loss - 0.1).abs() < 1e-15);
        let transposed = DepthMap::new(3, 3, (0..9).map(|i| 0.1 * (i / 3) as f64).collect()).unwrap();
        assert!((smoothness_loss(&transposed, &img).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn smoothness_decreases_with_image_gradient() {
        let d = DepthMap::new(4, 2, (0..8).map(|i| 0.2 * (i % 4) as f64).collect()).unwrap();
        let mut last = f64::INFINITY;
        for step in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let img = GrayImage::new(4, 2, (0..8).map(|i| step * (i % 4) as f64).collect()).unwrap();
            let loss = smoothness_loss(&d, &img).unwrap();
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn smoothness_shape_mismatch() {
        let d = DepthMap::filled(2, 2, 0.0);
        let img = GrayImage::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(matches!(smoothness_loss(&d, &img), Err(DepthError::DimensionMismatch(..))));
    }

    #[test]
    fn silog_examples() {
        let truth = DepthMap::absolute(3, 1, vec![2.0, 5.0, 11.0]).unwrap();
        let cfg = DepthLossConfig::default();
        let l = silog_relsq_loss(&truth, &truth, &cfg).unwrap();
        assert_eq!(l.total, 0.0);

        let c: f64 = 1.7;
        let pred = DepthMap::absolute(3, 1, truth.values.iter().map(|v| v * c).collect()).unwrap();
        let pure = DepthLossConfig {
            variance_focus: 1.0,
            ..cfg
        };
        let l = silog_relsq_loss(&pred, &truth, &pure).unwrap();
        assert!(l.silog.abs() < 1e-12);
        assert!((l.relsq - (c - 1.0).powi(2)).abs() < 1e-12);

        // With the default variance focus a global scale leaves (1 − 0.85)·ln²c.
        let l = silog_relsq_loss(&pred, &truth, &cfg).unwrap();
        assert!((l.silog - 0.15 * c.ln().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn empty_overlap() {
        let a = DepthMap::with_mask(2, 1, vec![1.0, 1.0], vec![true, false]).unwrap();
        let b = DepthMap::with_mask(2, 1, vec![1.0, 1.0], vec![false, true]).unwrap();
        assert_eq!(
            silog_relsq_loss(&a, &b, &DepthLossConfig::default()),
            Err(DepthError::EmptyOverlap)
        );
        assert_eq!(abs_rel_error(&a, &b), Err(DepthError::EmptyOverlap));
    }

    #[test]
    fn abs_rel_examples() {
        let truth = DepthMap::absolute(2, 2, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        let e = abs_rel_error(&truth, &truth).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        let pred = DepthMap::absolute(2, 2, truth.values.iter().map(|v| v * 1.25).collect()).unwrap();
        let e = abs_rel_error(&pred, &truth).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn grayscale_uses_rec601() {
        let g = GrayImage::from_rgb(2, 1, &[1.0, 0.0, 0.0, 0.2, 0.4, 0.6]).unwrap();
        assert_eq!(g.values[0], 0.299);
        assert!((g.values[1] - (0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6)).abs() < 1e-15);
    }
}
