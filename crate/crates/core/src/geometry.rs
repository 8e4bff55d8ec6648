//! Pinhole projection of object centers into the bird's-eye-view plane.
//!
//! The BEV frame is camera-relative: `x_lateral` grows to the right and
//! `z_forward` along the optical axis. The vertical image axis is dropped, so
//! `fy`/`cy` are carried for completeness only. No ego-motion compensation is
//! applied between frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("mean depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    OutOfFrame { u: f64, v: f64, width: f64, height: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Pinhole parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, GeometryError> {
        let intrinsics = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.width, self.height];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "all fields must be finite".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if !(0.0..=self.width).contains(&self.cx) || !(0.0..=self.height).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width).contains(&u) && (0.0..=self.height).contains(&v)
    }

    /// Projects a camera-frame point `(x right, y down, z forward)` to pixels.
    pub fn project(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        (self.cx + self.fx * x / z, self.cy + self.fy * y / z)
    }
}

/// Ground-plane position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevPoint {
    pub x_lateral: f64,
    pub z_forward: f64,
}

impl BevPoint {
    /// Horizontal pixel coordinate this point projects to.
    pub fn image_u(&self, intrinsics: &CameraIntrinsics) -> f64 {
        intrinsics.cx + intrinsics.fx * self.x_lateral / self.z_forward
    }
}

pub fn project_bev(
    center: (f64, f64),
    mean_depth: f64,
    intrinsics: &CameraIntrinsics,
) -> Result<BevPoint, GeometryError> {
    if !(mean_depth > 0.0) || !mean_depth.is_finite() {
        return Err(GeometryError::NonPositiveDepth(mean_depth));
    }
    let (u, v) = center;
    if !intrinsics.contains(u, v) {
        return Err(GeometryError::OutOfFrame {
            u,
            v,
            width: intrinsics.width,
            height: intrinsics.height,
        });
    }
    Ok(BevPoint {
        x_lateral: (u - intrinsics.cx) * mean_depth / intrinsics.fx,
        z_forward: mean_depth,
    })
}

/// Euclidean distance in the BEV plane, meters.
pub fn spatial_cost(a: &BevPoint, b: &BevPoint) -> f64 {
    (a.x_lateral - b.x_lateral).hypot(a.z_forward - b.z_forward)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 640.0, 360.0, 1280.0, 720.0).unwrap()
    }

    #[test]
    fn principal_ray_is_straight_ahead() {
        let p = project_bev((640.0, 10.0), 7.5, &cam()).unwrap();
        assert_eq!(p, BevPoint { x_lateral: 0.0, z_forward: 7.5 });
    }

    #[test]
    fn unit_tangent_ray() {
        let wide = CameraIntrinsics::new(500.0, 500.0, 400.0, 300.0, 1000.0, 600.0).unwrap();
        let p = project_bev((900.0, 300.0), 10.0, &wide).unwrap();
        assert_eq!(p, BevPoint { x_lateral: 10.0, z_forward: 10.0 });
    }

    #[test]
    fn doubling_depth_doubles_coordinates() {
        let a = project_bev((100.0, 50.0), 4.0, &cam()).unwrap();
        let b = project_bev((100.0, 50.0), 8.0, &cam()).unwrap();
        assert_eq!(b.x_lateral, 2.0 * a.x_lateral);
        assert_eq!(b.z_forward, 2.0 * a.z_forward);
    }

    #[test]
    fn errors() {
        assert_eq!(
            project_bev((10.0, 10.0), 0.0, &cam()),
            Err(GeometryError::NonPositiveDepth(0.0))
        );
        assert!(matches!(
            project_bev((10.0, 10.0), f64::NAN, &cam()),
            Err(GeometryError::NonPositiveDepth(_))
        ));
        assert!(matches!(
            project_bev((-1.0, 10.0), 3.0, &cam()),
            Err(GeometryError::OutOfFrame { .. })
        ));
        assert!(matches!(
            project_bev((10.0, 721.0), 3.0, &cam()),
            Err(GeometryError::OutOfFrame { .. })
        ));
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn spatial_cost_examples() {
        let a = BevPoint { x_lateral: 0.0, z_forward: 10.0 };
        let b = BevPoint { x_lateral: 3.0, z_forward: 14.0 };
        assert_eq!(spatial_cost(&a, &a), 0.0);
        assert_eq!(spatial_cost(&a, &b), 5.0);
    }

    #[test]
    fn image_u_inverts_projection() {
        let c = cam();
        let p = project_bev((123.25, 40.0), 17.0, &c).unwrap();
        assert!((p.image_u(&c) - 123.25).abs() < 1e-9);
    }
}
