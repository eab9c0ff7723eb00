use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Pinhole camera with camera-to-world pose `[R|T]`. The camera looks down
/// its local −z axis with +y up; pixel centres sit at half-integer offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    focal: f64,
    width: usize,
    height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub pixel: (usize, usize),
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).abs().max() > ORTHONORMAL_TOLERANCE {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image size must be positive, got {width}×{height}")));
        }
        Ok(Self {
            rotation,
            translation,
            focal,
            width,
            height,
        })
    }

    pub fn identity(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::zeros(), focal, width, height)
    }

    /// Focal length giving a horizontal field of view of `fov_deg`.
    pub fn focal_for_fov(width: usize, fov_deg: f64) -> f64 {
        0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan()
    }

    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("camera eye coincides with its target"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("camera up vector is parallel to the view direction"))?;
        let true_up = right.cross(&forward);
        let rotation = Matrix3::from_columns(&[right, true_up, -forward]);
        Self::new(rotation, eye, focal, width, height)
    }

    /// Camera on a sphere around `target`; azimuth 0 and elevation 0 put the
    /// camera on the +z axis with identity rotation.
    pub fn orbit(
        azimuth_deg: f64,
        elevation_deg: f64,
        radius: f64,
        target: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let offset = Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * radius;
        Self::look_at(target + offset, target, Vector3::y(), focal, width, height)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn with_translation(&self, translation: Vector3<f64>) -> Self {
        Self {
            translation,
            ..self.clone()
        }
    }

    pub fn ray(&self, x: usize, y: usize) -> Result<Ray> {
        if x >= self.width || y >= self.height {
            return Err(Error::invalid(format!(
                "pixel ({x}, {y}) outside a {}×{} image",
                self.width, self.height
            )));
        }
        let local = Vector3::new(
            (x as f64 + 0.5 - 0.5 * self.width as f64) / self.focal,
            -(y as f64 + 0.5 - 0.5 * self.height as f64) / self.focal,
            -1.0,
        );
        let d = (self.rotation * local).normalize();
        let o = self.translation;
        Ok(Ray {
            origin: [o.x, o.y, o.z],
            direction: [d.x, d.y, d.z],
            pixel: (x, y),
        })
    }

    /// Pose interpolation: translation lerp, rotation slerp. Intrinsics come
    /// from `self`. `t = 0` and `t = 1` return the endpoints unchanged.
    pub fn interpolate(&self, other: &Camera, t: f64) -> Result<Camera> {
        if t == 0.0 {
            return Ok(self.clone());
        }
        if t == 1.0 {
            return Ok(Camera {
                focal: self.focal,
                width: self.width,
                height: self.height,
                ..other.clone()
            });
        }
        let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(other.rotation));
        let q = qa
            .try_slerp(&qb, t, 1e-12)
            .unwrap_or_else(|| if t < 0.5 { qa } else { qb });
        let rotation = *q.to_rotation_matrix().matrix();
        let translation = self.translation.lerp(&other.translation, t);
        Camera::new(rotation, translation, self.focal, self.width, self.height)
    }

    /// Row-major `[R|T]` as 12 numbers.
    pub fn pose_values(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_pose_values(pose: &[f64; 12], focal: f64, width: usize, height: usize) -> Result<Self> {
        let rotation = Matrix3::new(
            pose[0], pose[1], pose[2], pose[4], pose[5], pose[6], pose[8], pose[9], pose[10],
        );
        Self::new(rotation, Vector3::new(pose[3], pose[7], pose[11]), focal, width, height)
    }
}

/// One ray per pixel, through the pixel centre; all pixels in row-major
/// order when `pixels` is `None`.
pub fn generate_rays(camera: &Camera, pixels: Option<&[(usize, usize)]>) -> Result<Vec<Ray>> {
    match pixels {
        Some(list) => list.iter().map(|&(x, y)| camera.ray(x, y)).collect(),
        None => (0..camera.height)
            .flat_map(|y| (0..camera.width).map(move |x| (x, y)))
            .map(|(x, y)| camera.ray(x, y))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: [f64; 3]) -> f64 {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    #[test]
    fn centre_ray_follows_optical_axis() {
        let cam = Camera::identity(10.0, 5, 5).unwrap();
        let r = cam.ray(2, 2).unwrap();
        assert_eq!(r.origin, [0.0; 3]);
        assert_eq!(r.direction, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn translation_moves_origins_only() {
        let cam = Camera::orbit(30.0, 10.0, 2.0, Vector3::zeros(), 20.0, 8, 6).unwrap();
        let moved = cam.with_translation(cam.translation() + Vector3::new(0.5, -1.0, 2.0));
        let a = generate_rays(&cam, None).unwrap();
        let b = generate_rays(&moved, None).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.direction, rb.direction);
            assert!((rb.origin[0] - ra.origin[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn four_by_four_gives_sixteen_unit_rays() {
        let cam = Camera::orbit(-40.0, 25.0, 2.2, Vector3::zeros(), 4.0, 4, 4).unwrap();
        let rays = generate_rays(&cam, None).unwrap();
        assert_eq!(rays.len(), 16);
        assert!(rays.iter().all(|r| (norm(r.direction) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_out_of_bounds_pixel() {
        let cam = Camera::identity(4.0, 4, 4).unwrap();
        assert!(generate_rays(&cam, Some(&[(4, 0)])).is_err());
        assert!(generate_rays(&cam, Some(&[(3, 3)])).is_ok());
    }

    #[test]
    fn rejects_invalid_intrinsics_and_rotation() {
        assert!(Camera::identity(0.0, 4, 4).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(skew, Vector3::zeros(), 1.0, 4, 4).is_err());
    }

    #[test]
    fn orbit_at_origin_angles_is_identity_rotation() {
        let cam = Camera::orbit(0.0, 0.0, 3.0, Vector3::zeros(), 4.0, 4, 4).unwrap();
        assert!((cam.rotation() - Matrix3::identity()).abs().max() < 1e-15);
        assert!((cam.translation().z - 3.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_endpoints_and_orthonormality() {
        let a = Camera::orbit(-40.0, 20.0, 2.2, Vector3::zeros(), 50.0, 8, 8).unwrap();
        let b = Camera::orbit(40.0, 30.0, 2.0, Vector3::zeros(), 50.0, 8, 8).unwrap();
        assert_eq!(a.interpolate(&b, 0.0).unwrap(), a);
        assert_eq!(a.interpolate(&b, 1.0).unwrap(), b);
        let mid = a.interpolate(&b, 0.5).unwrap();
        let gram = mid.rotation().transpose() * mid.rotation();
        assert!((gram - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn pose_values_round_trip() {
        let a = Camera::orbit(12.0, 5.0, 2.0, Vector3::zeros(), 50.0, 8, 8).unwrap();
        let b = Camera::from_pose_values(&a.pose_values(), 50.0, 8, 8).unwrap();
        assert_eq!(a, b);
    }
}
