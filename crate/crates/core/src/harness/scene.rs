use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::field::FieldBatch;
use crate::renderer::{render_image, Camera, RadianceSource, RenderConfig};
use crate::trainer::ViewSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

/// A solid with constant colour and a density that falls smoothly to zero
/// over `falloff` just inside its surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: [f64; 3],
    pub rgb: [f64; 3],
    pub amplitude: f64,
    pub falloff: f64,
}

impl Primitive {
    fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let q = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        match self.shape {
            Shape::Sphere { radius } => (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() - radius,
            Shape::Box { half_extents: h } => {
                let d = [q[0].abs() - h[0], q[1].abs() - h[1], q[2].abs() - h[2]];
                let outside = d.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = d[0].max(d[1]).max(d[2]).min(0.0);
                outside + inside
            }
        }
    }

    fn extent(&self) -> [f64; 3] {
        match self.shape {
            Shape::Sphere { radius } => [radius; 3],
            Shape::Box { half_extents } => half_extents,
        }
    }

    pub fn density(&self, p: [f64; 3]) -> f64 {
        let d = self.signed_distance(p);
        if d >= 0.0 {
            return 0.0;
        }
        if d <= -self.falloff {
            return self.amplitude;
        }
        // smoothstep from the surface (0) to full density (1)
        let t = -d / self.falloff;
        self.amplitude * t * t * (3.0 - 2.0 * t)
    }

    fn validate(&self) -> Result<()> {
        let e = self.extent();
        if e.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid(format!("primitive size must be positive: {:?}", self.shape)));
        }
        for axis in 0..3 {
            if self.center[axis] - e[axis] < -1.0 || self.center[axis] + e[axis] > 1.0 {
                return Err(Error::invalid(format!("primitive at {:?} leaves the [-1, 1]^3 volume", self.center)));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid(format!("density amplitude must be non-negative, got {}", self.amplitude)));
        }
        if !(self.falloff > 0.0) || self.falloff > e.iter().cloned().fold(f64::INFINITY, f64::min) {
            return Err(Error::invalid(format!("falloff {} must be positive and within the primitive", self.falloff)));
        }
        if self.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("colour {:?} outside [0, 1]", self.rgb)));
        }
        Ok(())
    }
}

/// Orbit cameras looking at the origin: training views spread over
/// `[−arc, arc]` degrees of azimuth, held-out views in between.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub radius: f64,
    pub elevation_deg: f64,
    pub arc_deg: f64,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            radius: 2.2,
            elevation_deg: 25.0,
            arc_deg: 40.0,
            fov_deg: 45.0,
            width: 64,
            height: 64,
        }
    }
}

impl CameraRig {
    pub fn focal(&self) -> f64 {
        Camera::focal_for_fov(self.width, self.fov_deg)
    }

    pub fn camera(&self, azimuth_deg: f64) -> Result<Camera> {
        Camera::orbit(
            azimuth_deg,
            self.elevation_deg,
            self.radius,
            Vector3::zeros(),
            self.focal(),
            self.width,
            self.height,
        )
    }

    pub fn train_azimuths(&self, count: usize) -> Vec<f64> {
        spread(-self.arc_deg, self.arc_deg, count)
    }

    /// Evenly inside the arc, away from its ends: ±arc/2 for two views.
    pub fn heldout_azimuths(&self, count: usize) -> Vec<f64> {
        spread(-self.arc_deg / 2.0, self.arc_deg / 2.0, count)
    }
}

fn spread(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![(lo + hi) / 2.0],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    pub background: [f64; 3],
    pub rig: CameraRig,
}

impl SyntheticScene {
    /// Two overlapping spheres behind a thin bar that occludes part of them.
    pub fn default_scene() -> Self {
        let falloff = 0.05;
        Self {
            primitives: vec![
                Primitive {
                    shape: Shape::Sphere { radius: 0.42 },
                    center: [-0.22, 0.0, -0.05],
                    rgb: [0.9, 0.25, 0.2],
                    amplitude: 30.0,
                    falloff,
                },
                Primitive {
                    shape: Shape::Sphere { radius: 0.36 },
                    center: [0.28, 0.06, -0.15],
                    rgb: [0.2, 0.45, 0.9],
                    amplitude: 30.0,
                    falloff,
                },
                Primitive {
                    shape: Shape::Box {
                        half_extents: [0.62, 0.06, 0.06],
                    },
                    center: [0.0, -0.12, 0.5],
                    rgb: [0.9, 0.85, 0.3],
                    amplitude: 30.0,
                    falloff,
                },
            ],
            background: [0.0; 3],
            rig: CameraRig::default(),
        }
    }

    pub fn empty() -> Self {
        Self {
            primitives: vec![],
            background: [0.0; 3],
            rig: CameraRig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::validate)?;
        if self.rig.width == 0 || self.rig.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if !(self.rig.radius > 0.0) {
            return Err(Error::invalid("rig radius must be positive"));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<AnalyticField> {
        self.validate()?;
        Ok(AnalyticField {
            primitives: self.primitives.clone(),
        })
    }
}

/// Closed-form density and colour of a [`SyntheticScene`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticField {
    primitives: Vec<Primitive>,
}

impl AnalyticField {
    pub fn density(&self, p: [f64; 3]) -> f64 {
        self.primitives.iter().map(|q| q.density(p)).sum()
    }

    /// Density-weighted mix of the primitive colours; black where empty.
    pub fn color(&self, p: [f64; 3]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for q in &self.primitives {
            let s = q.density(p);
            total += s;
            for c in 0..3 {
                acc[c] += s * q.rgb[c];
            }
        }
        if total > 0.0 {
            acc.map(|v| v / total)
        } else {
            acc
        }
    }
}

impl RadianceSource for AnalyticField {
    fn query(&self, batch: &FieldBatch) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        Ok((
            batch.positions.iter().map(|p| self.density(*p)).collect(),
            batch.positions.iter().map(|p| self.color(*p)).collect(),
        ))
    }
}

/// Sample count of the oracle renders.
pub const ORACLE_SAMPLES: usize = 256;

/// A scene with oracle renders of its training and held-out views.
#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SyntheticScene,
    pub field: AnalyticField,
    pub train: ViewSet,
    pub heldout: ViewSet,
    pub oracle: RenderConfig,
}

impl Scene {
    pub fn render_oracle(&self, camera: &Camera) -> Result<crate::image::ImageBuffer> {
        Ok(render_image(&self.field, camera, &self.oracle, None)?.image)
    }
}

pub fn make_scene(spec: &SyntheticScene, train_views: usize, heldout_views: usize, near: f64, far: f64) -> Result<Scene> {
    let field = spec.field()?;
    let oracle = RenderConfig {
        near,
        far,
        samples: ORACLE_SAMPLES,
        jitter: false,
        background: spec.background,
        ..RenderConfig::default()
    };
    oracle.validate()?;
    let views = |azimuths: Vec<f64>| -> Result<ViewSet> {
        let mut set = ViewSet::default();
        for az in azimuths {
            let cam = spec.rig.camera(az)?;
            set.images.push(render_image(&field, &cam, &oracle, None)?.image);
            set.cameras.push(cam);
        }
        Ok(set)
    };
    Ok(Scene {
        train: views(spec.rig.train_azimuths(train_views))?,
        heldout: views(spec.rig.heldout_azimuths(heldout_views))?,
        spec: spec.clone(),
        field,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::psnr;
    use crate::image::ImageBuffer;

    #[test]
    fn center_and_far_points() {
        let scene = SyntheticScene::default_scene();
        let f = scene.field().unwrap();
        let s = &scene.primitives[0];
        // first sphere's centre lies outside the others
        assert_eq!(f.density(s.center), s.amplitude);
        assert_eq!(f.color(s.center), s.rgb);
        assert_eq!(f.density([0.95, 0.95, 0.95]), 0.0);
        assert_eq!(f.density([5.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn falloff_is_monotone_and_continuous() {
        let p = Primitive {
            shape: Shape::Sphere { radius: 0.5 },
            center: [0.0; 3],
            rgb: [1.0; 3],
            amplitude: 10.0,
            falloff: 0.1,
        };
        let mut prev = p.density([0.0; 3]);
        for i in 0..=200 {
            let r = 0.35 + 0.2 * i as f64 / 200.0;
            let d = p.density([r, 0.0, 0.0]);
            assert!(d <= prev);
            assert!(prev - d < 0.5);
            prev = d;
        }
        assert_eq!(p.density([0.5, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn box_distance() {
        let b = Primitive {
            shape: Shape::Box {
                half_extents: [0.5, 0.2, 0.1],
            },
            center: [0.0; 3],
            rgb: [0.5; 3],
            amplitude: 4.0,
            falloff: 0.05,
        };
        assert_eq!(b.density([0.0; 3]), 4.0);
        assert_eq!(b.density([0.4, 0.1, 0.0]), 4.0);
        assert_eq!(b.density([0.0, 0.0, 0.11]), 0.0);
        assert!(b.density([0.0, 0.0, 0.075]) > 0.0);
    }

    #[test]
    fn rejects_primitives_outside_volume() {
        let mut scene = SyntheticScene::default_scene();
        scene.primitives[0].center = [0.8, 0.0, 0.0];
        assert!(scene.field().is_err());
        let mut scene = SyntheticScene::default_scene();
        scene.primitives[1].amplitude = -1.0;
        assert!(scene.field().is_err());
    }

    /// Midpoint-rule quadrature of the rendering integral, written without
    /// the renderer's sampling or compositing code.
    fn quadrature(field: &AnalyticField, camera: &Camera, near: f64, far: f64, steps: usize) -> ImageBuffer {
        let h = (far - near) / steps as f64;
        let mut px = Vec::new();
        for y in 0..camera.height() {
            for x in 0..camera.width() {
                let ray = camera.ray(x, y).unwrap();
                let (mut t_acc, mut rgb) = (1.0f64, [0.0; 3]);
                for i in 0..steps {
                    let t = near + (i as f64 + 0.5) * h;
                    let p = [0, 1, 2].map(|k| ray.origin[k] + t * ray.direction[k]);
                    let a = 1.0 - (-field.density(p) * h).exp();
                    let c = field.color(p);
                    for k in 0..3 {
                        rgb[k] += t_acc * a * c[k];
                    }
                    t_acc *= 1.0 - a;
                }
                px.push(rgb);
            }
        }
        ImageBuffer::new(camera.width(), camera.height(), px).unwrap()
    }

    #[test]
    fn oracle_matches_independent_quadrature() {
        let mut spec = SyntheticScene::default_scene();
        spec.rig.width = 20;
        spec.rig.height = 20;
        let scene = make_scene(&spec, 1, 0, 0.5, 3.5).unwrap();
        let cam = &scene.train.cameras[0];
        let reference = quadrature(&scene.field, cam, 0.5, 3.5, 10_000);
        let n256 = psnr(&scene.train.images[0], &reference).unwrap();
        let fine = RenderConfig {
            samples: 512,
            ..scene.oracle.clone()
        };
        let n512 = psnr(&render_image(&scene.field, cam, &fine, None).unwrap().image, &reference).unwrap();
        eprintln!("N=256: {n256} dB, N=512: {n512} dB");
        assert!(n256 > 45.0);
        assert!(n512 >= n256 - 0.3);
    }

    #[test]
    fn rig_layout() {
        let rig = CameraRig::default();
        assert_eq!(rig.train_azimuths(3), vec![-40.0, 0.0, 40.0]);
        assert_eq!(rig.heldout_azimuths(2), vec![-20.0, 20.0]);
        assert_eq!(rig.train_azimuths(1), vec![0.0]);
    }
}
