use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::profile::{MaterialProfile, ThetaMode};
use crate::error::{Error, Result};
use crate::plane::{Plane, Rect};
use crate::polar::{Angle, AngleImages};
use crate::seed;

/// Total intensity outside the face ellipse.
pub const BACKGROUND_ALBEDO: f64 = 0.05;

/// Width of the soft ellipse boundary, in pixels.
const MASK_EDGE_PX: f64 = 6.0;

/// Ground-truth linear polarization state per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationField {
    /// Total intensity in `[0, 1]`.
    pub s0: Plane,
    /// Degree of linear polarization in `[0, 1]`.
    pub rho: Plane,
    /// Angle of linear polarization, degrees in `[0, 180)`.
    pub theta: Plane,
}

impl PolarizationField {
    pub fn new(s0: Plane, rho: Plane, theta: Plane) -> Result<Self> {
        if s0.dims() != rho.dims() || s0.dims() != theta.dims() {
            return Err(Error::Dimension("field planes disagree in size".into()));
        }
        let in_range = |p: &Plane, lo: f64, hi: f64, hi_open: bool| {
            p.data()
                .iter()
                .all(|&v| v >= lo && if hi_open { v < hi } else { v <= hi })
        };
        if !in_range(&s0, 0.0, 1.0, false)
            || !in_range(&rho, 0.0, 1.0, false)
            || !in_range(&theta, 0.0, 180.0, true)
        {
            return Err(Error::Parameter("field values out of range".into()));
        }
        Ok(Self { s0, rho, theta })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.s0.dims()
    }
}

/// Geometry of the synthetic face: an axis-aligned ellipse centred in the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceEllipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl FaceEllipse {
    pub fn for_frame(width: usize, height: usize) -> Self {
        Self {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            rx: 0.36 * width as f64,
            ry: 0.44 * height as f64,
        }
    }

    /// Soft membership in `[0, 1]`: 1 inside, ramping to 0 at the ellipse boundary.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        let dx = (x as f64 - self.cx) / self.rx;
        let dy = (y as f64 - self.cy) / self.ry;
        let r = (dx * dx + dy * dy).sqrt();
        let band = MASK_EDGE_PX / self.rx.min(self.ry);
        let t = ((1.0 - r) / band).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// Bounding box of the ellipse, clipped to the frame.
    pub fn bounding_box(&self, width: usize, height: usize) -> Rect {
        let x0 = (self.cx - self.rx).floor().max(0.0) as usize;
        let y0 = (self.cy - self.ry).floor().max(0.0) as usize;
        let x1 = ((self.cx + self.rx).ceil() as usize + 1).min(width);
        let y1 = ((self.cy + self.ry).ceil() as usize + 1).min(height);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn mask(&self, width: usize, height: usize) -> Plane {
        Plane::from_fn(width, height, |x, y| self.weight(x, y))
    }
}

/// Value noise: a lattice of seeded samples every `scale` pixels, bilinearly
/// interpolated. `sample` draws one lattice value.
pub fn value_noise<R: Rng>(
    width: usize,
    height: usize,
    scale: f64,
    rng: &mut R,
    mut sample: impl FnMut(&mut R) -> f64,
) -> Plane {
    let nx = (width as f64 / scale).ceil() as usize + 2;
    let ny = (height as f64 / scale).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..nx * ny).map(|_| sample(rng)).collect();
    Plane::from_fn(width, height, |x, y| {
        let fx = x as f64 / scale;
        let fy = y as f64 / scale;
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let at = |i: usize, j: usize| lattice[j * nx + i];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bot * ty
    })
}

const STREAM_ALBEDO: u64 = 1;
const STREAM_RHO: u64 = 2;
const STREAM_THETA: u64 = 3;
const STREAM_NOISE: u64 = 4;

/// Synthesizes the ground-truth polarization field of one sample.
pub fn make_field(
    profile: &MaterialProfile,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<PolarizationField> {
    if width < 8 || height < 8 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "field dimensions must be even and at least 8, got {width}x{height}"
        )));
    }
    profile.validate()?;
    let scale = profile.texture_scale;

    let (lo, hi) = profile.albedo_range;
    let mut rng = seed::rng(seed::derive(seed, STREAM_ALBEDO));
    let albedo = value_noise(width, height, scale, &mut rng, |r| r.random::<f64>());
    let face = FaceEllipse::for_frame(width, height);
    let s0 = Plane::from_fn(width, height, |x, y| {
        let a = lo + (hi - lo) * albedo.get(x, y);
        let m = face.weight(x, y);
        (m * a + (1.0 - m) * BACKGROUND_ALBEDO).clamp(0.0, 1.0)
    });

    let mut rng = seed::rng(seed::derive(seed, STREAM_RHO));
    let rho = if profile.rho_spread == 0.0 {
        Plane::filled(width, height, profile.rho_mean)
    } else {
        let n = value_noise(width, height, scale, &mut rng, |r| StandardNormal.sample(r));
        n.map(|v| (profile.rho_mean + profile.rho_spread * v).clamp(0.0, 1.0))
    };

    let angle = match profile.theta_mode {
        ThetaMode::Fixed(t) => t.rem_euclid(180.0),
        ThetaMode::UniformRandom => {
            let mut rng = seed::rng(seed::derive(seed, STREAM_THETA));
            rng.random_range(0.0..180.0)
        }
    };
    // rem_euclid can round up to exactly 180 for tiny negative inputs
    let angle = if angle >= 180.0 { 0.0 } else { angle };
    let theta = Plane::filled(width, height, angle);

    PolarizationField::new(s0, rho, theta)
}

/// Malus intensity `I(α) = ½·S0·(1 + ρ·cos 2(α − θ))`.
#[inline]
pub fn malus(s0: f64, rho: f64, theta_deg: f64, alpha_deg: f64) -> f64 {
    0.5 * s0 * (1.0 + rho * (2.0 * (alpha_deg - theta_deg).to_radians()).cos())
}

/// Renders the four polarizer images of a field.
///
/// Sensor noise is zero-mean Gaussian with standard deviation `noise_sigma`,
/// truncated to `[-noise_sigma, noise_sigma]`, and the noisy intensities are
/// clipped to `[0, 1]`. With truncation the rendered Stokes vector satisfies
/// `sqrt(Q² + U²) ≤ S0 + 4·noise_sigma` at every pixel.
pub fn render_angle_images(
    field: &PolarizationField,
    noise_sigma: f64,
    seed: u64,
) -> Result<AngleImages> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise_sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let (w, h) = field.dims();
    let mut rng = seed::rng(seed::derive(seed, STREAM_NOISE));
    let mut plane = |alpha: f64| {
        Plane::from_fn(w, h, |x, y| {
            let clean = malus(
                field.s0.get(x, y),
                field.rho.get(x, y),
                field.theta.get(x, y),
                alpha,
            );
            let noise = if noise_sigma > 0.0 {
                truncated_normal(&mut rng) * noise_sigma
            } else {
                0.0
            };
            (clean + noise).clamp(0.0, 1.0)
        })
    };
    let i0 = plane(Angle::Deg0.degrees());
    let i45 = plane(Angle::Deg45.degrees());
    let i90 = plane(Angle::Deg90.degrees());
    let i135 = plane(Angle::Deg135.degrees());
    AngleImages::new(i0, i45, i90, i135)
}

/// Standard normal conditioned on `[-1, 1]`, by rejection.
fn truncated_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 1.0 {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{
        demosaic, dolp, mosaic_from_angles, stokes, DemosaicMethod, DolpMode, MosaicPattern,
        DEFAULT_EPS,
    };
    use crate::synth::Label;

    fn profile(rho_mean: f64, rho_spread: f64) -> MaterialProfile {
        MaterialProfile {
            name: "test".into(),
            label: Label::Genuine,
            rho_mean,
            rho_spread,
            theta_mode: ThetaMode::UniformRandom,
            albedo_range: (0.3, 0.7),
            texture_scale: 8.0,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn degenerate_profile_gives_constant_planes() {
        let mut p = profile(0.3, 0.0);
        p.albedo_range = (0.5, 0.5);
        p.theta_mode = ThetaMode::Fixed(0.0);
        let f = make_field(&p, 32, 32, 9).unwrap();
        assert!(f.rho.data().iter().all(|&v| v == 0.3));
        assert!(f.theta.data().iter().all(|&v| v == 0.0));
        let face = FaceEllipse::for_frame(32, 32);
        for y in 0..32 {
            for x in 0..32 {
                if face.weight(x, y) == 1.0 {
                    assert!((f.s0.get(x, y) - 0.5).abs() < 1e-15);
                }
            }
        }
        assert_eq!(f.s0.get(0, 0), BACKGROUND_ALBEDO);
    }

    #[test]
    fn fields_are_deterministic() {
        let p = profile(0.4, 0.05);
        assert_eq!(
            make_field(&p, 16, 24, 5).unwrap(),
            make_field(&p, 16, 24, 5).unwrap()
        );
        assert_ne!(
            make_field(&p, 16, 24, 5).unwrap(),
            make_field(&p, 16, 24, 6).unwrap()
        );
    }

    #[test]
    fn rho_mean_over_mask_matches_profile() {
        let p = profile(0.4, 0.05);
        for seed in 0..4 {
            let f = make_field(&p, 64, 64, seed).unwrap();
            let face = FaceEllipse::for_frame(64, 64);
            let (mut sum, mut n) = (0.0, 0usize);
            for y in 0..64 {
                for x in 0..64 {
                    if face.weight(x, y) > 0.5 {
                        sum += f.rho.get(x, y);
                        n += 1;
                    }
                }
            }
            assert!((sum / n as f64 - 0.4).abs() <= 0.02, "seed {seed}");
        }
    }

    #[test]
    fn make_field_rejects_bad_dims() {
        let p = profile(0.4, 0.05);
        assert!(matches!(make_field(&p, 6, 8, 0), Err(Error::Dimension(_))));
        assert!(make_field(&p, 9, 8, 0).is_err());
    }

    fn constant_field(s0: f64, rho: f64, theta: f64) -> PolarizationField {
        PolarizationField::new(
            Plane::filled(4, 4, s0),
            Plane::filled(4, 4, rho),
            Plane::filled(4, 4, theta),
        )
        .unwrap()
    }

    #[test]
    fn render_spot_values() {
        let a = render_angle_images(&constant_field(0.6, 0.0, 17.0), 0.0, 0).unwrap();
        for ang in Angle::ALL {
            assert!(a.get(ang).data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
        let a = render_angle_images(&constant_field(1.0, 1.0, 0.0), 0.0, 0).unwrap();
        assert!((a.i0.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(a.i90.get(0, 0).abs() < 1e-15);
        assert!((a.i45.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((a.i135.get(0, 0) - 0.5).abs() < 1e-15);

        let a = render_angle_images(&constant_field(1.0, 0.5, 30.0), 0.0, 0).unwrap();
        let expect = [0.625, 0.71650635, 0.375, 0.28349365];
        for (ang, e) in Angle::ALL.iter().zip(expect) {
            assert!((a.get(*ang).get(2, 2) - e).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_free_render_recovers_rho() {
        let mut p = profile(0.35, 0.1);
        p.texture_scale = 5.0;
        let f = make_field(&p, 32, 32, 3).unwrap();
        let a = render_angle_images(&f, 0.0, 3).unwrap();
        let d = dolp(&stokes(&a), DolpMode::Normalized, DEFAULT_EPS).unwrap();
        for (got, want) in d.values.data().iter().zip(f.rho.data()) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn physicality_holds_under_noise() {
        let sigma = 0.02;
        let mut p = profile(0.95, 0.1);
        p.albedo_range = (0.0, 1.0);
        p.texture_scale = 3.0;
        for seed in 0..5 {
            let f = make_field(&p, 32, 32, seed).unwrap();
            let a = render_angle_images(&f, sigma, seed).unwrap();
            let s = stokes(&a);
            for i in 0..32 * 32 {
                let pol = (s.q.data()[i].powi(2) + s.u.data()[i].powi(2)).sqrt();
                assert!(pol <= s.s0.data()[i] + 4.0 * sigma + 1e-12);
            }
        }
    }

    #[test]
    fn demosaicked_dolp_error_is_small_on_smooth_fields() {
        let mut p = profile(0.3, 0.08);
        p.texture_scale = 8.0;
        let f = make_field(&p, 64, 64, 21).unwrap();
        let a = render_angle_images(&f, 0.0, 21).unwrap();
        let m = mosaic_from_angles(&a, MosaicPattern::default()).unwrap();
        let d = dolp(
            &stokes(&demosaic(&m, DemosaicMethod::Bilinear)),
            DolpMode::Normalized,
            DEFAULT_EPS,
        )
        .unwrap();
        let mae: f64 = d
            .values
            .data()
            .iter()
            .zip(f.rho.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (64.0 * 64.0);
        assert!(mae <= 0.02, "mae {mae}");
    }

    #[test]
    fn bounding_box_covers_ellipse() {
        let face = FaceEllipse::for_frame(64, 48);
        let r = face.bounding_box(64, 48);
        r.check_inside(64, 48).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                if face.weight(x, y) > 0.0 {
                    assert!(x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height);
                }
            }
        }
    }
}
