//! Polarization filter array geometry, demosaicing, Stokes parameters and
//! degree-of-linear-polarization maps.
//!
//! A PFA sensor places one of four micro-polarizers (0, 45, 90 and 135
//! degrees) over every photodiode, tiled in a 2x2 superpixel. The raw frame
//! is therefore a single plane in which each angle is sampled on a quarter
//! resolution lattice. Demosaicing recovers four full-resolution planes, from
//! which the linear Stokes components follow as
//!
//! ```text
//! S0 = I0 + I90    Q = I0 - I90    U = I135 - I45
//! ```
//!
//! All intensities are real values in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Default guard against division by near-zero total intensity.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Polarizer orientation of a PFA pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Angle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::Deg0, Angle::Deg45, Angle::Deg90, Angle::Deg135];

    pub fn degrees(self) -> f64 {
        match self {
            Angle::Deg0 => 0.0,
            Angle::Deg45 => 45.0,
            Angle::Deg90 => 90.0,
            Angle::Deg135 => 135.0,
        }
    }

    pub fn from_degrees(deg: u32) -> Option<Angle> {
        match deg {
            0 => Some(Angle::Deg0),
            45 => Some(Angle::Deg45),
            90 => Some(Angle::Deg90),
            135 => Some(Angle::Deg135),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            Angle::Deg0 => 0,
            Angle::Deg45 => 1,
            Angle::Deg90 => 2,
            Angle::Deg135 => 3,
        }
    }
}

/// Assignment of polarizer angles to the 2x2 superpixel, indexed `[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MosaicPattern {
    cells: [[Angle; 2]; 2],
}

impl Default for MosaicPattern {
    /// `[[0, 45], [90, 135]]`.
    fn default() -> Self {
        Self {
            cells: [[Angle::Deg0, Angle::Deg45], [Angle::Deg90, Angle::Deg135]],
        }
    }
}

impl MosaicPattern {
    /// Builds a pattern, rejecting any assignment that is not a bijection onto
    /// the four angles.
    pub fn new(cells: [[Angle; 2]; 2]) -> Result<Self> {
        let mut seen = [false; 4];
        for a in cells.iter().flatten() {
            seen[a.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parameter(format!(
                "mosaic pattern must use each angle exactly once, got {cells:?}"
            )));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> [[Angle; 2]; 2] {
        self.cells
    }

    /// Angle sampled at pixel `(x, y)`.
    #[inline]
    pub fn angle_at(&self, x: usize, y: usize) -> Angle {
        self.cells[y % 2][x % 2]
    }

    /// Offset `(col, row)` of `angle` inside the superpixel.
    pub fn offset_of(&self, angle: Angle) -> (usize, usize) {
        for (r, row) in self.cells.iter().enumerate() {
            for (c, &a) in row.iter().enumerate() {
                if a == angle {
                    return (c, r);
                }
            }
        }
        unreachable!("pattern is a bijection")
    }
}

impl fmt::Display for MosaicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cells;
        write!(
            f,
            "{},{};{},{}",
            c[0][0].degrees(),
            c[0][1].degrees(),
            c[1][0].degrees(),
            c[1][1].degrees()
        )
    }
}

impl FromStr for MosaicPattern {
    type Err = Error;

    /// Parses `"0,45;90,135"` (rows separated by `;`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse mosaic pattern {s:?}"));
        let rows: Vec<&str> = s.split(';').collect();
        if rows.len() != 2 {
            return Err(bad());
        }
        let mut cells = [[Angle::Deg0; 2]; 2];
        for (r, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 2 {
                return Err(bad());
            }
            for (c, tok) in cols.iter().enumerate() {
                let deg: u32 = tok.trim().parse().map_err(|_| bad())?;
                cells[r][c] = Angle::from_degrees(deg).ok_or_else(bad)?;
            }
        }
        MosaicPattern::new(cells)
    }
}

/// Raw single-plane PFA frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicFrame {
    plane: Plane,
    pattern: MosaicPattern,
}

fn check_even(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "mosaic dimensions must be even and at least 2, got {width}x{height}"
        )));
    }
    Ok(())
}

impl MosaicFrame {
    pub fn new(plane: Plane, pattern: MosaicPattern) -> Result<Self> {
        check_even(plane.width(), plane.height())?;
        if let Some(v) = plane
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::Parameter(format!(
                "mosaic values must be finite and in [0, 1], found {v}"
            )));
        }
        Ok(Self { plane, pattern })
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn pattern(&self) -> MosaicPattern {
        self.pattern
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }
}

/// Four co-registered intensity planes behind the 0/45/90/135 polarizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleImages {
    pub i0: Plane,
    pub i45: Plane,
    pub i90: Plane,
    pub i135: Plane,
}

impl AngleImages {
    pub fn new(i0: Plane, i45: Plane, i90: Plane, i135: Plane) -> Result<Self> {
        let dims = i0.dims();
        for p in [&i45, &i90, &i135] {
            if p.dims() != dims {
                return Err(Error::Dimension(format!(
                    "angle planes disagree in size: {:?} vs {:?}",
                    dims,
                    p.dims()
                )));
            }
        }
        for p in [&i0, &i45, &i90, &i135] {
            if let Some(v) = p.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Parameter(format!(
                    "angle intensities must be finite and nonnegative, found {v}"
                )));
            }
        }
        Ok(Self { i0, i45, i90, i135 })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i0.dims()
    }

    pub fn get(&self, angle: Angle) -> &Plane {
        match angle {
            Angle::Deg0 => &self.i0,
            Angle::Deg45 => &self.i45,
            Angle::Deg90 => &self.i90,
            Angle::Deg135 => &self.i135,
        }
    }
}

/// Linear Stokes components; the circular component is not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    pub s0: Plane,
    pub q: Plane,
    pub u: Plane,
}

impl StokesImage {
    pub fn new(s0: Plane, q: Plane, u: Plane) -> Result<Self> {
        if s0.dims() != q.dims() || s0.dims() != u.dims() {
            return Err(Error::Dimension("stokes planes disagree in size".into()));
        }
        Ok(Self { s0, q, u })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.s0.dims()
    }
}

/// Which DOLP formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DolpMode {
    /// `sqrt(Q^2 + U^2) / S0`, bounded in `[0, 1]` for physical light.
    #[default]
    Normalized,
    /// `sqrt((Q^2 + U^2) / S0)`, with S0 under the root.
    PaperLiteral,
}

impl FromStr for DolpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(DolpMode::Normalized),
            "paper" | "paper-literal" => Ok(DolpMode::PaperLiteral),
            _ => Err(Error::Parameter(format!("unknown DOLP mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DolpImage {
    pub values: Plane,
    pub mode: DolpMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DemosaicMethod {
    /// Replicate the native sample of the enclosing superpixel.
    Nearest,
    /// Separable linear interpolation between the nearest native samples.
    #[default]
    Bilinear,
}

impl FromStr for DemosaicMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(DemosaicMethod::Nearest),
            "bilinear" => Ok(DemosaicMethod::Bilinear),
            _ => Err(Error::Parameter(format!("unknown demosaic method {s:?}"))),
        }
    }
}

/// Samples each angle plane at its own lattice sites to form a raw frame.
pub fn mosaic_from_angles(angles: &AngleImages, pattern: MosaicPattern) -> Result<MosaicFrame> {
    let (w, h) = angles.dims();
    check_even(w, h)?;
    let plane = Plane::from_fn(w, h, |x, y| angles.get(pattern.angle_at(x, y)).get(x, y));
    MosaicFrame::new(plane, pattern)
}

/// Native lattice coordinates contributing to position `p` along one axis.
///
/// `offset` is the parity of the native sites. A native position maps to
/// itself; other positions use the two neighbors, or the single one that
/// exists at a border.
#[inline]
fn axis_support(p: usize, offset: usize, len: usize) -> ([usize; 2], usize) {
    if p % 2 == offset {
        ([p, p], 1)
    } else if p == 0 {
        ([1, 1], 1)
    } else if p + 1 >= len {
        ([p - 1, p - 1], 1)
    } else {
        ([p - 1, p + 1], 2)
    }
}

fn demosaic_plane(frame: &MosaicFrame, angle: Angle, method: DemosaicMethod) -> Plane {
    let raw = frame.plane();
    let (w, h) = raw.dims();
    let (ox, oy) = frame.pattern().offset_of(angle);
    match method {
        DemosaicMethod::Nearest => {
            Plane::from_fn(w, h, |x, y| raw.get((x / 2) * 2 + ox, (y / 2) * 2 + oy))
        }
        DemosaicMethod::Bilinear => Plane::from_fn(w, h, |x, y| {
            let (xs, nx) = axis_support(x, ox, w);
            let (ys, ny) = axis_support(y, oy, h);
            let mut acc = 0.0;
            for &sy in &ys[..ny] {
                for &sx in &xs[..nx] {
                    acc += raw.get(sx, sy);
                }
            }
            acc / (nx * ny) as f64
        }),
    }
}

/// Interpolates the four full-resolution angle planes from a raw frame.
pub fn demosaic(frame: &MosaicFrame, method: DemosaicMethod) -> AngleImages {
    AngleImages {
        i0: demosaic_plane(frame, Angle::Deg0, method),
        i45: demosaic_plane(frame, Angle::Deg45, method),
        i90: demosaic_plane(frame, Angle::Deg90, method),
        i135: demosaic_plane(frame, Angle::Deg135, method),
    }
}

pub fn stokes(angles: &AngleImages) -> StokesImage {
    let zip = |a: &Plane, b: &Plane, f: fn(f64, f64) -> f64| {
        a.zip_map(b, f).expect("angle planes share dimensions")
    };
    StokesImage {
        s0: zip(&angles.i0, &angles.i90, |a, b| a + b),
        q: zip(&angles.i0, &angles.i90, |a, b| a - b),
        u: zip(&angles.i135, &angles.i45, |a, b| a - b),
    }
}

/// Per-pixel degree of linear polarization. Pixels darker than `eps` are 0.
pub fn dolp(st: &StokesImage, mode: DolpMode, eps: f64) -> Result<DolpImage> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let (w, h) = st.dims();
    let values = Plane::from_fn(w, h, |x, y| {
        let s0 = st.s0.get(x, y);
        if s0 < eps {
            return 0.0;
        }
        let q = st.q.get(x, y);
        let u = st.u.get(x, y);
        let pol = q * q + u * u;
        match mode {
            DolpMode::Normalized => pol.sqrt() / s0.max(eps),
            DolpMode::PaperLiteral => (pol / s0.max(eps)).sqrt(),
        }
    });
    Ok(DolpImage { values, mode })
}

/// Demosaic, Stokes and DOLP in one pass.
pub fn dolp_from_mosaic(
    frame: &MosaicFrame,
    method: DemosaicMethod,
    mode: DolpMode,
    eps: f64,
) -> Result<(AngleImages, DolpImage)> {
    let angles = demosaic(frame, method);
    let d = dolp(&stokes(&angles), mode, eps)?;
    Ok((angles, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_angles(w: usize, h: usize, v: [f64; 4]) -> AngleImages {
        AngleImages::new(
            Plane::filled(w, h, v[0]),
            Plane::filled(w, h, v[1]),
            Plane::filled(w, h, v[2]),
            Plane::filled(w, h, v[3]),
        )
        .unwrap()
    }

    fn random_angles(w: usize, h: usize, seed: u64) -> AngleImages {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = || Plane::from_fn(w, h, |_, _| rng.random::<f64>());
        let (a, b, c, d) = (p(), p(), p(), p());
        AngleImages::new(a, b, c, d).unwrap()
    }

    /// Malus intensity behind a polarizer at `alpha` degrees.
    fn malus(s0: f64, rho: f64, theta_deg: f64, alpha_deg: f64) -> f64 {
        0.5 * s0 * (1.0 + rho * (2.0 * (alpha_deg - theta_deg).to_radians()).cos())
    }

    #[test]
    fn pattern_parse_and_display() {
        let p: MosaicPattern = "0,45;90,135".parse().unwrap();
        assert_eq!(p, MosaicPattern::default());
        assert_eq!(p.to_string(), "0,45;90,135");
        let q: MosaicPattern = "90,45;0,135".parse().unwrap();
        assert_eq!(q.angle_at(0, 0), Angle::Deg90);
        assert_eq!(q.offset_of(Angle::Deg0), (0, 1));
        assert!("0,45;90,90".parse::<MosaicPattern>().is_err());
        assert!("0,45,90,135".parse::<MosaicPattern>().is_err());
        assert!("0,30;90,135".parse::<MosaicPattern>().is_err());
    }

    #[test]
    fn mosaic_rejects_odd_dimensions() {
        let a = constant_angles(3, 4, [0.5; 4]);
        assert!(matches!(
            mosaic_from_angles(&a, MosaicPattern::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mosaic_frame_rejects_out_of_range() {
        let p = Plane::filled(2, 2, 1.5);
        assert!(MosaicFrame::new(p, MosaicPattern::default()).is_err());
    }

    #[test]
    fn mosaic_of_constant_planes_is_constant() {
        let a = constant_angles(6, 4, [0.5; 4]);
        let m = mosaic_from_angles(&a, MosaicPattern::default()).unwrap();
        assert!(m.plane().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mosaic_superpixels_follow_pattern() {
        let a = constant_angles(4, 4, [0.1, 0.2, 0.3, 0.4]);
        let m = mosaic_from_angles(&a, MosaicPattern::default()).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = [[0.1, 0.2], [0.3, 0.4]][y % 2][x % 2];
                assert_eq!(m.plane().get(x, y), expect);
            }
        }
    }

    #[test]
    fn round_trip_at_native_sites_random_8x8() {
        let a = random_angles(8, 8, 11);
        let pattern = MosaicPattern::default();
        let m = mosaic_from_angles(&a, pattern).unwrap();
        for method in [DemosaicMethod::Nearest, DemosaicMethod::Bilinear] {
            let d = demosaic(&m, method);
            for y in 0..8 {
                for x in 0..8 {
                    let ang = pattern.angle_at(x, y);
                    assert_eq!(d.get(ang).get(x, y), a.get(ang).get(x, y));
                }
            }
        }
    }

    #[test]
    fn demosaic_constant_is_constant() {
        let m = MosaicFrame::new(Plane::filled(8, 6, 0.3), MosaicPattern::default()).unwrap();
        for method in [DemosaicMethod::Nearest, DemosaicMethod::Bilinear] {
            let d = demosaic(&m, method);
            for a in Angle::ALL {
                assert!(d.get(a).data().iter().all(|&v| v == 0.3));
            }
        }
    }

    #[test]
    fn nearest_single_superpixel() {
        let raw = Plane::new(2, 2, vec![1.0, 2.0, 3.0, 4.0])
            .unwrap()
            .map(|v| v / 4.0);
        let m = MosaicFrame::new(raw, MosaicPattern::default()).unwrap();
        let d = demosaic(&m, DemosaicMethod::Nearest);
        for (a, v) in Angle::ALL.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!(d.get(*a).data().iter().all(|&p| p == v / 4.0));
        }
    }

    #[test]
    fn bilinear_is_exact_on_affine_planes_in_interior() {
        let (w, h) = (12, 10);
        let coeffs = [
            (0.1, 0.01, 0.02),
            (0.2, 0.015, 0.005),
            (0.05, 0.02, 0.03),
            (0.3, 0.003, 0.011),
        ];
        let planes: Vec<Plane> = coeffs
            .iter()
            .map(|&(c, a, b)| Plane::from_fn(w, h, |x, y| c + a * x as f64 + b * y as f64))
            .collect();
        let angles = AngleImages::new(
            planes[0].clone(),
            planes[1].clone(),
            planes[2].clone(),
            planes[3].clone(),
        )
        .unwrap();
        let m = mosaic_from_angles(&angles, MosaicPattern::default()).unwrap();
        let d = demosaic(&m, DemosaicMethod::Bilinear);
        for (i, a) in Angle::ALL.iter().enumerate() {
            let (c, ax, by) = coeffs[i];
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let expect = c + ax * x as f64 + by * y as f64;
                    assert!((d.get(*a).get(x, y) - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn stokes_spot_values() {
        let s = stokes(&constant_angles(2, 2, [0.5; 4]));
        assert_eq!(s.s0.get(0, 0), 1.0);
        assert_eq!(s.q.get(0, 0), 0.0);
        assert_eq!(s.u.get(0, 0), 0.0);

        let s = stokes(&constant_angles(2, 2, [0.8, 0.4, 0.0, 0.4]));
        assert_eq!(s.s0.get(1, 1), 0.8);
        assert_eq!(s.q.get(1, 1), 0.8);
        assert_eq!(s.u.get(1, 1), 0.0);
    }

    #[test]
    fn stokes_of_malus_example() {
        let v: Vec<f64> = [0.0, 45.0, 90.0, 135.0]
            .iter()
            .map(|&a| malus(1.0, 0.5, 30.0, a))
            .collect();
        assert!((v[0] - 0.625).abs() < 1e-12);
        assert!((v[1] - 0.71650635).abs() < 1e-8);
        assert!((v[2] - 0.375).abs() < 1e-12);
        assert!((v[3] - 0.28349365).abs() < 1e-8);
        let s = stokes(&constant_angles(2, 2, [v[0], v[1], v[2], v[3]]));
        assert!((s.s0.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((s.q.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.u.get(0, 0) + 0.43301270).abs() < 1e-8);
    }

    fn const_stokes(s0: f64, q: f64, u: f64) -> StokesImage {
        StokesImage::new(
            Plane::filled(2, 2, s0),
            Plane::filled(2, 2, q),
            Plane::filled(2, 2, u),
        )
        .unwrap()
    }

    #[test]
    fn dolp_spot_values() {
        for mode in [DolpMode::Normalized, DolpMode::PaperLiteral] {
            let d = dolp(&const_stokes(0.7, 0.0, 0.0), mode, DEFAULT_EPS).unwrap();
            assert_eq!(d.values.get(0, 0), 0.0);
        }
        let d = dolp(
            &const_stokes(0.3, 0.3, 0.0),
            DolpMode::Normalized,
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(d.values.get(0, 0), 1.0);

        let st = const_stokes(0.5, 0.125, -0.21650635);
        let n = dolp(&st, DolpMode::Normalized, DEFAULT_EPS).unwrap();
        let p = dolp(&st, DolpMode::PaperLiteral, DEFAULT_EPS).unwrap();
        assert!((n.values.get(0, 0) - 0.5).abs() < 1e-8);
        assert!((p.values.get(0, 0) - 0.35355339).abs() < 1e-8);
    }

    #[test]
    fn dolp_dark_pixels_are_zero() {
        let st = const_stokes(1e-9, 1e-9, 0.0);
        for mode in [DolpMode::Normalized, DolpMode::PaperLiteral] {
            assert_eq!(dolp(&st, mode, DEFAULT_EPS).unwrap().values.get(0, 0), 0.0);
        }
    }

    #[test]
    fn dolp_rejects_nonpositive_eps() {
        let st = const_stokes(0.5, 0.1, 0.1);
        assert!(matches!(
            dolp(&st, DolpMode::Normalized, 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(dolp(&st, DolpMode::Normalized, -1.0).is_err());
        assert!(dolp(&st, DolpMode::Normalized, f64::NAN).is_err());
    }

    #[test]
    fn malus_constant_fields_recover_rho() {
        for &(s0, rho, theta) in &[(1.0, 0.5, 30.0), (0.4, 0.9, 170.0), (0.8, 0.0, 12.0)] {
            let v: Vec<f64> = Angle::ALL
                .iter()
                .map(|a| malus(s0, rho, theta, a.degrees()))
                .collect();
            let s = stokes(&constant_angles(2, 2, [v[0], v[1], v[2], v[3]]));
            let d = dolp(&s, DolpMode::Normalized, DEFAULT_EPS).unwrap();
            assert!((d.values.get(0, 0) - rho).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_round_trip_native_sites(seed in any::<u64>(), hw in 1usize..6, hh in 1usize..6) {
            let (w, h) = (hw * 2, hh * 2);
            let a = random_angles(w, h, seed);
            let pattern: MosaicPattern = "135,0;45,90".parse().unwrap();
            let m = mosaic_from_angles(&a, pattern).unwrap();
            let d = demosaic(&m, DemosaicMethod::Bilinear);
            for y in 0..h {
                for x in 0..w {
                    let ang = pattern.angle_at(x, y);
                    prop_assert_eq!(d.get(ang).get(x, y), a.get(ang).get(x, y));
                }
            }
        }

        #[test]
        fn prop_stokes_linear(seed in any::<u64>(), alpha in 0.0f64..3.0, beta in 0.0f64..3.0) {
            let a = random_angles(4, 4, seed);
            let b = random_angles(4, 4, seed.wrapping_add(1));
            let comb = |p: &Plane, q: &Plane| p.zip_map(q, |x, y| alpha * x + beta * y).unwrap();
            let c = AngleImages::new(
                comb(&a.i0, &b.i0), comb(&a.i45, &b.i45),
                comb(&a.i90, &b.i90), comb(&a.i135, &b.i135),
            ).unwrap();
            let (sa, sb, sc) = (stokes(&a), stokes(&b), stokes(&c));
            for (pc, (pa, pb)) in [(&sc.s0, (&sa.s0, &sb.s0)), (&sc.q, (&sa.q, &sb.q)), (&sc.u, (&sa.u, &sb.u))] {
                for i in 0..16 {
                    let expect = alpha * pa.data()[i] + beta * pb.data()[i];
                    prop_assert!((pc.data()[i] - expect).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn prop_dolp_sign_insensitive(s0 in 0.01f64..2.0, q in -1.0f64..1.0, u in -1.0f64..1.0) {
            for mode in [DolpMode::Normalized, DolpMode::PaperLiteral] {
                let base = dolp(&const_stokes(s0, q, u), mode, DEFAULT_EPS).unwrap().values.get(0, 0);
                for (qq, uu) in [(-q, u), (q, -u), (-q, -u)] {
                    let v = dolp(&const_stokes(s0, qq, uu), mode, DEFAULT_EPS).unwrap().values.get(0, 0);
                    prop_assert_eq!(v, base);
                }
            }
        }

        #[test]
        fn prop_dolp_scaling(seed in any::<u64>(), c in 0.1f64..5.0) {
            let a = random_angles(4, 4, seed).i0.map(|v| v + 0.01);
            let angles = random_angles(4, 4, seed);
            let angles = AngleImages::new(a, angles.i45, angles.i90, angles.i135).unwrap();
            let scaled = AngleImages::new(
                angles.i0.map(|v| c * v), angles.i45.map(|v| c * v),
                angles.i90.map(|v| c * v), angles.i135.map(|v| c * v),
            ).unwrap();
            let (s, sc) = (stokes(&angles), stokes(&scaled));
            let n = dolp(&s, DolpMode::Normalized, DEFAULT_EPS).unwrap();
            let nc = dolp(&sc, DolpMode::Normalized, DEFAULT_EPS).unwrap();
            let p = dolp(&s, DolpMode::PaperLiteral, DEFAULT_EPS).unwrap();
            let pc = dolp(&sc, DolpMode::PaperLiteral, DEFAULT_EPS).unwrap();
            for i in 0..16 {
                prop_assert!((n.values.data()[i] - nc.values.data()[i]).abs() < 1e-12);
                prop_assert!((pc.values.data()[i] - c.sqrt() * p.values.data()[i]).abs() < 1e-12);
            }
        }
    }
}
