//! Handcrafted DOLP descriptors: central-moment statistics and LBP histograms.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::{Plane, Rect};
use crate::synth::Label;

/// Variance below which kurtosis is treated as undefined.
pub const MIN_VARIANCE: f64 = 1e-18;

pub const LBP_BINS: usize = 256;

/// Mean, population standard deviation and Pearson kurtosis `m4 / m2²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatTriple {
    pub mean: f64,
    pub std: f64,
    pub kurtosis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Descriptor {
    StatMean,
    StatStd,
    StatKurtosis,
    Lbp256,
    Embedding(usize),
}

impl Descriptor {
    pub fn dim(self) -> usize {
        match self {
            Descriptor::StatMean | Descriptor::StatStd | Descriptor::StatKurtosis => 1,
            Descriptor::Lbp256 => LBP_BINS,
            Descriptor::Embedding(d) => d,
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Descriptor::StatMean => f.write_str("stat-mean"),
            Descriptor::StatStd => f.write_str("stat-std"),
            Descriptor::StatKurtosis => f.write_str("stat-kurtosis"),
            Descriptor::Lbp256 => f.write_str("lbp-256"),
            Descriptor::Embedding(d) => write!(f, "embedding-{d}"),
        }
    }
}

/// A fixed-length feature vector tagged with the descriptor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    descriptor: Descriptor,
}

impl FeatureVector {
    pub fn new(descriptor: Descriptor, values: Vec<f64>) -> Result<Self> {
        if values.len() != descriptor.dim() {
            return Err(Error::Dimension(format!(
                "{descriptor} expects {} values, got {}",
                descriptor.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "{descriptor} has non-finite values"
            )));
        }
        Ok(Self { values, descriptor })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn descriptor(&self) -> Descriptor {
        self.descriptor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn region_values(image: &Plane, region: Rect) -> Result<Vec<f64>> {
    region.check_inside(image.width(), image.height())?;
    if region.area() == 0 {
        return Err(Error::Dimension("empty region".into()));
    }
    let mut v = Vec::with_capacity(region.area());
    for y in region.y..region.y + region.height {
        for x in region.x..region.x + region.width {
            v.push(image.get(x, y));
        }
    }
    Ok(v)
}

pub fn stat_triple(image: &Plane, region: Rect) -> Result<StatTriple> {
    let v = region_values(image, region)?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in &v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 < MIN_VARIANCE {
        return Err(Error::DegenerateVariance(format!(
            "region {region:?} has variance {m2:e}"
        )));
    }
    Ok(StatTriple {
        mean,
        std: m2.sqrt(),
        kurtosis: m4 / (m2 * m2),
    })
}

/// 8-neighbour radius-1 LBP code of the pixel at `(x, y)`.
///
/// Bit 0 is the top-left neighbour and bits advance clockwise; a bit is set
/// when the neighbour is at least as bright as the centre.
#[inline]
pub fn lbp_code(image: &Plane, x: usize, y: usize) -> u8 {
    const RING: [(isize, isize); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
    ];
    let c = image.get(x, y);
    let mut code = 0u8;
    for (bit, (dx, dy)) in RING.iter().enumerate() {
        let n = image.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if n >= c {
            code |= 1 << bit;
        }
    }
    code
}

/// Normalized 256-bin histogram of LBP codes over the interior of `region`.
pub fn lbp_histogram(image: &Plane, region: Rect) -> Result<FeatureVector> {
    region.check_inside(image.width(), image.height())?;
    if region.width < 3 || region.height < 3 {
        return Err(Error::Dimension(format!(
            "LBP region must be at least 3x3, got {}x{}",
            region.width, region.height
        )));
    }
    let mut counts = [0u64; LBP_BINS];
    for y in region.y + 1..region.y + region.height - 1 {
        for x in region.x + 1..region.x + region.width - 1 {
            counts[lbp_code(image, x, y) as usize] += 1;
        }
    }
    let total = ((region.width - 2) * (region.height - 2)) as f64;
    let hist = counts.iter().map(|&c| c as f64 / total).collect();
    FeatureVector::new(Descriptor::Lbp256, hist)
}

/// One row of a feature dump.
pub struct FeatureRow<'a> {
    pub sample_id: &'a str,
    pub label: Label,
    pub features: &'a FeatureVector,
}

/// Writes `sample_id,label,descriptor,v0..vK` CSV.
pub fn write_feature_csv<W: Write>(mut out: W, rows: &[FeatureRow<'_>]) -> std::io::Result<()> {
    let k = rows.first().map_or(0, |r| r.features.len());
    write!(out, "sample_id,label,descriptor")?;
    for i in 0..k {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for r in rows {
        write!(
            out,
            "{},{},{}",
            r.sample_id,
            r.label,
            r.features.descriptor()
        )?;
        for v in r.features.values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_feature_csv_file(path: impl AsRef<Path>, rows: &[FeatureRow<'_>]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, rows).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn constant_region_is_degenerate() {
        let p = Plane::filled(5, 5, 0.3);
        assert!(matches!(
            stat_triple(&p, p.full_rect()),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn two_point_distribution() {
        let p = Plane::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 2.0 });
        let s = stat_triple(&p, p.full_rect()).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.kurtosis, 1.0);
    }

    #[test]
    fn moments_match_four_pass_brute_force() {
        let p = random_plane(8, 8, 64);
        let v = p.data();
        let n = v.len() as f64;
        // independent passes: mean, then each central moment separately
        let mut sum = 0.0;
        for x in v {
            sum += x;
        }
        let mean = sum / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        assert!(m3.is_finite());
        let s = stat_triple(&p, p.full_rect()).unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - m2.sqrt()).abs() < 1e-12);
        assert!((s.kurtosis - m4 / (m2 * m2)).abs() < 1e-12);
        assert!(s.kurtosis >= 1.0);
    }

    #[test]
    fn sub_region_only() {
        let mut p = Plane::filled(6, 6, 100.0);
        let r = Rect::new(1, 2, 2, 2);
        p.set(1, 2, 0.0);
        p.set(2, 2, 2.0);
        p.set(1, 3, 0.0);
        p.set(2, 3, 2.0);
        let s = stat_triple(&p, r).unwrap();
        assert_eq!((s.mean, s.std, s.kurtosis), (1.0, 1.0, 1.0));
        assert!(stat_triple(&p, Rect::new(5, 5, 2, 1)).is_err());
    }

    #[test]
    fn lbp_constant_region_all_255() {
        let p = Plane::filled(6, 5, 0.4);
        let h = lbp_histogram(&p, p.full_rect()).unwrap();
        assert_eq!(h.values()[255], 1.0);
        assert_eq!(h.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn lbp_local_maximum_code_zero() {
        let mut p = Plane::filled(3, 3, 0.2);
        p.set(1, 1, 0.9);
        assert_eq!(lbp_code(&p, 1, 1), 0);
        let h = lbp_histogram(&p, p.full_rect()).unwrap();
        assert_eq!(h.values()[0], 1.0);
    }

    #[test]
    fn lbp_bit_order() {
        // only the top-left neighbour is brighter: bit 0
        let mut p = Plane::filled(3, 3, 0.0);
        p.set(1, 1, 0.5);
        p.set(0, 0, 1.0);
        assert_eq!(lbp_code(&p, 1, 1), 0b0000_0001);
        // left neighbour closes the ring: bit 7
        p.set(0, 0, 0.0);
        p.set(0, 1, 1.0);
        assert_eq!(lbp_code(&p, 1, 1), 0b1000_0000);
        p.set(0, 1, 0.0);
        p.set(2, 1, 1.0);
        assert_eq!(lbp_code(&p, 1, 1), 0b0000_1000);
    }

    #[test]
    fn lbp_matches_enumeration_on_4x4() {
        let p = random_plane(4, 4, 4);
        // hand-rolled neighbour enumeration, clockwise from top-left
        let ring = |x: usize, y: usize| {
            [
                p.get(x - 1, y - 1),
                p.get(x, y - 1),
                p.get(x + 1, y - 1),
                p.get(x + 1, y),
                p.get(x + 1, y + 1),
                p.get(x, y + 1),
                p.get(x - 1, y + 1),
                p.get(x - 1, y),
            ]
        };
        let mut expect = vec![0.0; 256];
        for (x, y) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            let c = p.get(x, y);
            let code: usize = ring(x, y)
                .iter()
                .enumerate()
                .map(|(i, &n)| if n >= c { 1 << i } else { 0 })
                .sum();
            expect[code] += 0.25;
        }
        let h = lbp_histogram(&p, p.full_rect()).unwrap();
        assert_eq!(h.values(), &expect[..]);
    }

    #[test]
    fn lbp_region_too_small() {
        let p = Plane::filled(5, 5, 0.0);
        assert!(matches!(
            lbp_histogram(&p, Rect::new(0, 0, 2, 5)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn feature_vector_checks_length() {
        assert!(FeatureVector::new(Descriptor::Embedding(3), vec![0.0; 2]).is_err());
        assert!(FeatureVector::new(Descriptor::StatMean, vec![f64::NAN]).is_err());
        assert_eq!(Descriptor::Embedding(32).to_string(), "embedding-32");
    }

    #[test]
    fn feature_csv_layout() {
        let f = FeatureVector::new(Descriptor::Embedding(2), vec![0.5, -1.0]).unwrap();
        let rows = [FeatureRow {
            sample_id: "a-0000",
            label: Label::Genuine,
            features: &f,
        }];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_id,label,descriptor,v0,v1\na-0000,genuine,embedding-2,0.5,-1\n"
        );
    }

    proptest! {
        #[test]
        fn prop_stats_permutation_and_affine(seed in any::<u64>(), a in 0.1f64..10.0, neg in any::<bool>(), b in -5.0f64..5.0) {
            let p = random_plane(6, 5, seed);
            let s = stat_triple(&p, p.full_rect()).unwrap();
            let mut rev = p.data().to_vec();
            rev.reverse();
            let q = Plane::new(6, 5, rev).unwrap();
            let sq = stat_triple(&q, q.full_rect()).unwrap();
            prop_assert!((s.mean - sq.mean).abs() < 1e-12);
            prop_assert!((s.std - sq.std).abs() < 1e-12);
            let a = if neg { -a } else { a };
            let t = p.map(|v| a * v + b);
            let st = stat_triple(&t, t.full_rect()).unwrap();
            prop_assert!((st.kurtosis - s.kurtosis).abs() < 1e-9 * s.kurtosis);
        }

        #[test]
        fn prop_lbp_monotone_invariant(seed in any::<u64>(), k in 0.5f64..3.0) {
            // quantize so ties occur
            let p = random_plane(7, 6, seed).map(|v| (v * 4.0).floor());
            let t = p.map(|v| (k * v).exp() + 3.0);
            let h = lbp_histogram(&p, p.full_rect()).unwrap();
            let ht = lbp_histogram(&t, t.full_rect()).unwrap();
            prop_assert_eq!(h.values(), ht.values());
            prop_assert!(h.values().iter().all(|&v| v >= 0.0));
            prop_assert!((h.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
