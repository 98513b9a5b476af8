use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Liveness label of a material. Genuine is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Genuine,
    Print,
    Screen,
    Mask,
}

impl Label {
    pub fn is_genuine(self) -> bool {
        self == Label::Genuine
    }

    /// `+1` for genuine, `-1` for any attack.
    pub fn sign(self) -> f64 {
        if self.is_genuine() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Print => "attack:print",
            Label::Screen => "attack:screen",
            Label::Mask => "attack:mask",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "attack:print" => Ok(Label::Print),
            "attack:screen" => Ok(Label::Screen),
            "attack:mask" => Ok(Label::Mask),
            _ => Err(Error::Parameter(format!("unknown label {s:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the angle of linear polarization is chosen per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    UniformRandom,
    /// Constant angle in degrees.
    Fixed(f64),
}

/// Statistical description of a presentation surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub name: String,
    pub label: Label,
    pub rho_mean: f64,
    pub rho_spread: f64,
    pub theta_mode: ThetaMode,
    pub albedo_range: (f64, f64),
    pub texture_scale: f64,
    pub noise_sigma: f64,
}

impl MaterialProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(format!("profile {:?}: {m}", self.name)));
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        if !(0.0..=1.0).contains(&self.rho_mean) {
            return bad(format!("rho_mean {} outside [0, 1]", self.rho_mean));
        }
        if !(self.rho_spread >= 0.0) {
            return bad(format!("rho_spread {} negative", self.rho_spread));
        }
        let (lo, hi) = self.albedo_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("albedo_range ({lo}, {hi}) invalid"));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return bad(format!(
                "texture_scale {} must be positive",
                self.texture_scale
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} negative", self.noise_sigma));
        }
        if let ThetaMode::Fixed(t) = self.theta_mode {
            if !t.is_finite() {
                return bad("theta must be finite".into());
            }
        }
        Ok(())
    }
}

/// A named set of material profiles, the JSON document consumed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePack {
    pub profiles: Vec<MaterialProfile>,
}

impl ProfilePack {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pack: ProfilePack =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        pack.validate()?;
        Ok(pack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::Parameter("profile pack is empty".into()));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate()?;
            if self.profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Parameter(format!(
                    "duplicate profile name {:?}",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile pack serializes")
    }

    /// Genuine skin plus print, screen replay and silicone mask attacks.
    ///
    /// Screens emit strongly polarized light, prints are moderately
    /// polarized, and silicone sits close to skin. The skin/mask pair
    /// overlaps in ρ and differs mainly in texture scale.
    pub fn default_pack() -> Self {
        let base = |name: &str, label, rho_mean, rho_spread, texture_scale| MaterialProfile {
            name: name.into(),
            label,
            rho_mean,
            rho_spread,
            theta_mode: ThetaMode::UniformRandom,
            albedo_range: (0.35, 0.65),
            texture_scale,
            noise_sigma: 0.004,
        };
        ProfilePack {
            profiles: vec![
                base("genuine-skin", Label::Genuine, 0.15, 0.05, 12.0),
                base("silicone-mask", Label::Mask, 0.25, 0.05, 4.0),
                base("paper-print", Label::Print, 0.45, 0.04, 10.0),
                base("screen-replay", Label::Screen, 0.9, 0.02, 10.0),
            ],
        }
    }

    /// Two materials with identical albedo statistics that differ only in
    /// their degree of polarization.
    pub fn matched_pair_pack() -> Self {
        let base = |name: &str, label, rho_mean| MaterialProfile {
            name: name.into(),
            label,
            rho_mean,
            rho_spread: 0.05,
            theta_mode: ThetaMode::UniformRandom,
            albedo_range: (0.3, 0.7),
            texture_scale: 10.0,
            noise_sigma: 0.004,
        };
        ProfilePack {
            profiles: vec![
                base("genuine-skin", Label::Genuine, 0.15),
                base("paper-print", Label::Print, 0.45),
            ],
        }
    }

    /// Skin against silicone with overlapping ρ distributions: comparable
    /// global DOLP statistics, different spatial texture.
    pub fn confusable_pack() -> Self {
        let base = |name: &str, label, rho_mean, rho_spread, texture_scale| MaterialProfile {
            name: name.into(),
            label,
            rho_mean,
            rho_spread,
            theta_mode: ThetaMode::UniformRandom,
            albedo_range: (0.4, 0.6),
            texture_scale,
            noise_sigma: 0.004,
        };
        ProfilePack {
            profiles: vec![
                base("genuine-skin", Label::Genuine, 0.2, 0.08, 16.0),
                base("silicone-mask", Label::Mask, 0.2, 0.06, 4.0),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_strings_round_trip() {
        for l in [Label::Genuine, Label::Print, Label::Screen, Label::Mask] {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
        }
        assert!("attack".parse::<Label>().is_err());
        assert_eq!(Label::Genuine.sign(), 1.0);
        assert_eq!(Label::Mask.sign(), -1.0);
    }

    #[test]
    fn pack_json_round_trip() {
        let pack = ProfilePack::default_pack();
        let back: ProfilePack = serde_json::from_str(&pack.to_json()).unwrap();
        assert_eq!(back, pack);
        assert!(pack.to_json().contains("\"attack:screen\""));
        assert!(pack.to_json().contains("\"uniform-random\""));
    }

    #[test]
    fn fixed_theta_json_shape() {
        let t: ThetaMode = serde_json::from_str(r#"{"fixed": 30.0}"#).unwrap();
        assert_eq!(t, ThetaMode::Fixed(30.0));
    }

    #[test]
    fn validation_catches_bad_profiles() {
        let mut p = ProfilePack::default_pack().profiles[0].clone();
        p.albedo_range = (0.6, 0.4);
        assert!(p.validate().is_err());
        p.albedo_range = (0.4, 0.6);
        p.texture_scale = 0.0;
        assert!(p.validate().is_err());
        let mut pack = ProfilePack::default_pack();
        pack.profiles[1].name = pack.profiles[0].name.clone();
        assert!(pack.validate().is_err());
    }
}
