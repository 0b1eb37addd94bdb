//! Per-patch feature vectors for classification.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::octree::PplVector;
use crate::store::{Patch, Schema};
use crate::{Error, Result};

/// Default footprint diameter for [`Feature::DiskArea2d`], in metres.
pub const DEFAULT_POINT_DIAMETER: f64 = 0.05;

/// Serialized by [`Feature::name`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Feature {
    /// `O_L / 8^L` for a 1-based level.
    PplNorm(u8),
    MeanIntensity,
    MeanNumEcho,
    MeanZ,
    MeanAltitude,
    BboxArea2d,
    PatchHeight,
    /// Area of the union of point footprints of [`DEFAULT_POINT_DIAMETER`].
    DiskArea2d,
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::PplNorm(l) => alloc::format!("ppl_norm_{l}"),
            Feature::MeanIntensity => "mean_intensity".to_string(),
            Feature::MeanNumEcho => "mean_num_echo".to_string(),
            Feature::MeanZ => "mean_z".to_string(),
            Feature::MeanAltitude => "mean_altitude_relative".to_string(),
            Feature::BboxArea2d => "bbox_area_2d".to_string(),
            Feature::PatchHeight => "patch_height".to_string(),
            Feature::DiskArea2d => "disk_area_2d".to_string(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        if let Some(l) = name.strip_prefix("ppl_norm_") {
            return l.parse().ok().filter(|l| (1..=21).contains(l)).map(Feature::PplNorm);
        }
        Some(match name {
            "mean_intensity" => Feature::MeanIntensity,
            "mean_num_echo" => Feature::MeanNumEcho,
            "mean_z" => Feature::MeanZ,
            "mean_altitude_relative" => Feature::MeanAltitude,
            "bbox_area_2d" => Feature::BboxArea2d,
            "patch_height" => Feature::PatchHeight,
            "disk_area_2d" => Feature::DiskArea2d,
            _ => return None,
        })
    }

    pub fn is_ppl(&self) -> bool {
        matches!(self, Feature::PplNorm(_))
    }
}

impl From<Feature> for String {
    fn from(f: Feature) -> String {
        f.name()
    }
}

impl TryFrom<String> for Feature {
    type Error = String;

    fn try_from(s: String) -> core::result::Result<Self, String> {
        Feature::parse(&s).ok_or_else(|| alloc::format!("unknown feature {s:?}"))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureProfile {
    /// Terrestrial street scenes (1 m cubes).
    Paris,
    /// Airborne forest scenes (50 m columns).
    Vosges,
    Custom(Vec<Feature>),
}

impl FeatureProfile {
    pub fn features(&self) -> Vec<Feature> {
        use Feature::*;
        let ppl = (1..=4).map(PplNorm);
        match self {
            FeatureProfile::Paris => [MeanAltitude, BboxArea2d, PatchHeight]
                .into_iter()
                .chain(ppl)
                .chain([MeanIntensity, MeanNumEcho])
                .collect(),
            FeatureProfile::Vosges => ppl.chain([MeanIntensity, MeanNumEcho, MeanZ]).collect(),
            FeatureProfile::Custom(f) => f.clone(),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            FeatureProfile::Paris => "paris",
            FeatureProfile::Vosges => "vosges",
            FeatureProfile::Custom(_) => "custom",
        }
    }

    /// Deepest ppl level the profile reads.
    pub fn ppl_levels(&self) -> usize {
        self.features()
            .iter()
            .filter_map(|f| match f {
                Feature::PplNorm(l) => Some(*l as usize),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Fails when the profile reads an attribute the store does not carry.
    pub fn validate(&self, schema: Schema) -> Result<()> {
        for f in self.features() {
            match f {
                Feature::MeanIntensity if !schema.intensity => return Err(Error::MissingAttribute("intensity")),
                Feature::MeanNumEcho if !schema.num_echo => return Err(Error::MissingAttribute("num_echo")),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub features: Vec<Feature>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.features.iter().position(|g| *g == f).map(|i| self.values[i])
    }
}

/// Extracts the profile's features from a patch and its occupancy vector.
pub fn extract_features(patch: &Patch, ppl: &PplVector, profile: &FeatureProfile, schema: Schema) -> Result<FeatureVector> {
    profile.validate(schema)?;
    if ppl.levels() < profile.ppl_levels() {
        return Err(Error::InvalidConfig(alloc::format!(
            "profile needs {} ppl levels, got {}",
            profile.ppl_levels(),
            ppl.levels()
        )));
    }
    let features = profile.features();
    let s = &patch.stats;
    let values = features
        .iter()
        .map(|f| match *f {
            Feature::PplNorm(l) => ppl.at(l as usize) as f64 / libm::pow(8.0, l as f64),
            Feature::MeanIntensity => s.intensity.map_or(f64::NAN, |a| a.mean),
            Feature::MeanNumEcho => s.num_echo.map_or(f64::NAN, |a| a.mean),
            Feature::MeanZ => s.z.mean,
            Feature::MeanAltitude => s.mean_altitude,
            Feature::BboxArea2d => s.bbox.area_xy(),
            Feature::PatchHeight => s.bbox.extent()[2],
            Feature::DiskArea2d => disk_union_area(patch.points.iter().map(|p| [p.x, p.y]), DEFAULT_POINT_DIAMETER),
        })
        .collect();
    Ok(FeatureVector { features, values })
}

/// Area covered by disks of `diameter` centred on the points, rasterized on
/// a grid of pitch `diameter / 2`. A raster cell counts when its centre is
/// inside some disk.
pub fn disk_union_area<I: IntoIterator<Item = [f64; 2]>>(points: I, diameter: f64) -> f64 {
    let pitch = 0.5 * diameter;
    let r = 0.5 * diameter;
    let reach = libm::ceil(r / pitch) as i64 + 1;
    let mut covered: BTreeSet<(i64, i64)> = BTreeSet::new();
    for [x, y] in points {
        let ci = libm::floor(x / pitch) as i64;
        let cj = libm::floor(y / pitch) as i64;
        for i in ci - reach..=ci + reach {
            for j in cj - reach..=cj + reach {
                let cx = (i as f64 + 0.5) * pitch;
                let cy = (j as f64 + 0.5) * pitch;
                if (cx - x) * (cx - x) + (cy - y) * (cy - y) <= r * r {
                    covered.insert((i, j));
                }
            }
        }
    }
    covered.len() as f64 * pitch * pitch
}
