//! JSON descriptors for synthetic scenes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use simsam_core::{BinaryMask, ImageShape, SceneParams, SyntheticScene};

use crate::error::{Error, Result};

/// A filled shape in pixel coordinates (row, column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// `angle` is in radians; `radii` are the semi-axes before rotation,
    /// along columns and rows respectively.
    Ellipse { center: [f64; 2], radii: [f64; 2], angle: f64 },
    /// Inclusive pixel bounds.
    Rect { row_min: usize, col_min: usize, row_max: usize, col_max: usize },
}

impl Primitive {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        match *self {
            Primitive::Ellipse { center, radii, angle } => {
                let dy = row as f64 - center[0];
                let dx = col as f64 - center[1];
                let (sin, cos) = angle.sin_cos();
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                (u / radii[0]).powi(2) + (v / radii[1]).powi(2) <= 1.0
            }
            Primitive::Rect { row_min, col_min, row_max, col_max } => {
                (row_min..=row_max).contains(&row) && (col_min..=col_max).contains(&col)
            }
        }
    }
}

/// Oracle settings stored next to the shape list. Missing fields take the
/// backend defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub sdf_gain: f64,
    pub blur_radius: f64,
    pub noise_amplitude: f64,
    pub noise_seed: u64,
    pub noise_scale: f64,
    pub influence_radius: f64,
    pub click_strength: f64,
    pub region_gated: bool,
}

impl Default for OracleSettings {
    fn default() -> Self {
        SceneParams::default().into()
    }
}

impl From<SceneParams> for OracleSettings {
    fn from(p: SceneParams) -> Self {
        Self {
            sdf_gain: p.sdf_gain,
            blur_radius: p.blur_radius,
            noise_amplitude: p.noise_amplitude,
            noise_seed: p.noise_seed,
            noise_scale: p.noise_scale,
            influence_radius: p.influence_radius,
            click_strength: p.click_strength,
            region_gated: p.region_gated,
        }
    }
}

impl From<OracleSettings> for SceneParams {
    fn from(s: OracleSettings) -> Self {
        Self {
            sdf_gain: s.sdf_gain,
            blur_radius: s.blur_radius,
            noise_amplitude: s.noise_amplitude,
            noise_seed: s.noise_seed,
            noise_scale: s.noise_scale,
            influence_radius: s.influence_radius,
            click_strength: s.click_strength,
            region_gated: s.region_gated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub height: usize,
    pub width: usize,
    /// The true mask is the union of these.
    pub shapes: Vec<Primitive>,
    #[serde(default)]
    pub oracle: OracleSettings,
}

impl SceneDescriptor {
    pub fn shape(&self) -> Result<ImageShape> {
        Ok(ImageShape::new(self.height, self.width)?)
    }

    pub fn true_mask(&self) -> Result<BinaryMask> {
        let shape = self.shape()?;
        Ok(BinaryMask::from_fn(shape, |r, c| self.shapes.iter().any(|p| p.contains(r, c))))
    }

    pub fn build(&self) -> Result<SyntheticScene> {
        Ok(SyntheticScene::new(self.true_mask()?, self.oracle.into())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene descriptors always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_descriptor() {
        let d: SceneDescriptor = serde_json::from_str(
            r#"{"height": 8, "width": 8,
                "shapes": [{"kind": "rect", "row_min": 2, "col_min": 2, "row_max": 5, "col_max": 5}],
                "oracle": {"noise_amplitude": 0.0}}"#,
        )
        .unwrap();
        assert_eq!(d.oracle.sdf_gain, SceneParams::default().sdf_gain);
        assert_eq!(d.true_mask().unwrap().count(), 16);
        let back: SceneDescriptor = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rotated_ellipse() {
        let e = Primitive::Ellipse { center: [10.0, 10.0], radii: [6.0, 2.0], angle: std::f64::consts::FRAC_PI_2 };
        // Long axis now runs along rows.
        assert!(e.contains(15, 10));
        assert!(!e.contains(10, 15));
    }

    #[test]
    fn invalid_oracle_rejected() {
        let d = SceneDescriptor {
            height: 4,
            width: 4,
            shapes: vec![],
            oracle: OracleSettings { influence_radius: 0.5, ..Default::default() },
        };
        assert!(d.build().is_err());
    }
}
