//! Rotated anchor templates: the scale × aspect-ratio × angle cross product,
//! tiled over a feature map.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rbox::RotatedBox;

/// Anchor template configuration. Ratios are `h / w`, so ratios below one
/// give the wide boxes typical of text lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub angles: Vec<f64>,
    pub stride: f64,
}

impl AnchorSpec {
    /// Profile used for rotated text detection: 5 scales, 7 ratios and 7
    /// angles covering (-90, 90] at a stride of 16.
    pub fn text_profile() -> Self {
        Self {
            scales: vec![32.0, 64.0, 128.0, 256.0, 512.0],
            ratios: vec![0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0],
            angles: vec![-90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0],
            stride: 16.0,
        }
    }

    /// The text profile with angle anchors every 30° around the full circle.
    pub fn full_circle_profile() -> Self {
        Self {
            angles: (-5..=6).map(|k| k as f64 * 30.0).collect(),
            ..Self::text_profile()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.ratios.is_empty() || self.angles.is_empty() {
            return Err(invalid(
                "anchor spec",
                "scales, ratios and angles must be non-empty",
            ));
        }
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid("scales", format!("{s} is not > 0")));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(invalid("ratios", format!("{r} is not > 0")));
        }
        if let Some(a) = self.angles.iter().find(|a| !(**a > -180.0 && **a <= 180.0)) {
            return Err(invalid("angles", format!("{a} outside (-180, 180]")));
        }
        if !(self.stride.is_finite() && self.stride >= 1.0) {
            return Err(invalid("stride", format!("{} < 1", self.stride)));
        }
        Ok(())
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len() * self.angles.len()
    }
}

/// Anchor templates centered at the origin, scale-major, then ratio, then angle.
/// Each template keeps the area of its scale: `w = s/√r`, `h = s·√r`.
pub fn cell_anchors(spec: &AnchorSpec) -> Result<Vec<RotatedBox>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.anchors_per_cell());
    for &s in &spec.scales {
        for &r in &spec.ratios {
            let root = r.sqrt();
            for &theta in &spec.angles {
                out.push(RotatedBox::new(0.0, 0.0, s / root, s * root, theta)?);
            }
        }
    }
    Ok(out)
}

/// Cell anchors translated to every cell center `((i + 0.5)·stride, (j + 0.5)·stride)`,
/// row-major over the grid, then template order. Anchors crossing the image
/// border are kept.
pub fn grid_anchors(
    spec: &AnchorSpec,
    feature_width: usize,
    feature_height: usize,
) -> Result<Vec<RotatedBox>> {
    if feature_width == 0 || feature_height == 0 {
        return Err(invalid(
            "feature dims",
            format!("{feature_width}x{feature_height} must be at least 1x1"),
        ));
    }
    let cell = cell_anchors(spec)?;
    let mut out = Vec::with_capacity(feature_width * feature_height * cell.len());
    for j in 0..feature_height {
        let cy = (j as f64 + 0.5) * spec.stride;
        for i in 0..feature_width {
            let cx = (i as f64 + 0.5) * spec.stride;
            out.extend(cell.iter().map(|a| a.translated(cx, cy)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scales: &[f64], ratios: &[f64], angles: &[f64]) -> AnchorSpec {
        AnchorSpec {
            scales: scales.to_vec(),
            ratios: ratios.to_vec(),
            angles: angles.to_vec(),
            stride: 16.0,
        }
    }

    #[test]
    fn single_template() {
        let a = cell_anchors(&spec(&[32.0], &[1.0], &[0.0])).unwrap();
        assert_eq!(a, vec![RotatedBox::new(0.0, 0.0, 32.0, 32.0, 0.0).unwrap()]);
    }

    #[test]
    fn wide_template_keeps_area() {
        let a = cell_anchors(&spec(&[64.0], &[0.25], &[90.0])).unwrap();
        assert_eq!(
            a,
            vec![RotatedBox::new(0.0, 0.0, 128.0, 32.0, 90.0).unwrap()]
        );
        assert_eq!(a[0].area(), 64.0 * 64.0);
    }

    #[test]
    fn text_profile_counts() {
        let p = AnchorSpec::text_profile();
        assert_eq!(cell_anchors(&p).unwrap().len(), 245);
        let g = grid_anchors(&p, 1, 1).unwrap();
        assert_eq!(g.len(), 245);
        assert!(g.iter().all(|a| a.cx() == 8.0 && a.cy() == 8.0));
        assert_eq!(grid_anchors(&p, 3, 2).unwrap().len(), 6 * 245);
        assert_eq!(
            cell_anchors(&AnchorSpec::full_circle_profile())
                .unwrap()
                .len(),
            5 * 7 * 12
        );
    }

    #[test]
    fn ordering_is_scale_major() {
        let a = cell_anchors(&spec(&[10.0, 20.0], &[1.0, 4.0], &[0.0, 45.0])).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!((a[0].w(), a[0].theta()), (10.0, 0.0));
        assert_eq!((a[1].w(), a[1].theta()), (10.0, 45.0));
        assert_eq!(a[2].w(), 5.0);
        assert_eq!(a[4].w(), 20.0);
    }

    #[test]
    fn grid_is_row_major() {
        let g = grid_anchors(&spec(&[8.0], &[1.0], &[0.0]), 2, 2).unwrap();
        let centers: Vec<(f64, f64)> = g.iter().map(|a| (a.cx(), a.cy())).collect();
        assert_eq!(
            centers,
            vec![(8.0, 8.0), (24.0, 8.0), (8.0, 24.0), (24.0, 24.0)]
        );
    }

    #[test]
    fn boundary_breaking_anchors_are_kept() {
        let g = grid_anchors(&AnchorSpec::text_profile(), 2, 2).unwrap();
        let (iw, ih) = (32.0, 32.0);
        let crossing = g
            .iter()
            .filter(|a| {
                let r = a.horizontal_bounding_rect();
                r.x1 < 0.0 || r.y1 < 0.0 || r.x2 > iw || r.y2 > ih
            })
            .count();
        assert!(crossing > 0);
        assert_eq!(g.len(), 4 * 245);
    }

    #[test]
    fn invalid_specs() {
        assert!(cell_anchors(&spec(&[], &[1.0], &[0.0])).is_err());
        assert!(cell_anchors(&spec(&[-1.0], &[1.0], &[0.0])).is_err());
        assert!(cell_anchors(&spec(&[1.0], &[0.0], &[0.0])).is_err());
        assert!(cell_anchors(&spec(&[1.0], &[1.0], &[-180.0])).is_err());
        let mut s = spec(&[1.0], &[1.0], &[0.0]);
        s.stride = 0.5;
        assert!(cell_anchors(&s).is_err());
        assert!(grid_anchors(&AnchorSpec::text_profile(), 0, 3).is_err());
    }

    #[test]
    fn deterministic() {
        let p = AnchorSpec::text_profile();
        assert_eq!(
            grid_anchors(&p, 4, 3).unwrap(),
            grid_anchors(&p, 4, 3).unwrap()
        );
    }

    #[test]
    fn json_shape() {
        let p: AnchorSpec =
            serde_json::from_str(r#"{"scales":[32],"ratios":[0.5],"angles":[0,90],"stride":8}"#)
                .unwrap();
        assert_eq!(p.anchors_per_cell(), 2);
    }
}
