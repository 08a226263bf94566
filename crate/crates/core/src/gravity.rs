//! Inverse row-intensity profiles.
//!
//! For a grayscale drawing resized to height `h`, entry `j` of the profile
//! is `255 - mean(row j)`: zero for blank paper, 255 for a fully inked row.
//! Entry 0 is the top row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::GroupKey;
use crate::imaging::{GrayImage, ImagingError, Resample};
use crate::par::pairwise_sum;

/// Default profile height.
pub const DEFAULT_HEIGHT: usize = 200;

#[derive(Debug, Error)]
pub enum GravityError {
    #[error("empty image")]
    EmptyImage,
    #[error("profile height must be positive")]
    ZeroHeight,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("no profiles to average")]
    Empty,
    #[error("profile lengths differ: {0} vs {1}")]
    MixedLengths(usize, usize),
    #[error("blank profile: no content")]
    Blank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    values: Vec<f64>,
}

impl IntensityProfile {
    /// Wraps raw values, clamping each into `[0, 255]`.
    pub fn new(values: Vec<f64>) -> Self {
        IntensityProfile {
            values: values.into_iter().map(|v| v.clamp(0.0, 255.0)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupProfile {
    pub key: GroupKey,
    pub mean: Vec<f64>,
    pub n: usize,
}

impl GroupProfile {
    pub fn as_profile(&self) -> IntensityProfile {
        IntensityProfile::new(self.mean.clone())
    }
}

pub fn intensity_profile(img: &GrayImage, h: usize) -> Result<IntensityProfile, GravityError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(GravityError::EmptyImage);
    }
    if h == 0 {
        return Err(GravityError::ZeroHeight);
    }
    let scaled = img.resize_to_height(h)?;
    let w = scaled.width() as f64;
    let values = (0..h).map(|y| 255.0 - pairwise_sum(scaled.row(y)) / w).collect();
    Ok(IntensityProfile::new(values))
}

/// Elementwise mean of equally long profiles.
pub fn group_profile(profiles: &[IntensityProfile], key: GroupKey) -> Result<GroupProfile, GravityError> {
    let first = profiles.first().ok_or(GravityError::Empty)?;
    let h = first.height();
    if let Some(p) = profiles.iter().find(|p| p.height() != h) {
        return Err(GravityError::MixedLengths(h, p.height()));
    }
    let n = profiles.len();
    let mut column = vec![0.0; n];
    let mean = (0..h)
        .map(|j| {
            for (c, p) in column.iter_mut().zip(profiles) {
                *c = p.values[j];
            }
            (pairwise_sum(&column) / n as f64).clamp(0.0, 255.0)
        })
        .collect();
    Ok(GroupProfile { key, mean, n })
}

/// Mean profile value as a fraction of full ink.
pub fn colored_proportion(profile: &IntensityProfile) -> f64 {
    if profile.values.is_empty() {
        return 0.0;
    }
    pairwise_sum(&profile.values) / profile.values.len() as f64 / 255.0
}

/// Vertical centre of mass in `[0, 1)`, measured from the top as `j / h`.
/// Values below one half mean the ink sits above the page centre.
pub fn gravity_row(profile: &IntensityProfile) -> Result<f64, GravityError> {
    let h = profile.height() as f64;
    let total = pairwise_sum(&profile.values);
    if total <= 0.0 {
        return Err(GravityError::Blank);
    }
    let weighted: Vec<f64> = profile
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| j as f64 / h * v)
        .collect();
    Ok(pairwise_sum(&weighted) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GroupDimension;

    fn key() -> GroupKey {
        GroupKey::new(GroupDimension::Country, "CH")
    }

    fn half_black() -> GrayImage {
        GrayImage::from_fn(6, 8, |_, y| if y < 4 { 0.0 } else { 255.0 })
    }

    #[test]
    fn blank_and_saturated_profiles() {
        let white = GrayImage::from_fn(10, 10, |_, _| 255.0);
        let p = intensity_profile(&white, 4).unwrap();
        assert_eq!(p.values(), &[0.0; 4]);
        assert_eq!(colored_proportion(&p), 0.0);
        assert!(matches!(gravity_row(&p), Err(GravityError::Blank)));

        let black = GrayImage::from_fn(10, 10, |_, _| 0.0);
        let p = intensity_profile(&black, 4).unwrap();
        assert_eq!(p.values(), &[255.0; 4]);
        assert_eq!(colored_proportion(&p), 1.0);
    }

    #[test]
    fn top_half_black() {
        let p = intensity_profile(&half_black(), 4).unwrap();
        assert_eq!(p.values(), &[255.0, 255.0, 0.0, 0.0]);
        assert_eq!(colored_proportion(&p), 0.5);
        // (0/4*255 + 1/4*255) / 510
        assert_eq!(gravity_row(&p).unwrap(), 0.125);
    }

    #[test]
    fn gravity_row_reference_cases() {
        let top = IntensityProfile::new(vec![255.0, 0.0, 0.0, 0.0]);
        assert_eq!(gravity_row(&top).unwrap(), 0.0);
        let h = 10;
        let uniform = IntensityProfile::new(vec![40.0; h]);
        let expected = (h as f64 - 1.0) / (2.0 * h as f64);
        assert!((gravity_row(&uniform).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn group_means() {
        let a = IntensityProfile::new(vec![1.0, 2.0, 3.0]);
        let g = group_profile(&[a.clone(), a.clone()], key()).unwrap();
        assert_eq!(g.mean, a.values());
        assert_eq!(g.n, 2);

        let lo = IntensityProfile::new(vec![0.0; 5]);
        let hi = IntensityProfile::new(vec![255.0; 5]);
        assert_eq!(group_profile(&[lo, hi], key()).unwrap().mean, vec![127.5; 5]);

        let ps = [
            IntensityProfile::new(vec![10.0, 200.0, 33.0, 0.0]),
            IntensityProfile::new(vec![20.0, 100.0, 66.0, 255.0]),
            IntensityProfile::new(vec![60.0, 0.0, 99.0, 0.0]),
        ];
        // Column sums by hand: 90, 300, 198, 255.
        let g = group_profile(&ps, key()).unwrap();
        let expected = [30.0, 100.0, 66.0, 85.0];
        for (m, e) in g.mean.iter().zip(expected) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn group_profile_errors() {
        assert!(matches!(group_profile(&[], key()), Err(GravityError::Empty)));
        let r = group_profile(
            &[IntensityProfile::new(vec![0.0; 3]), IntensityProfile::new(vec![0.0; 4])],
            key(),
        );
        assert!(matches!(r, Err(GravityError::MixedLengths(3, 4))));
    }

    #[test]
    fn vertical_flip_antisymmetry() {
        let img = GrayImage::from_fn(30, 40, |x, y| ((x * 7 + y * y * 3) % 256) as f64);
        let h = 20;
        let g = gravity_row(&intensity_profile(&img, h).unwrap()).unwrap();
        let gf = gravity_row(&intensity_profile(&img.flip_vertical(), h).unwrap()).unwrap();
        assert!((gf - ((h as f64 - 1.0) / h as f64 - g)).abs() < 1e-9);
    }
}
