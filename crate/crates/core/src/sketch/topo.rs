use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::{Array2, Array3, Axis};

use super::mask::Mask;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Ridge lines.
    Red = 0,
    /// Level-set contours.
    Green = 1,
    /// Valley lines.
    Blue = 2,
}

/// Binary three-channel sketch. Ridge and valley never share a pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoMap {
    red: Mask,
    green: Mask,
    blue: Mask,
}

/// Merge the three masks; pixels claimed by both ridge and valley are
/// cleared in both.
pub fn compose_topo_map(ridge: &Mask, levels: &Mask, valley: &Mask) -> Result<TopoMap> {
    for other in [levels, valley] {
        if other.dim() != ridge.dim() {
            return Err(CoreError::ShapeMismatch {
                left: ridge.dim(),
                right: other.dim(),
            });
        }
    }
    let conflict = Array2::from_shape_fn(ridge.dim(), |i| ridge[i] && valley[i]);
    Ok(TopoMap {
        red: Array2::from_shape_fn(ridge.dim(), |i| ridge[i] && !conflict[i]),
        green: levels.clone(),
        blue: Array2::from_shape_fn(ridge.dim(), |i| valley[i] && !conflict[i]),
    })
}

impl TopoMap {
    pub fn empty(rows: usize, cols: usize) -> Self {
        let m = Array2::from_elem((rows, cols), false);
        Self {
            red: m.clone(),
            green: m.clone(),
            blue: m,
        }
    }

    pub fn channel(&self, ch: Channel) -> &Mask {
        match ch {
            Channel::Red => &self.red,
            Channel::Green => &self.green,
            Channel::Blue => &self.blue,
        }
    }

    pub fn ridge(&self) -> &Mask {
        &self.red
    }

    pub fn levels(&self) -> &Mask {
        &self.green
    }

    pub fn valley(&self) -> &Mask {
        &self.blue
    }

    pub fn dim(&self) -> (usize, usize) {
        self.red.dim()
    }

    pub fn is_blank(&self) -> bool {
        ![&self.red, &self.green, &self.blue]
            .iter()
            .any(|m| m.iter().any(|&b| b))
    }

    /// Channels as 0/1 reals.
    pub fn to_field(&self) -> TopoField {
        let (rows, cols) = self.dim();
        let data = Array3::from_shape_fn((3, rows, cols), |(ch, r, c)| {
            let m = [&self.red, &self.green, &self.blue][ch];
            if m[[r, c]] {
                1.0
            } else {
                0.0
            }
        });
        TopoField { data }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        self.to_field().to_rgb8()
    }

    /// Channels are on where the 8-bit value is at least 128.
    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        TopoField::from_rgb8(img).binarize(0.5)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_rgb(&self.to_rgb8(), path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_rgb8(&load_rgb(path.as_ref())?)
    }
}

/// Real-valued sketch, `(channel, row, col)` with channel order R, G, B and
/// values in `[0, 1]`. Network inputs and reconstructions use this form.
#[derive(Debug, Clone, PartialEq)]
pub struct TopoField {
    data: Array3<f32>,
}

impl TopoField {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.dim().0 != 3 {
            return Err(CoreError::InvalidGrid(format!(
                "sketch needs 3 channels, got {}",
                data.dim().0
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::InvalidGrid("sketch values must lie in [0, 1]".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        let (_, r, c) = self.data.dim();
        (r, c)
    }

    pub fn channel(&self, ch: Channel) -> ndarray::ArrayView2<'_, f32> {
        self.data.index_axis(Axis(0), ch as usize)
    }

    /// Threshold every channel; ridge/valley conflicts are cleared.
    pub fn binarize(&self, threshold: f32) -> Result<TopoMap> {
        let mask = |ch: Channel| self.channel(ch).mapv(|v| v >= threshold);
        compose_topo_map(&mask(Channel::Red), &mask(Channel::Green), &mask(Channel::Blue))
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (rows, cols) = self.dim();
        RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
            let px = |ch: usize| (self.data[[ch, y as usize, x as usize]] * 255.0).round() as u8;
            Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((3, h as usize, w as usize), |(ch, r, c)| {
            img.get_pixel(c as u32, r as u32)[ch] as f32 / 255.0
        });
        Self { data }
    }

    /// Nearest-neighbor resize, keeping each channel's values untouched.
    pub fn resize_nearest(&self, rows: usize, cols: usize) -> Self {
        let (h, w) = self.dim();
        if (h, w) == (rows, cols) {
            return self.clone();
        }
        let data = Array3::from_shape_fn((3, rows, cols), |(ch, r, c)| {
            let sr = (r * h / rows).min(h - 1);
            let sc = (c * w / cols).min(w - 1);
            self.data[[ch, sr, sc]]
        });
        Self { data }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_rgb(&self.to_rgb8(), path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_rgb8(&load_rgb(path.as_ref())?))
    }
}

fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
        }
    }
    img.save(path).map_err(|source| CoreError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Any readable image is converted to 8-bit RGB; alpha is dropped.
fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| CoreError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(n: usize, on: &[(usize, usize)]) -> Mask {
        let mut m = Array2::from_elem((n, n), false);
        for &p in on {
            m[p] = true;
        }
        m
    }

    #[test]
    fn empty_masks_compose_to_black() {
        let e = mask(4, &[]);
        let t = compose_topo_map(&e, &e, &e).unwrap();
        assert!(t.is_blank());
        assert!(t.to_rgb8().pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn ridge_only_map() {
        let e = mask(4, &[]);
        let t = compose_topo_map(&mask(4, &[(1, 1), (1, 2)]), &e, &e).unwrap();
        assert!(!t.levels().iter().any(|&b| b));
        assert!(!t.valley().iter().any(|&b| b));
        assert_eq!(t.to_rgb8().get_pixel(1, 1).0, [255, 0, 0]);
    }

    #[test]
    fn conflicting_pixel_is_cleared() {
        let e = mask(4, &[]);
        let t = compose_topo_map(&mask(4, &[(2, 2), (0, 0)]), &e, &mask(4, &[(2, 2), (3, 3)])).unwrap();
        assert!(!t.ridge()[[2, 2]] && !t.valley()[[2, 2]]);
        assert!(t.ridge()[[0, 0]] && t.valley()[[3, 3]]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(compose_topo_map(&mask(4, &[]), &mask(5, &[]), &mask(4, &[])).is_err());
    }

    #[test]
    fn green_only_image_reads_red_blue_as_zero() {
        let mut img = RgbImage::new(8, 8);
        img.put_pixel(3, 4, Rgb([0, 255, 0]));
        let t = TopoMap::from_rgb8(&img).unwrap();
        assert!(t.levels()[[4, 3]]);
        assert!(!t.ridge().iter().any(|&b| b) && !t.valley().iter().any(|&b| b));
    }

    #[test]
    fn rgb_round_trip() {
        let t = compose_topo_map(
            &mask(6, &[(0, 1)]),
            &mask(6, &[(2, 2), (0, 1)]),
            &mask(6, &[(5, 5)]),
        )
        .unwrap();
        assert_eq!(TopoMap::from_rgb8(&t.to_rgb8()).unwrap(), t);
    }

    #[test]
    fn nearest_resize_keeps_values() {
        let t = compose_topo_map(&mask(4, &[(1, 1)]), &mask(4, &[]), &mask(4, &[])).unwrap();
        let big = t.to_field().resize_nearest(8, 8);
        assert!(big.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(big.data()[[0, 2, 2]], 1.0);
        assert_eq!(big.data()[[0, 3, 3]], 1.0);
        assert_eq!(big.data()[[0, 4, 4]], 0.0);
    }
}
