//! Keyframe interpolation, box enlargement and zero-padded cropping.

use alloc::format;

use num_traits::Float;

use crate::image::Image;
use crate::manifest::BoundingBox;
use crate::{Error, Result};

/// Height enlargement applied to annotated boxes.
pub const HEIGHT_EXPANSION: f64 = 1.1;
/// Width enlargement applied to annotated boxes.
pub const WIDTH_EXPANSION: f64 = 1.35;

/// Box at `frame_index`, linearly interpolated between the two bracketing
/// keyframes. `keyframes` must be sorted by frame index.
pub fn interpolate_boxes(keyframes: &[BoundingBox], frame_index: u64) -> Result<BoundingBox> {
    let (Some(first), Some(last)) = (keyframes.first(), keyframes.last()) else {
        return Err(Error::EmptyInput("no keyframes"));
    };
    if frame_index < first.frame_index || frame_index > last.frame_index {
        return Err(Error::OutsideSpan {
            frame: frame_index,
            first: first.frame_index,
            last: last.frame_index,
        });
    }
    // index of the first keyframe at or after `frame_index`
    let hi = keyframes.partition_point(|k| k.frame_index < frame_index);
    let b = keyframes[hi];
    if b.frame_index == frame_index {
        return Ok(b);
    }
    let a = keyframes[hi - 1];
    let t = (frame_index - a.frame_index) as f64 / (b.frame_index - a.frame_index) as f64;
    let lerp = |p: f64, q: f64| p + (q - p) * t;
    Ok(BoundingBox {
        x_center: lerp(a.x_center, b.x_center),
        y_center: lerp(a.y_center, b.y_center),
        width: lerp(a.width, b.width),
        height: lerp(a.height, b.height),
        frame_index,
    })
}

/// Enlarges a box about its center. Clamping to the frame happens in [`crop`].
pub fn expand_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        width: b.width * WIDTH_EXPANSION,
        height: b.height * HEIGHT_EXPANSION,
        ..*b
    }
}

/// Integer pixel rectangle `(x0, y0, width, height)` covered by a box. The
/// origin may be negative when the box leaves the frame.
pub fn pixel_rect(b: &BoundingBox) -> (i64, i64, usize, usize) {
    let w = Float::round(b.width).max(1.0);
    let h = Float::round(b.height).max(1.0);
    let x0 = Float::round(b.x_center - w / 2.0) as i64;
    let y0 = Float::round(b.y_center - h / 2.0) as i64;
    (x0, y0, w as usize, h as usize)
}

/// Copies the box region out of `frame`, filling the parts outside the frame
/// with zeros.
pub fn crop<P: Copy + Default>(frame: &Image<P>, b: &BoundingBox) -> Result<Image<P>> {
    b.validate()?;
    let (x0, y0, w, h) = pixel_rect(b);
    let (fw, fh) = (frame.width() as i64, frame.height() as i64);
    if x0 >= fw || y0 >= fh || x0 + w as i64 <= 0 || y0 + h as i64 <= 0 {
        return Err(Error::NoOverlap);
    }
    let ch = frame.channels();
    let mut out = Image::new(w, h, ch);
    let sx0 = x0.max(0);
    let sx1 = (x0 + w as i64).min(fw);
    for oy in 0..h {
        let sy = y0 + oy as i64;
        if sy < 0 || sy >= fh {
            continue;
        }
        let src_start = ((sy * fw + sx0) as usize) * ch;
        let src_end = ((sy * fw + sx1) as usize) * ch;
        let dst_start = (oy * w + (sx0 - x0) as usize) * ch;
        out.data_mut()[dst_start..dst_start + (src_end - src_start)]
            .copy_from_slice(&frame.data()[src_start..src_end]);
    }
    Ok(out)
}

/// Checks that a crop target has the expected size, for callers pairing a
/// color crop with its mask crop.
pub fn ensure_same_dims<P, Q>(a: &Image<P>, b: &Image<Q>) -> Result<()>
where
    P: Copy + Default,
{
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn kf(frame: u64, x: f64) -> BoundingBox {
        BoundingBox::new(x, 50.0, 40.0, 110.0, frame).unwrap()
    }

    #[test]
    fn interpolation_examples() {
        let keys = vec![kf(0, 100.0), kf(5, 110.0)];
        assert_eq!(interpolate_boxes(&keys, 0).unwrap().x_center, 100.0);
        assert_eq!(interpolate_boxes(&keys, 5).unwrap().x_center, 110.0);
        assert!((interpolate_boxes(&keys, 2).unwrap().x_center - 104.0).abs() < 1e-12);
        let err = interpolate_boxes(&keys, 7).unwrap_err();
        assert!(err.to_string().contains("outside span"));
    }

    #[test]
    fn expansion_factors() {
        let b = BoundingBox::new(100.0, 50.0, 40.0, 110.0, 3).unwrap();
        let e = expand_box(&b);
        assert!((e.width - 54.0).abs() < 1e-9);
        assert!((e.height - 121.0).abs() < 1e-9);
        assert_eq!(e.center(), (100.0, 50.0));
        assert_eq!(e.frame_index, 3);
    }

    fn ramp() -> Image<u8> {
        Image::from_fn(20, 10, 1, |x, y, _| (y * 20 + x) as u8)
    }

    #[test]
    fn crop_inside_is_exact_subimage() {
        let f = ramp();
        // covers x in [4, 10), y in [2, 6)
        let b = BoundingBox::new(7.0, 4.0, 6.0, 4.0, 0).unwrap();
        let c = crop(&f, &b).unwrap();
        assert_eq!(c.dims(), (6, 4));
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(c.get(x, y, 0), f.get(x + 4, y + 2, 0));
            }
        }
    }

    #[test]
    fn crop_above_top_edge_pads_rows() {
        let f = Image::from_fn(20, 10, 1, |_, _, _| 9u8);
        // y range [-10, 4)
        let b = BoundingBox::new(10.0, -3.0, 4.0, 14.0, 0).unwrap();
        let c = crop(&f, &b).unwrap();
        assert_eq!(c.dims(), (4, 14));
        for y in 0..14 {
            let expect = if y < 10 { 0 } else { 9 };
            assert!((0..4).all(|x| c.get(x, y, 0) == expect), "row {y}");
        }
    }

    #[test]
    fn crop_outside_fails() {
        let b = BoundingBox::new(100.0, 100.0, 4.0, 4.0, 0).unwrap();
        assert_eq!(crop(&ramp(), &b), Err(Error::NoOverlap));
    }
}
