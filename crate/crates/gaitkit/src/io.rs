//! PNG and JSON helpers. Every writer goes through a temporary file and a
//! rename, so readers never observe half-written files.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use gaitkit_core::image::{Image, Mask};
use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, ImageReader, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{format_error, IoContext};
use crate::Result;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).at(tmp)?;
    fs::rename(tmp, path).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).at(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).at(path)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn encode(path: &Path, image: &DynamicImage) -> Result<()> {
    let mut bytes = Cursor::new(Vec::new());
    image.write_to(&mut bytes, ImageFormat::Png).at(path)?;
    write_atomic(path, bytes.get_ref())
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let mut reader = ImageReader::open(path).at(path)?;
    reader.set_format(ImageFormat::Png);
    reader.decode().at(path)
}

/// 8-bit grayscale PNG with foreground at 255.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = mask.dims();
    let data = mask.mask_to_u8().into_vec();
    let img = GrayImage::from_raw(w as u32, h as u32, data).ok_or_else(|| format_error(path, "mask is not single-channel"))?;
    encode(path, &DynamicImage::ImageLuma8(img))
}

/// Any PNG, thresholded at 128 into a 0/1 mask.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = decode(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Image::from_vec(w as usize, h as usize, 1, img.into_raw())?.to_mask())
}

/// 1-channel or 3-channel 8-bit image.
pub fn write_image_png(path: &Path, image: &Image<u8>) -> Result<()> {
    let (w, h) = image.dims();
    let data = image.data().to_vec();
    let dynamic = match image.channels() {
        1 => GrayImage::from_raw(w as u32, h as u32, data).map(DynamicImage::ImageLuma8),
        3 => RgbImage::from_raw(w as u32, h as u32, data).map(DynamicImage::ImageRgb8),
        c => return Err(format_error(path, format!("cannot store a {c}-channel image"))),
    };
    encode(path, &dynamic.expect("buffer length matches dimensions"))
}

/// Decodes any supported image file as 3-channel RGB.
pub fn read_rgb(path: &Path) -> Result<Image<u8>> {
    let img = ImageReader::open(path).at(path)?.with_guessed_format().at(path)?.decode().at(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Image::from_vec(w as usize, h as usize, 3, img.into_raw())?)
}

/// 16-bit grayscale PNG.
pub fn write_png16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, data.to_vec())
        .ok_or_else(|| format_error(path, "pixel count does not match dimensions"))?;
    encode(path, &DynamicImage::ImageLuma16(img))
}

pub fn read_png16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let img = decode(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mask = Image::from_fn(7, 5, 1, |x, y, _| u8::from((x + y) % 3 == 0));
        let p = dir.path().join("m.png");
        write_mask_png(&p, &mask).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), mask);

        let data: Vec<u16> = (0..12).map(|v| v * 5000).collect();
        let p = dir.path().join("g.png16");
        write_png16(&p, 4, 3, &data).unwrap();
        assert_eq!(read_png16(&p).unwrap(), (4, 3, data));

        let rgb = Image::from_fn(3, 2, 3, |x, y, c| (x * 40 + y * 7 + c) as u8);
        let p = dir.path().join("c.png");
        write_image_png(&p, &rgb).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), rgb);
    }
}
