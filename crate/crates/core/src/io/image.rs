use std::path::Path;

use super::IoError;
use crate::render::Film;

/// Portable float map bytes: little-endian, bottom row first.
pub fn pfm_to_bytes(film: &Film) -> Vec<u8> {
    let (w, h) = film.dims();
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for y in (0..h).rev() {
        for v in &film.pixels()[3 * w * y..3 * w * (y + 1)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a colour PFM. A positive scale marks big-endian data.
pub fn pfm_from_bytes(bytes: &[u8]) -> Result<Film, String> {
    // Four whitespace-separated header tokens, then a single whitespace byte.
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "PF" {
        return Err(format!("unsupported magic '{magic}' (only colour 'PF' maps)"));
    }
    let w: usize = token()?.parse().map_err(|_| "bad width".to_string())?;
    let h: usize = token()?.parse().map_err(|_| "bad height".to_string())?;
    let scale: f64 = token()?.parse().map_err(|_| "bad scale".to_string())?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("scale must be non-zero".into());
    }
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(12)).ok_or("image too large")?;
    if data.len() < need {
        return Err(format!("expected {need} payload bytes, found {}", data.len()));
    }
    let little = scale < 0.0;
    let mut pixels = vec![0f32; w * h * 3];
    for (i, chunk) in data[..need].chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, rest) = (i / (3 * w), i % (3 * w));
        pixels[3 * w * (h - 1 - row) + rest] = v;
    }
    Ok(Film::from_pixels(w, h, pixels))
}

pub fn write_pfm(film: &Film, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, pfm_to_bytes(film)).map_err(|e| IoError::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Film, IoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    pfm_from_bytes(&bytes).map_err(|m| IoError::parse(path, m))
}

/// sRGB transfer function on a value clamped to `[0, 1]`, as an 8-bit code.
pub fn srgb_encode(linear: f64) -> u8 {
    let v = if linear.is_nan() { 0.0 } else { linear.clamp(0.0, 1.0) };
    let s = if v <= 0.0031308 { 12.92 * v } else { 1.055 * v.powf(1.0 / 2.4) - 0.055 };
    (s * 255.0).round() as u8
}

/// 8-bit preview: `clamp(linear * 2^exposure)`, sRGB encoded.
pub fn write_png_preview(film: &Film, path: impl AsRef<Path>, exposure: f64) -> Result<(), IoError> {
    let path = path.as_ref();
    let gain = exposure.exp2();
    let bytes: Vec<u8> = film.pixels().iter().map(|&v| srgb_encode(v as f64 * gain)).collect();
    let img = image::RgbImage::from_raw(film.width() as u32, film.height() as u32, bytes)
        .ok_or_else(|| IoError::parse(path, "film buffer does not match its size"))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| IoError::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_payload_and_round_trip() {
        let film = Film::from_pixels(1, 1, vec![0.5, 0.25, 1.0]);
        let bytes = pfm_to_bytes(&film);
        let header = b"PF\n1 1\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len() - header.len(), 12);
        assert_eq!(pfm_from_bytes(&bytes).unwrap().pixels(), film.pixels());
    }

    #[test]
    fn srgb_codes() {
        assert_eq!(srgb_encode(0.0), 0);
        assert_eq!(srgb_encode(1.0), 255);
        assert_eq!(srgb_encode(0.5), 188);
        assert_eq!(srgb_encode(7.0), 255);
    }
}
