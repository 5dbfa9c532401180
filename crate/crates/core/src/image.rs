//! Grayscale image buffer and the 8-bit binary PGM (P5) codec.

use crate::error::{Error, Result};

/// Row-major `height x width` grayscale image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::Dimension(format!("{width}x{height} image needs {} pixels, got {}", width * height, data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Clamps into `[0, 1]` (NaN becomes 0) and returns the largest pixel shift.
    pub fn clamp_unit(&mut self) -> f64 {
        let mut shift = 0.0f64;
        for v in &mut self.data {
            let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            shift = shift.max(if v.is_nan() { f64::INFINITY } else { (c - *v).abs() });
            *v = c;
        }
        shift
    }
}

pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Decodes a binary 8-bit PGM; samples map to `v / maxval` (`v / 255` for ordinary files).
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut header = [0usize; 3];
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::Format("empty PGM".into()))?;
    if magic != b"P5" {
        return Err(Error::Format(format!("not a binary PGM (magic {:?})", String::from_utf8_lossy(magic))));
    }
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::Format(format!("PGM header missing {name}")))?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("PGM {name} is not a number")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM has zero size".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PGM supported (maxval {maxval})")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width.checked_mul(height).ok_or_else(|| Error::Format("PGM size overflow".into()))?;
    let raster = bytes.get(pos..pos + n).ok_or_else(|| Error::Format("PGM raster truncated".into()))?;
    let scale = maxval as f64;
    Image::new(width, height, raster.iter().map(|&b| f64::from(b) / scale).collect())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_byte_mapping() {
        let mut bytes = b"P5\n# comment\n3 1\n255\n".to_vec();
        bytes.extend([0u8, 128, 255]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (1, 3));
        assert_eq!(img.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn pgm_round_trip_through_bytes() {
        let data: Vec<f64> = (0..=255).map(|v| v as f64 / 255.0).collect();
        let img = Image::new(16, 16, data).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_other_payloads() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"\x89PNG\r\n").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn clamp_reports_shift() {
        let mut img = Image::new(3, 1, vec![-0.5, 0.5, 1.002]).unwrap();
        let shift = img.clamp_unit();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
        assert!((shift - 0.5).abs() < 1e-12);
    }
}
