//! Binary portable pixmap (P6) reading and writing.

use std::io::Write;
use std::path::Path;

use super::RgbImage;
use crate::{Error, Result};

fn next_token(data: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

pub fn decode_ppm(data: &[u8]) -> Result<RgbImage> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos).ok_or_else(|| Error::parse(1, "missing PPM magic"))?;
    if magic != "P6" {
        return Err(Error::parse(1, format!("unsupported PPM magic {magic:?}")));
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(data, &mut pos)
            .ok_or_else(|| Error::parse(1, format!("missing PPM {name}")))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(1, format!("bad PPM {name} {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(1, format!("unsupported PPM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let needed = width * height * 3;
    let raster = data
        .get(pos..pos + needed)
        .ok_or_else(|| Error::parse(1, "truncated PPM raster"))?;
    let pixels = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&c| ((c as usize * 255 + maxval / 2) / maxval).min(255) as u8)
            .collect()
    };
    RgbImage::new(width, height, pixels)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&data)
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(image))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_header_with_comment() {
        let mut data = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_ppm(&data).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn roundtrip() {
        let img = RgbImage::new(2, 2, (0..12).collect()).unwrap();
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn rejects_ascii_and_truncated() {
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0\n").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00\x00").is_err());
    }
}
