//! Binary PGM (P5) and PPM (P6) images with 16-bit samples.

use std::path::Path;

use geomkit_core::dataset::{Image, ImageShape};

use crate::error::{KitError, Result};

const MAXVAL: f64 = 65535.0;

pub fn encode(image: &Image) -> Result<Vec<u8>> {
    let s = image.shape();
    let magic = match s.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(KitError::Config(format!("PNM needs 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n65535\n", s.width, s.height).into_bytes();
    let plane = s.height * s.width;
    let data = image.as_slice();
    for p in 0..plane {
        for c in 0..s.channels {
            let v = (data[c * plane + p].clamp(0.0, 1.0) * MAXVAL).round() as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
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
    if start == *pos {
        return Err(KitError::format(path, "truncated PNM header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| KitError::format(path, "non-ASCII PNM header"))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos, path)? {
        "P5" => 1,
        "P6" => 3,
        m => return Err(KitError::format(path, format!("unsupported PNM magic {m:?}"))),
    };
    let num = |pos: &mut usize| -> Result<usize> {
        header_token(bytes, pos, path)?
            .parse()
            .map_err(|_| KitError::format(path, "bad PNM header number"))
    };
    let width = num(&mut pos)?;
    let height = num(&mut pos)?;
    let maxval = num(&mut pos)?;
    if maxval == 0 || maxval > 65535 {
        return Err(KitError::format(path, format!("bad PNM maxval {maxval}")));
    }
    pos += 1;
    let wide = maxval > 255;
    let shape = ImageShape::new(channels, height, width);
    let plane = height * width;
    let per = if wide { 2 } else { 1 };
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != shape.len() * per {
        return Err(KitError::format(
            path,
            format!("PNM body has {} bytes, expected {}", body.len(), shape.len() * per),
        ));
    }
    let mut data = vec![0.0; shape.len()];
    for p in 0..plane {
        for c in 0..channels {
            let k = (p * channels + c) * per;
            let v = if wide {
                u16::from_be_bytes([body[k], body[k + 1]]) as f64
            } else {
                body[k] as f64
            };
            data[c * plane + p] = v / maxval as f64;
        }
    }
    Ok(Image::from_vec(shape, data)?)
}

pub fn write(path: &Path, image: &Image) -> Result<()> {
    super::write(path, &encode(image)?)
}

pub fn read(path: &Path) -> Result<Image> {
    decode(&super::read(path)?, path)
}

/// `frame_000.pgm`, `frame_001.ppm`, ...
pub fn frame_name(index: usize, channels: usize) -> String {
    format!("frame_{index:03}.{}", if channels == 3 { "ppm" } else { "pgm" })
}
