//! Density-map files.
//!
//! * 16-bit grayscale PNG, pixel value `round(65535 * density)`.
//! * Raw: the ASCII magic `FPDM`, little-endian `u32` width and height, then
//!   `width * height` little-endian `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use floorplan_core::data::DensityMap;

use crate::error::{Error, Result};

const RAW_MAGIC: &[u8; 4] = b"FPDM";

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::Density {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn check_values(map: &DensityMap, path: &Path) -> Result<()> {
    if map.values.len() != map.width * map.height {
        return Err(bad(path, "value count does not match the dimensions"));
    }
    if let Some(v) = map.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(bad(path, format!("value {v} outside [0, 1]")));
    }
    Ok(())
}

pub fn write_png16(map: &DensityMap, path: &Path) -> Result<()> {
    check_values(map, path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), map.width as u32, map.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| bad(path, e.to_string()))?;
    let data: Vec<u8> = map
        .values
        .iter()
        .flat_map(|v| ((*v as f64 * 65535.0).round() as u16).to_be_bytes())
        .collect();
    writer.write_image_data(&data).map_err(|e| bad(path, e.to_string()))?;
    writer.finish().map_err(|e| bad(path, e.to_string()))
}

pub fn read_png16(path: &Path) -> Result<DensityMap> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| bad(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(bad(
            path,
            format!("expected 16-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| bad(path, e.to_string()))?;
    let values = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0) as f32)
        .collect();
    Ok(DensityMap {
        width: w,
        height: h,
        values,
    })
}

pub fn write_raw(map: &DensityMap, path: &Path) -> Result<()> {
    check_values(map, path)?;
    let mut bytes = Vec::with_capacity(12 + 4 * map.values.len());
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&(map.width as u32).to_le_bytes());
    bytes.extend_from_slice(&(map.height as u32).to_le_bytes());
    for v in &map.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<DensityMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != RAW_MAGIC {
        return Err(bad(path, "not a raw density map (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (w, h) = (word(4), word(8));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| bad(path, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(bad(path, format!("expected {expected} bytes for {w}x{h}, found {}", bytes.len())));
    }
    let values: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let map = DensityMap {
        width: w,
        height: h,
        values,
    };
    check_values(&map, path)?;
    Ok(map)
}

/// Reads either format, chosen by extension (`.png`, otherwise raw).
pub fn read_density(path: &Path) -> Result<DensityMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => read_png16(path),
        _ => read_raw(path),
    }
}

pub fn write_density(map: &DensityMap, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => write_png16(map, path),
        _ => write_raw(map, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DensityMap {
        let values = (0..12).map(|i| i as f32 / 11.0).collect();
        DensityMap {
            width: 4,
            height: 3,
            values,
        }
    }

    #[test]
    fn png_quantizes_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let map = sample();
        write_png16(&map, &p).unwrap();
        let back = read_png16(&p).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        for (a, b) in map.values.iter().zip(&back.values) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
        }
        assert_eq!(back.values[11], 1.0);
    }

    #[test]
    fn raw_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.fpdm");
        let map = sample();
        write_raw(&map, &p).unwrap();
        assert_eq!(read_raw(&p).unwrap(), map);
        std::fs::write(&p, b"nope").unwrap();
        assert!(read_raw(&p).is_err());
    }
}
