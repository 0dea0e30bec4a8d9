//! Raw little-endian arrays with JSON sidecars, and 16-bit PGM heatmaps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// `foo.f64` -> `foo.f64.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_f64_le(path: &Path, data: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    decode(&fs::read(path)?, f64::from_le_bytes)
}

pub fn write_f32_le(path: &Path, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32_le(path: &Path) -> Result<Vec<f32>> {
    decode(&fs::read(path)?, f32::from_le_bytes)
}

pub fn write_u16_le(path: &Path, data: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_u16_le(path: &Path) -> Result<Vec<u16>> {
    decode(&fs::read(path)?, u16::from_le_bytes)
}

fn decode<T, const N: usize>(bytes: &[u8], f: fn([u8; N]) -> T) -> Result<Vec<T>> {
    if bytes.len() % N != 0 {
        return Err(Error::Dimension(format!(
            "{} bytes is not a multiple of the {N}-byte element size",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(N)
        .map(|c| f(c.try_into().expect("chunk length")))
        .collect())
}

/// Binary 16-bit PGM with a linear min-max mapping. A constant image maps
/// to all zeros.
pub fn write_pgm16(path: &Path, map: &Array2<f64>) -> Result<()> {
    let (rows, cols) = map.dim();
    let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    for v in map.iter() {
        let q = ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16;
        w.write_all(&q.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f64");
        let data = vec![1.0, -2.5, f64::MIN_POSITIVE, 1e300];
        write_f64_le(&p, &data).unwrap();
        assert_eq!(read_f64_le(&p).unwrap(), data);
        assert_eq!(fs::read(&p).unwrap()[..8], 1.0f64.to_le_bytes());
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f64");
        fs::write(&p, [0u8; 12]).unwrap();
        assert!(read_f64_le(&p).is_err());
    }

    #[test]
    fn pgm_is_min_max_linear() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let m = Array2::from_shape_vec((1, 3), vec![2.0, 3.0, 4.0]).unwrap();
        write_pgm16(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let px: Vec<u16> = bytes[header.len()..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(px, vec![0, 32768, 65535]);
    }

    #[test]
    fn sidecar_appends_json() {
        assert_eq!(
            sidecar_path(Path::new("x/map.f64")),
            PathBuf::from("x/map.f64.json")
        );
    }
}
