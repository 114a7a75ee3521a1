use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::io::write_atomic;
use crate::geom::Vec3;
use crate::{Error, Result};

/// Pinhole intrinsics. Camera frame: x right, y down, z forward. Pixel
/// `(u, v)` covers `[u, u+1) × [v, v+1)`; rays pass through its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }
}

impl Intrinsics {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Ray direction through the pixel centre, scaled so that its z is 1:
    /// a hit at parameter `t` has depth `t`.
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    pub fn backproject(&self, u: usize, v: usize, depth: f64) -> Vec3 {
        self.ray(u, v) * depth
    }

    /// Pixel containing the projection of `p`, if in front and in view.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).floor();
        let v = (self.fy * p.y / p.z + self.cy).floor();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

/// Row-major depth in metres; 0 means no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub intrinsics: Intrinsics,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(intrinsics: Intrinsics) -> Self {
        Self {
            data: vec![0.0; intrinsics.pixels()],
            intrinsics,
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.intrinsics.width + u]
    }

    /// Writes a little-endian single-channel PFM (rows bottom to top).
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &pfm_bytes(&self.data, self.intrinsics.width, self.intrinsics.height))
    }
}

pub fn pfm_bytes(data: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * data.len());
    write!(out, "Pf\n{width} {height}\n-1.0\n").expect("write to vec");
    for v in (0..height).rev() {
        for u in 0..width {
            out.extend_from_slice(&(data[v * width + u] as f32).to_le_bytes());
        }
    }
    out
}

/// Reads a single-channel PFM into row-major top-to-bottom order.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::parse(path, 0, msg.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("only single-channel PFM is supported"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad PFM scale"))?;
    let little = scale < 0.0;
    let need = width * height * 4;
    if bytes.len() < pos + need {
        return Err(bad("truncated PFM data"));
    }
    let mut data = vec![0.0; width * height];
    for (k, chunk) in bytes[pos..pos + need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, u) = (k / width, k % width);
        data[(height - 1 - row_from_bottom) * width + u] = f64::from(x);
    }
    Ok((width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_inverts_backproject() {
        let k = Intrinsics::default();
        for (u, v) in [(0, 0), (319, 239), (160, 120), (17, 200)] {
            let p = k.backproject(u, v, 0.7);
            assert_eq!(k.project(&p), Some((u, v)));
            assert!((p.z - 0.7).abs() < 1e-15);
        }
        assert_eq!(k.project(&Vec3::new(0.0, 0.0, -1.0)), None);
    }

    #[test]
    fn pfm_round_trip() {
        let k = Intrinsics {
            width: 3,
            height: 2,
            ..Default::default()
        };
        let img = DepthImage {
            intrinsics: k,
            data: vec![0.0, 0.5, 1.0, 1.5, 2.0, 0.25],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        img.write_pfm(&p).unwrap();
        let (w, h, data) = read_pfm(&p).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(data, img.data);
    }
}
