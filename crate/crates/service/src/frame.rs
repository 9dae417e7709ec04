//! Binary geometry frames.
//!
//! Little-endian throughout. Layout:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `TRGF` |
//! | 4 | 2 | version, currently 1 |
//! | 6 | 2 | flags, bit 0 set when a scalar field follows the indices |
//! | 8 | 8 | revision (u64) |
//! | 16 | 4 | vertex count `V` (u32) |
//! | 20 | 4 | index count `I` (u32, a multiple of 3) |
//! | 24 | 4 | scalar count `S` (u32, 0 or `V`) |
//! | 28 | 4 | reserved, zero |
//! | 32 | 12 V | vertices, f32 x y z |
//! | .. | 4 I | triangle indices, u32 |
//! | .. | 4 S | per-vertex scalars, f32 |
//! | end-4 | 4 | CRC-32 (IEEE) of every preceding byte |

use tetreg::geom::Point3;
use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = *b"TRGF";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 32;
pub const FLAG_SCALARS: u16 = 1;
pub const FRAME_CONTENT_TYPE: &str = "application/x-tetreg-geometry";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame too short: {0} bytes")]
    TooShort(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u16),
    #[error("frame length {actual} does not match header ({expected})")]
    Length { expected: usize, actual: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    Header(String),
}

/// Vertex buffer, optional triangle indices and optional per-vertex scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct WireGeometry {
    pub revision: u64,
    pub vertices: Vec<[f32; 3]>,
    pub indices: Vec<u32>,
    pub scalars: Option<Vec<f32>>,
}

impl WireGeometry {
    pub fn from_points(revision: u64, points: &[Point3]) -> Self {
        WireGeometry {
            revision,
            vertices: points.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
            indices: Vec::new(),
            scalars: None,
        }
    }

    pub fn with_triangles(mut self, triangles: &[[usize; 3]]) -> Self {
        self.indices = triangles.iter().flatten().map(|&i| i as u32).collect();
        self
    }

    pub fn with_scalars(mut self, values: &[f64]) -> Self {
        self.scalars = Some(values.iter().map(|&v| v as f32).collect());
        self
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + 12 * self.vertices.len() + 4 * self.indices.len() + 4 * self.scalars.as_ref().map_or(0, Vec::len) + 4
    }

    pub fn encode(&self) -> Vec<u8> {
        let scalars = self.scalars.as_deref().unwrap_or(&[]);
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        let flags = if self.scalars.is_some() { FLAG_SCALARS } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&self.revision.to_le_bytes());
        for n in [self.vertices.len(), self.indices.len(), scalars.len(), 0] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in self.vertices.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for i in &self.indices {
            out.extend_from_slice(&i.to_le_bytes());
        }
        for s in scalars {
            out.extend_from_slice(&s.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < FRAME_HEADER_LEN + 4 {
            return Err(FrameError::TooShort(bytes.len()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != FRAME_MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        let version = u16_at(4);
        if version != FRAME_VERSION {
            return Err(FrameError::UnsupportedVersion(version));
        }
        let flags = u16_at(6);
        let revision = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let (nv, ni, ns) = (u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize);
        let expected = FRAME_HEADER_LEN + 12 * nv + 4 * ni + 4 * ns + 4;
        if bytes.len() != expected {
            return Err(FrameError::Length {
                expected,
                actual: bytes.len(),
            });
        }
        let body = bytes.len() - 4;
        let stored = u32_at(body);
        let computed = crc32fast::hash(&bytes[..body]);
        if stored != computed {
            return Err(FrameError::Checksum { stored, computed });
        }
        if flags & !FLAG_SCALARS != 0 || u32_at(28) != 0 {
            return Err(FrameError::Header("unknown flags or nonzero reserved word".into()));
        }
        let has_scalars = flags & FLAG_SCALARS != 0;
        if ns != if has_scalars { nv } else { 0 } {
            return Err(FrameError::Header(format!(
                "scalar count {ns} inconsistent with flags {flags} and {nv} vertices"
            )));
        }
        if ni % 3 != 0 {
            return Err(FrameError::Header(format!("index count {ni} is not a multiple of 3")));
        }
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let mut o = FRAME_HEADER_LEN;
        let vertices = (0..nv)
            .map(|k| {
                let b = o + 12 * k;
                [f32_at(b), f32_at(b + 4), f32_at(b + 8)]
            })
            .collect();
        o += 12 * nv;
        let indices: Vec<u32> = (0..ni).map(|k| u32_at(o + 4 * k)).collect();
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= nv) {
            return Err(FrameError::Header(format!("index {bad} out of range for {nv} vertices")));
        }
        o += 4 * ni;
        let scalars = has_scalars.then(|| (0..ns).map(|k| f32_at(o + 4 * k)).collect());
        Ok(WireGeometry {
            revision,
            vertices,
            indices,
            scalars,
        })
    }
}
