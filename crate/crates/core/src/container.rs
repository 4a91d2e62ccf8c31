//! Self-describing binary container for gridded media and field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `PXGRID\0\x01` |
//! | 4 | kind: `u32`, 1 = medium 3D, 2 = medium 2D (z-invariant), 3 = field snapshot |
//! | 8 | `n0`: `f64` |
//! | 24 | dims `[u64; 3]` (`nx, ny, nz`) |
//! | 24 | spacing `[f64; 3]` |
//! | 24 | origin `[f64; 3]` |
//! | 4 | plane count: `u32` |
//! | 8 | `z`: `f64` (snapshot position, 0 for media) |
//! | 4 + n | tag: `u32` byte length then UTF-8 (free-form, e.g. version and config hash) |
//! | 8·planes·nx·ny·nz | samples `f64`, plane-major, then `(ix·ny + iy)·nz + iz` |
//!
//! Media carry one plane of `ζ`. Snapshots carry eight planes: real and imaginary
//! parts of the four spinor components, in the order `re c1, im c1, …, re c4, im c4`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::medium::{Bounds, MediumKind, MediumProfile, RegimePolicy, SampledField};
use crate::{Error, Result};

pub const MAGIC: [u8; 8] = *b"PXGRID\x00\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Medium3d = 1,
    Medium2d = 2,
    FieldSnapshot = 3,
}

impl ContainerKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            1 => Ok(ContainerKind::Medium3d),
            2 => Ok(ContainerKind::Medium2d),
            3 => Ok(ContainerKind::FieldSnapshot),
            other => Err(Error::Format(format!("unknown container kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridContainer {
    pub kind: ContainerKind,
    pub n0: f64,
    pub dims: [u64; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub z: f64,
    pub tag: String,
    pub planes: Vec<Vec<f64>>,
}

impl GridContainer {
    fn plane_len(&self) -> Result<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
            .ok_or_else(|| Error::Format(format!("dims {:?} overflow", self.dims)))
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.plane_len()?;
        if self.planes.is_empty() {
            return Err(Error::Format("container has no planes".into()));
        }
        if let Some(p) = self.planes.iter().find(|p| p.len() != len) {
            return Err(Error::Format(format!(
                "plane of {} samples, expected {len}",
                p.len()
            )));
        }
        let expected_planes = match self.kind {
            ContainerKind::FieldSnapshot => 8,
            _ => 1,
        };
        if self.planes.len() != expected_planes {
            return Err(Error::Format(format!(
                "{:?} needs {expected_planes} planes, found {}",
                self.kind,
                self.planes.len()
            )));
        }
        if self.kind == ContainerKind::Medium2d && self.dims[2] != 1 {
            return Err(Error::Format("2D medium must have nz = 1".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        w.write_all(&MAGIC)?;
        w.write_all(&(self.kind as u32).to_le_bytes())?;
        w.write_all(&self.n0.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in self.spacing.iter().chain(&self.origin) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.planes.len() as u32).to_le_bytes())?;
        w.write_all(&self.z.to_le_bytes())?;
        let tag = self.tag.as_bytes();
        let tag_len = u32::try_from(tag.len()).map_err(|_| Error::Format("tag too long".into()))?;
        w.write_all(&tag_len.to_le_bytes())?;
        w.write_all(tag)?;
        let mut buf = Vec::with_capacity(8 * self.planes[0].len());
        for plane in &self.planes {
            buf.clear();
            for v in plane {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Format("bad magic, not a grid container".into()));
        }
        let kind = ContainerKind::from_u32(read_u32(&mut r)?)?;
        let n0 = read_f64(&mut r)?;
        let mut dims = [0u64; 3];
        for d in &mut dims {
            *d = read_u64(&mut r)?;
        }
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for v in spacing.iter_mut().chain(origin.iter_mut()) {
            *v = read_f64(&mut r)?;
        }
        let nplanes = read_u32(&mut r)? as usize;
        let z = read_f64(&mut r)?;
        let tag_len = read_u32(&mut r)? as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let tag =
            String::from_utf8(tag).map_err(|e| Error::Format(format!("tag is not UTF-8: {e}")))?;
        let mut out = GridContainer {
            kind,
            n0,
            dims,
            spacing,
            origin,
            z,
            tag,
            planes: Vec::new(),
        };
        let len = out.plane_len()?;
        if nplanes > 8 {
            return Err(Error::Format(format!(
                "{nplanes} planes exceeds the maximum of 8"
            )));
        }
        let mut bytes = vec![0u8; 8 * len];
        for _ in 0..nplanes {
            r.read_exact(&mut bytes)?;
            out.planes.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            );
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after samples".into()));
        }
        out.validate()?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Packs a gridded medium; analytic kinds are rejected.
    pub fn from_medium(profile: &MediumProfile, tag: impl Into<String>) -> Result<Self> {
        let (kind, field) = match profile.kind() {
            MediumKind::Gridded3d(f) => (ContainerKind::Medium3d, f),
            MediumKind::Gridded2d(f) => (ContainerKind::Medium2d, f),
            _ => {
                return Err(Error::InvalidInput(
                    "only gridded media can be stored in a container".into(),
                ))
            }
        };
        Ok(GridContainer {
            kind,
            n0: profile.n0(),
            dims: field.dims.map(|d| d as u64),
            spacing: field.spacing,
            origin: field.origin,
            z: 0.0,
            tag: tag.into(),
            planes: vec![field.zeta.clone()],
        })
    }

    pub fn to_medium(&self) -> Result<MediumProfile> {
        self.to_medium_with(RegimePolicy::Enforce)
    }

    pub fn to_medium_with(&self, policy: RegimePolicy) -> Result<MediumProfile> {
        self.validate()?;
        let dims = self.dims.map(|d| d as usize);
        let field = SampledField::new(dims, self.spacing, self.origin, self.planes[0].clone())?;
        let kind = match self.kind {
            ContainerKind::Medium3d => MediumKind::Gridded3d(field),
            ContainerKind::Medium2d => MediumKind::Gridded2d(field),
            ContainerKind::FieldSnapshot => {
                return Err(Error::Format(
                    "container holds a field snapshot, not a medium".into(),
                ))
            }
        };
        MediumProfile::with_policy(self.n0, kind, Bounds::unbounded(), policy)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
