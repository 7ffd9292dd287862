//! `SHDW1` snapshots: one JSON header line followed by the raw arrays.
//!
//! The header lists every array with its name, element count and dtype;
//! payloads follow in that order, row-major, `f64` as little-endian bytes and
//! booleans as one byte each.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::ExcursionMask;
use crate::field::{FieldSample, Grid, GridSpec};
use crate::kernel::KernelSpec;
use crate::lattice::Connectivity;
use crate::slope::SlopeField;

pub const MAGIC: &str = "SHDW1";

/// Header lines longer than this are rejected before parsing.
const MAX_HEADER: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "float64-le")]
    F64,
    #[serde(rename = "uint8")]
    U8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub len: usize,
    pub dtype: Dtype,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Field,
    Slope,
    Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub content: Content,
    pub spec: GridSpec,
    pub seed: u64,
    pub sample: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<Connectivity>,
    /// Manifest of the run that wrote the file, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl ArrayData {
    fn info(&self, name: &str) -> ArrayInfo {
        let (len, dtype) = match self {
            ArrayData::F64(v) => (v.len(), Dtype::F64),
            ArrayData::U8(v) => (v.len(), Dtype::U8),
        };
        ArrayInfo {
            name: name.into(),
            len,
            dtype,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: Header,
    pub arrays: Vec<ArrayData>,
}

impl Snapshot {
    fn new(
        content: Content,
        spec: &GridSpec,
        seed: u64,
        sample: u64,
        arrays: Vec<(&str, ArrayData)>,
    ) -> Self {
        let header = Header {
            magic: MAGIC.into(),
            content,
            spec: spec.clone(),
            seed,
            sample,
            kernel: None,
            truncation: None,
            margin: None,
            level: None,
            connectivity: None,
            manifest: None,
            arrays: arrays.iter().map(|(n, a)| a.info(n)).collect(),
        };
        Self {
            header,
            arrays: arrays.into_iter().map(|(_, a)| a).collect(),
        }
    }

    /// Value, first and second derivatives.
    pub fn from_field(fs: &FieldSample, kernel: Option<&KernelSpec>) -> Self {
        let arrays = fs
            .grids()
            .into_iter()
            .map(|(n, g)| (n, ArrayData::F64(g.data.clone())))
            .collect();
        let mut s = Self::new(Content::Field, &fs.spec, fs.seed, fs.sample, arrays);
        s.header.kernel = kernel.cloned();
        s.header.truncation = fs.truncation;
        s
    }

    pub fn from_slope(
        sf: &SlopeField,
        seed: u64,
        sample: u64,
        kernel: Option<&KernelSpec>,
    ) -> Self {
        let arrays = vec![
            ("alpha", ArrayData::F64(sf.alpha.data.clone())),
            ("argmax_t", ArrayData::F64(sf.argmax_t.data.clone())),
        ];
        let mut s = Self::new(Content::Slope, &sf.spec, seed, sample, arrays);
        s.header.kernel = kernel.cloned();
        s.header.truncation = sf.truncation;
        s.header.margin = Some(sf.margin);
        s
    }

    pub fn from_mask(mask: &ExcursionMask, seed: u64, sample: u64) -> Self {
        let arrays = vec![("open", ArrayData::U8(mask.to_bytes()))];
        let mut s = Self::new(Content::Mask, &mask.spec, seed, sample, arrays);
        s.header.margin = Some(mask.margin);
        s.header.level = Some(mask.level);
        s.header.connectivity = Some(mask.connectivity);
        s
    }

    pub fn header_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.header)?)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header_line()?)?;
        for a in &self.arrays {
            match a {
                ArrayData::F64(v) => {
                    let mut buf = Vec::with_capacity(v.len() * 8);
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                    w.write_all(&buf)?;
                }
                ArrayData::U8(v) => w.write_all(v)?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write(&mut out)?;
        Ok(out)
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        (&mut r).take(MAX_HEADER).read_until(b'\n', &mut line)?;
        let header: Header = serde_json::from_slice(&line)
            .map_err(|e| Error::Format(format!("unreadable snapshot header: {e}")))?;
        if header.magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic `{}`, expected `{MAGIC}`",
                header.magic
            )));
        }
        let cells = header.spec.len();
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for info in &header.arrays {
            if info.len != cells {
                return Err(Error::Format(format!(
                    "array `{}` has {} entries, grid has {cells}",
                    info.name, info.len
                )));
            }
            let mut buf = vec![0u8; info.len * info.dtype.width()];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("array `{}` is truncated", info.name)))?;
            arrays.push(match info.dtype {
                Dtype::F64 => ArrayData::F64(
                    buf.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                Dtype::U8 => ArrayData::U8(buf),
            });
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after the last array".into()));
        }
        Ok(Self { header, arrays })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read(bytes)
    }

    fn expect(&self, content: Content) -> Result<()> {
        if self.header.content != content {
            return Err(Error::Format(format!(
                "expected a {content:?} snapshot, found {:?}",
                self.header.content
            )));
        }
        Ok(())
    }

    pub fn grid(&self, name: &str) -> Result<Grid> {
        let k = self
            .header
            .arrays
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("snapshot has no array `{name}`")))?;
        match &self.arrays[k] {
            ArrayData::F64(v) => Ok(Grid {
                nx: self.header.spec.nx,
                ny: self.header.spec.ny,
                data: v.clone(),
            }),
            ArrayData::U8(_) => Err(Error::Format(format!("array `{name}` is not float64"))),
        }
    }

    pub fn to_field(&self) -> Result<FieldSample> {
        self.expect(Content::Field)?;
        Ok(FieldSample {
            spec: self.header.spec.clone(),
            f: self.grid("f")?,
            df1: self.grid("df1")?,
            df2: self.grid("df2")?,
            d2f11: self.grid("d2f11")?,
            d2f12: self.grid("d2f12")?,
            d2f22: self.grid("d2f22")?,
            seed: self.header.seed,
            sample: self.header.sample,
            truncation: self.header.truncation,
        })
    }

    pub fn to_slope(&self) -> Result<SlopeField> {
        self.expect(Content::Slope)?;
        Ok(SlopeField {
            spec: self.header.spec.clone(),
            alpha: self.grid("alpha")?,
            argmax_t: self.grid("argmax_t")?,
            margin: self.header.margin.unwrap_or(0),
            truncation: self.header.truncation,
        })
    }

    pub fn to_mask(&self) -> Result<ExcursionMask> {
        self.expect(Content::Mask)?;
        let k = self
            .header
            .arrays
            .iter()
            .position(|a| a.name == "open")
            .ok_or_else(|| Error::Format("mask snapshot has no `open` array".into()))?;
        let ArrayData::U8(bytes) = &self.arrays[k] else {
            return Err(Error::Format("array `open` is not uint8".into()));
        };
        let open = bytes.iter().map(|&b| b != 0).collect();
        Ok(ExcursionMask::from_open(
            self.header.spec.clone(),
            self.header.level.unwrap_or(f64::NAN),
            open,
            self.header.connectivity.unwrap_or(Connectivity::Eight),
            self.header.margin.unwrap_or(0),
        ))
    }
}

/// Fails unless both grids describe the same window.
pub fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a.same_window(b) {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "grid {}x{} at {:?} (h = {}) does not match {}x{} at {:?} (h = {})",
            a.nx, a.ny, a.origin, a.h, b.nx, b.ny, b.origin, b.h
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::threshold;
    use crate::field::FieldSynth;
    use crate::kernel::Kernel;
    use crate::slope::slope_field;

    fn field() -> FieldSample {
        let k = Kernel::gaussian(1.0, 1.0).unwrap();
        let spec = GridSpec::for_support([0.5, -1.0], 0.25, 12, 7, k.trunc_radius());
        FieldSynth::new(&k, &spec).unwrap().sample(9, 3)
    }

    #[test]
    fn field_round_trip() {
        let fs = field();
        let s = Snapshot::from_field(&fs, Some(&KernelSpec::gaussian()));
        let back = Snapshot::from_bytes(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_field().unwrap(), fs);
    }

    #[test]
    fn slope_and_mask_round_trip() {
        let fs = field();
        let sf = slope_field(&fs, 3);
        let s = Snapshot::from_slope(&sf, 9, 3, None);
        assert_eq!(
            Snapshot::from_bytes(&s.to_bytes().unwrap())
                .unwrap()
                .to_slope()
                .unwrap(),
            sf
        );
        let m = threshold(&sf, 0.7, Connectivity::Eight);
        let s = Snapshot::from_mask(&m, 9, 3);
        assert_eq!(
            Snapshot::from_bytes(&s.to_bytes().unwrap())
                .unwrap()
                .to_mask()
                .unwrap(),
            m
        );
    }

    #[test]
    fn header_is_first_line() {
        let bytes = Snapshot::from_field(&field(), None).to_bytes().unwrap();
        let end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let h: serde_json::Value = serde_json::from_slice(&bytes[..end]).unwrap();
        assert_eq!(h["magic"], MAGIC);
        assert_eq!(h["arrays"][0]["dtype"], "float64-le");
        assert_eq!(bytes.len(), end + 1 + 6 * 12 * 7 * 8);
    }

    #[test]
    fn malformed_input() {
        let bytes = Snapshot::from_field(&field(), None).to_bytes().unwrap();
        let mut bad_magic = bytes.clone();
        let at = bytes
            .windows(5)
            .position(|w| w == MAGIC.as_bytes())
            .unwrap();
        bad_magic[at + 4] = b'9';
        let e = Snapshot::from_bytes(&bad_magic).unwrap_err();
        assert!(e.to_string().contains("bad magic"));
        assert!(matches!(
            Snapshot::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Snapshot::from_bytes(&long), Err(Error::Format(_))));
        assert!(matches!(
            Snapshot::from_bytes(b"hello\n"),
            Err(Error::Format(_))
        ));
        let s = Snapshot::from_field(&field(), None);
        assert!(matches!(s.to_slope(), Err(Error::Format(_))));
    }
}
