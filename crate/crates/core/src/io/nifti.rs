//! Minimal single-file NIfTI-1 (`.nii`, optionally gzipped) reader and writer.
//!
//! Supported datatypes: uint8 (2), int16 (4), uint16 (512), float32 (16).
//! Orientation fields are carried through unchanged but never interpreted.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use super::staging::write_atomic;
use crate::error::{Error, Result};
use crate::volume::{LabelId, LabelVolume, VoxelGeometry};

pub const HEADER_SIZE: usize = 348;
/// Data offset used on write: header plus the 4-byte extension flag.
pub const WRITE_VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

/// Largest decompressed file accepted (16 GiB).
const MAX_DECOMPRESSED: u64 = 1 << 34;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("NIfTI: sizeof_hdr is {0}, expected 348 in either byte order")]
    BadHeaderSize(i32),
    #[error("NIfTI: bad magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("NIfTI: unsupported datatype code {0} (supported: 2, 4, 512, 16)")]
    UnsupportedDatatype(i16),
    #[error("NIfTI: dim[0] is {0}, expected 3")]
    BadDim0(i16),
    #[error("NIfTI: invalid {field}: {detail}")]
    InvalidField { field: &'static str, detail: String },
    #[error("NIfTI: truncated {section}: need {needed} bytes, file has {available}")]
    Truncated {
        section: &'static str,
        needed: u64,
        available: u64,
    },
    #[error("NIfTI: gzip stream: {0}")]
    Gzip(std::io::Error),
}

impl NiftiError {
    fn invalid(field: &'static str, detail: impl Into<String>) -> Self {
        NiftiError::InvalidField {
            field,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    U16,
    F32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::U16 => 512,
            Datatype::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Datatype::U8),
            4 => Some(Datatype::I16),
            512 => Some(Datatype::U16),
            16 => Some(Datatype::F32),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 | Datatype::U16 => 2,
            Datatype::F32 => 4,
        }
    }
}

/// Orientation fields, preserved verbatim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    /// `pixdim[0]`, the qform handedness factor.
    pub qfac: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    /// quatern_b, c, d, qoffset_x, y, z.
    pub quatern: [f32; 6],
    pub srow: [[f32; 4]; 3],
    pub xyzt_units: u8,
}

impl Default for Orientation {
    fn default() -> Self {
        Self {
            qfac: 1.0,
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 6],
            srow: [[0.0; 4]; 3],
            // millimetres
            xyzt_units: 2,
        }
    }
}

/// The header fields this reader interprets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub datatype: Datatype,
    pub bitpix: i16,
    pub pixdim: [f32; 3],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn datatype(&self) -> Datatype {
        match self {
            VoxelData::U8(_) => Datatype::U8,
            VoxelData::I16(_) => Datatype::I16,
            VoxelData::U16(_) => Datatype::U16,
            VoxelData::F32(_) => Datatype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::U16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    pub header: NiftiHeader,
    pub data: VoxelData,
}

impl NiftiVolume {
    /// Fresh volume with default orientation, slope 1 and intercept 0.
    pub fn new(geometry: VoxelGeometry, data: VoxelData) -> Result<Self> {
        if data.len() != geometry.n_voxels() {
            return Err(Error::GeometryMismatch {
                context: "NIfTI payload".into(),
                expected: format!("{} voxels", geometry.n_voxels()),
                found: format!("{} voxels", data.len()),
            });
        }
        let datatype = data.datatype();
        Ok(Self {
            header: NiftiHeader {
                dims: geometry.dims(),
                datatype,
                bitpix: 8 * datatype.bytes() as i16,
                pixdim: geometry.spacing().map(|s| s as f32),
                vox_offset: WRITE_VOX_OFFSET as f32,
                scl_slope: 1.0,
                scl_inter: 0.0,
                magic: MAGIC,
                orientation: Orientation::default(),
            },
            data,
        })
    }

    /// Label volume stored as uint8 when every label fits, else uint16.
    pub fn from_labels(v: &LabelVolume) -> Self {
        let data = if v.data().iter().all(|&l| l <= u8::MAX as LabelId) {
            VoxelData::U8(v.data().iter().map(|&l| l as u8).collect())
        } else {
            VoxelData::U16(v.data().to_vec())
        };
        Self::new(*v.geometry(), data).expect("payload sized from geometry")
    }

    pub fn from_f32(geometry: VoxelGeometry, values: Vec<f32>) -> Result<Self> {
        Self::new(geometry, VoxelData::F32(values))
    }

    /// Copies orientation from another header (for outputs derived from an input).
    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.header.orientation = orientation;
        self
    }

    pub fn geometry(&self) -> Result<VoxelGeometry> {
        VoxelGeometry::new(self.header.dims, self.header.pixdim.map(|p| p as f64))
    }

    fn slope_inter(&self) -> (f64, f64) {
        let slope = self.header.scl_slope as f64;
        let slope = if slope == 0.0 || !slope.is_finite() { 1.0 } else { slope };
        let inter = self.header.scl_inter as f64;
        (slope, if inter.is_finite() { inter } else { 0.0 })
    }

    /// Integer label interpretation. Integer data with a non-identity scaling
    /// is rejected; float data must hold integers in the label range.
    pub fn to_labels(&self) -> Result<LabelVolume> {
        let g = self.geometry()?;
        let (slope, inter) = self.slope_inter();
        let bad = |detail: String| Error::InvalidInput(format!("NIfTI label data: {detail}"));
        let data: Vec<LabelId> = match &self.data {
            VoxelData::F32(v) => v
                .iter()
                .map(|&x| {
                    let y = x as f64 * slope + inter;
                    if y.fract() == 0.0 && (0.0..=LabelId::MAX as f64).contains(&y) {
                        Ok(y as LabelId)
                    } else {
                        Err(bad(format!("float value {y} is not a label id")))
                    }
                })
                .collect::<Result<_>>()?,
            int => {
                if slope != 1.0 || inter != 0.0 {
                    return Err(bad(format!(
                        "integer labels with scl_slope {} / scl_inter {}",
                        self.header.scl_slope, self.header.scl_inter
                    )));
                }
                match int {
                    VoxelData::U8(v) => v.iter().map(|&x| x as LabelId).collect(),
                    VoxelData::U16(v) => v.clone(),
                    VoxelData::I16(v) => v
                        .iter()
                        .map(|&x| LabelId::try_from(x).map_err(|_| bad(format!("negative label {x}"))))
                        .collect::<Result<_>>()?,
                    VoxelData::F32(_) => unreachable!(),
                }
            }
        };
        LabelVolume::new(g, data)
    }

    /// Real-valued interpretation with `scl_slope`/`scl_inter` applied
    /// (slope 0 means unscaled).
    pub fn to_f32(&self) -> Vec<f32> {
        let (slope, inter) = self.slope_inter();
        let scale = |x: f64| (x * slope + inter) as f32;
        match &self.data {
            VoxelData::F32(v) if slope == 1.0 && inter == 0.0 => v.clone(),
            VoxelData::F32(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            VoxelData::U8(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| scale(x as f64)).collect(),
            VoxelData::U16(v) => v.iter().map(|&x| scale(x as f64)).collect(),
        }
    }
}

#[derive(Clone, Copy)]
struct Reader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn raw<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        if self.big_endian {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.raw(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.raw(at))
    }
}

fn parse_header(bytes: &[u8]) -> std::result::Result<(NiftiHeader, bool), NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::Truncated {
            section: "header",
            needed: HEADER_SIZE as u64,
            available: bytes.len() as u64,
        });
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = match le {
        348 => false,
        _ if le.swap_bytes() == 348 => true,
        other => return Err(NiftiError::BadHeaderSize(other)),
    };
    let r = Reader { bytes, big_endian };
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    if magic != MAGIC {
        return Err(NiftiError::BadMagic(magic));
    }
    let dim0 = r.i16(40);
    if dim0 != 3 {
        return Err(NiftiError::BadDim0(dim0));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let v = r.i16(42 + 2 * a);
        if v < 1 {
            return Err(NiftiError::invalid("dim", format!("dim[{}] = {v}, must be ≥ 1", a + 1)));
        }
        *d = v as usize;
    }
    let code = r.i16(70);
    let datatype = Datatype::from_code(code).ok_or(NiftiError::UnsupportedDatatype(code))?;
    let bitpix = r.i16(72);
    if bitpix as usize != 8 * datatype.bytes() {
        return Err(NiftiError::invalid(
            "bitpix",
            format!("{bitpix} does not match datatype {code}"),
        ));
    }
    let mut pixdim = [0f32; 3];
    for (a, p) in pixdim.iter_mut().enumerate() {
        let v = r.f32(80 + 4 * a);
        if !(v.is_finite() && v > 0.0) {
            return Err(NiftiError::invalid("pixdim", format!("pixdim[{}] = {v}, must be > 0", a + 1)));
        }
        *p = v;
    }
    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 && vox_offset.fract() == 0.0) {
        return Err(NiftiError::invalid(
            "vox_offset",
            format!("{vox_offset}, must be an integer ≥ 348"),
        ));
    }
    let mut srow = [[0f32; 4]; 3];
    for (row, vals) in srow.iter_mut().enumerate() {
        for (c, v) in vals.iter_mut().enumerate() {
            *v = r.f32(280 + 16 * row + 4 * c);
        }
    }
    let header = NiftiHeader {
        dims,
        datatype,
        bitpix,
        pixdim,
        vox_offset,
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        magic,
        orientation: Orientation {
            qfac: r.f32(76),
            qform_code: r.i16(252),
            sform_code: r.i16(254),
            quatern: [0, 1, 2, 3, 4, 5].map(|k| r.f32(256 + 4 * k)),
            srow,
            xyzt_units: bytes[123],
        },
    };
    Ok((header, big_endian))
}

fn gunzip_if_needed(bytes: Vec<u8>) -> std::result::Result<Vec<u8>, NiftiError> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .take(MAX_DECOMPRESSED)
            .read_to_end(&mut out)
            .map_err(NiftiError::Gzip)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Decodes a NIfTI-1 file image (plain or gzipped).
pub fn parse_nifti(bytes: &[u8]) -> std::result::Result<NiftiVolume, NiftiError> {
    let owned;
    let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
        owned = gunzip_if_needed(bytes.to_vec())?;
        &owned[..]
    } else {
        bytes
    };
    let (header, big_endian) = parse_header(bytes)?;
    let n = header.dims[0]
        .checked_mul(header.dims[1])
        .and_then(|n| n.checked_mul(header.dims[2]))
        .ok_or_else(|| NiftiError::invalid("dim", "voxel count overflows"))?;
    let offset = header.vox_offset as u64;
    let needed = (n as u64)
        .checked_mul(header.datatype.bytes() as u64)
        .and_then(|b| b.checked_add(offset))
        .ok_or_else(|| NiftiError::invalid("dim", "data size overflows"))?;
    if needed > bytes.len() as u64 {
        return Err(NiftiError::Truncated {
            section: "data",
            needed,
            available: bytes.len() as u64,
        });
    }
    let payload = &bytes[offset as usize..needed as usize];
    let swap = big_endian;
    let data = match header.datatype {
        Datatype::U8 => VoxelData::U8(payload.to_vec()),
        Datatype::I16 => VoxelData::I16(
            payload
                .chunks_exact(2)
                .map(|c| {
                    let v = i16::from_le_bytes([c[0], c[1]]);
                    if swap { v.swap_bytes() } else { v }
                })
                .collect(),
        ),
        Datatype::U16 => VoxelData::U16(
            payload
                .chunks_exact(2)
                .map(|c| {
                    let v = u16::from_le_bytes([c[0], c[1]]);
                    if swap { v.swap_bytes() } else { v }
                })
                .collect(),
        ),
        Datatype::F32 => VoxelData::F32(
            payload
                .chunks_exact(4)
                .map(|c| {
                    let v = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    f32::from_bits(if swap { v.swap_bytes() } else { v })
                })
                .collect(),
        ),
    };
    Ok(NiftiVolume { header, data })
}

/// Little-endian file image with `vox_offset` 352, slope 1 and intercept 0.
pub fn encode_nifti(v: &NiftiVolume) -> Vec<u8> {
    let h = &v.header;
    let dt = v.data.datatype();
    let mut out = vec![0u8; WRITE_VOX_OFFSET + v.data.len() * dt.bytes()];
    let mut put = |at: usize, b: &[u8]| out[at..at + b.len()].copy_from_slice(b);
    put(0, &348i32.to_le_bytes());
    put(38, b"r");
    let dim: [i16; 8] = [3, h.dims[0] as i16, h.dims[1] as i16, h.dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        put(40 + 2 * k, &d.to_le_bytes());
    }
    put(70, &dt.code().to_le_bytes());
    put(72, &(8 * dt.bytes() as i16).to_le_bytes());
    let o = &h.orientation;
    let pixdim = [o.qfac, h.pixdim[0], h.pixdim[1], h.pixdim[2], 0.0, 0.0, 0.0, 0.0];
    for (k, p) in pixdim.iter().enumerate() {
        put(76 + 4 * k, &p.to_le_bytes());
    }
    put(108, &(WRITE_VOX_OFFSET as f32).to_le_bytes());
    put(112, &1f32.to_le_bytes());
    put(116, &0f32.to_le_bytes());
    put(123, &[o.xyzt_units]);
    put(252, &o.qform_code.to_le_bytes());
    put(254, &o.sform_code.to_le_bytes());
    for (k, q) in o.quatern.iter().enumerate() {
        put(256 + 4 * k, &q.to_le_bytes());
    }
    for (row, vals) in o.srow.iter().enumerate() {
        for (c, s) in vals.iter().enumerate() {
            put(280 + 16 * row + 4 * c, &s.to_le_bytes());
        }
    }
    put(344, &MAGIC);
    let body = &mut out[WRITE_VOX_OFFSET..];
    match &v.data {
        VoxelData::U8(d) => body.copy_from_slice(d),
        VoxelData::I16(d) => body.chunks_exact_mut(2).zip(d).for_each(|(c, x)| c.copy_from_slice(&x.to_le_bytes())),
        VoxelData::U16(d) => body.chunks_exact_mut(2).zip(d).for_each(|(c, x)| c.copy_from_slice(&x.to_le_bytes())),
        VoxelData::F32(d) => body.chunks_exact_mut(4).zip(d).for_each(|(c, x)| c.copy_from_slice(&x.to_le_bytes())),
    }
    out
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_nifti(&bytes).map_err(|source| Error::Nifti {
        path: path.to_path_buf(),
        source,
    })
}

/// File image for `path`: gzipped when the extension is `.gz`.
pub fn nifti_file_bytes(v: &NiftiVolume, path: &Path) -> Result<Vec<u8>> {
    let bytes = encode_nifti(v);
    if is_gz(path) {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).and_then(|_| enc.finish()).map_err(|e| Error::io(path, e))
    } else {
        Ok(bytes)
    }
}

/// Writes atomically; a `.gz` extension selects gzip compression.
pub fn write_nifti(v: &NiftiVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &nifti_file_bytes(v, path)?)
}

pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    read_nifti(path)?
        .to_labels()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn write_label_volume(v: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&NiftiVolume::from_labels(v), path)
}
