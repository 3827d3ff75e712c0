//! Minimal NIfTI-1 reader/writer: single-file `.nii`, gzip-compressed
//! `.nii.gz`, and `.hdr`/`.img` pairs; either byte order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{DataType, Matrix3, Result, Volume, VolumeError, VolumeKind, Voxels, IDENTITY};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;

mod offset {
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

struct Fields<'a> {
    buf: &'a [u8],
    big: bool,
}

impl Fields<'_> {
    fn i16(&self, at: usize) -> i16 {
        if self.big {
            BigEndian::read_i16(&self.buf[at..])
        } else {
            LittleEndian::read_i16(&self.buf[at..])
        }
    }

    fn f32(&self, at: usize) -> f32 {
        if self.big {
            BigEndian::read_f32(&self.buf[at..])
        } else {
            LittleEndian::read_f32(&self.buf[at..])
        }
    }
}

struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    datatype_code: i16,
    vox_offset: usize,
    slope: f64,
    inter: f64,
    direction: Matrix3,
    origin: [f64; 3],
    big_endian: bool,
    paired: bool,
}

fn decompress_if_gzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    if buf.len() < HEADER_SIZE {
        return Err(VolumeError::MalformedHeader(format!(
            "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
            buf.len()
        )));
    }
    let big = if LittleEndian::read_i32(buf) == HEADER_SIZE as i32 {
        false
    } else if BigEndian::read_i32(buf) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(VolumeError::MalformedHeader("sizeof_hdr is not 348".into()));
    };
    let paired = match &buf[offset::MAGIC..offset::MAGIC + 4] {
        b"n+1\0" => false,
        b"ni1\0" => true,
        other => {
            return Err(VolumeError::MalformedHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let h = Fields { buf, big };

    let ndim = h.i16(offset::DIM);
    if !(1..=7).contains(&ndim) {
        return Err(VolumeError::MalformedHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for axis in 1..=ndim as usize {
        let d = h.i16(offset::DIM + 2 * axis);
        if d < 1 {
            return Err(VolumeError::MalformedHeader(format!("dim[{axis}] = {d}")));
        }
        if axis <= 3 {
            dims[axis - 1] = d as usize;
        } else if d != 1 {
            return Err(VolumeError::UnsupportedShape(format!(
                "dim[{axis}] = {d}; only 3-D volumes are supported"
            )));
        }
    }

    let mut spacing = [1.0; 3];
    for (axis, s) in spacing.iter_mut().enumerate() {
        if axis < ndim as usize {
            let p = h.f32(offset::PIXDIM + 4 * (axis + 1)).abs() as f64;
            if !(p > 0.0 && p.is_finite()) {
                return Err(VolumeError::MalformedHeader(format!(
                    "pixdim[{}] = {p}",
                    axis + 1
                )));
            }
            *s = p;
        }
    }

    let vox_offset = h.f32(offset::VOX_OFFSET);
    if vox_offset.is_nan() || vox_offset < 0.0 || (!paired && (vox_offset as usize) < HEADER_SIZE) {
        return Err(VolumeError::MalformedHeader(format!("vox_offset = {vox_offset}")));
    }

    let (slope, inter) = {
        let s = h.f32(offset::SCL_SLOPE) as f64;
        let i = h.f32(offset::SCL_INTER) as f64;
        if s == 0.0 || !s.is_finite() {
            (1.0, 0.0)
        } else {
            (s, if i.is_finite() { i } else { 0.0 })
        }
    };

    let (direction, origin) = geometry(&h);
    Ok(Header {
        dims,
        spacing,
        datatype_code: h.i16(offset::DATATYPE),
        vox_offset: vox_offset as usize,
        slope,
        inter,
        direction,
        origin,
        big_endian: big,
        paired,
    })
}

/// Direction cosines and origin: sform first, then qform, then identity.
fn geometry(h: &Fields<'_>) -> (Matrix3, [f64; 3]) {
    if h.i16(offset::SFORM_CODE) > 0 {
        let mut m = [[0.0; 3]; 3];
        let mut origin = [0.0; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = h.f32(offset::SROW_X + 16 * r + 4 * c) as f64;
            }
            origin[r] = h.f32(offset::SROW_X + 16 * r + 12) as f64;
        }
        if let Some(dir) = normalize_columns(m) {
            return (dir, origin);
        }
        log::warn!("degenerate sform matrix, falling back to qform");
    }
    if h.i16(offset::QFORM_CODE) > 0 {
        let b = h.f32(offset::QUATERN_B) as f64;
        let c = h.f32(offset::QUATERN_B + 4) as f64;
        let d = h.f32(offset::QUATERN_B + 8) as f64;
        let qfac = if h.f32(offset::PIXDIM) < 0.0 { -1.0 } else { 1.0 };
        let origin = [0, 1, 2].map(|i| h.f32(offset::QOFFSET_X + 4 * i) as f64);
        return (quaternion_to_matrix(b, c, d, qfac), origin);
    }
    (IDENTITY, [0.0; 3])
}

fn normalize_columns(m: Matrix3) -> Option<Matrix3> {
    let mut out = m;
    for c in 0..3 {
        let norm = (0..3).map(|r| m[r][c] * m[r][c]).sum::<f64>().sqrt();
        if norm.is_nan() || norm <= 1e-12 {
            return None;
        }
        for row in out.iter_mut() {
            row[c] /= norm;
        }
    }
    Some(out)
}

fn quaternion_to_matrix(b: f64, c: f64, d: f64, qfac: f64) -> Matrix3 {
    let (mut a, mut b, mut c, mut d) = (1.0 - (b * b + c * c + d * d), b, c, d);
    if a < 1e-7 {
        let n = 1.0 / (b * b + c * c + d * d).sqrt();
        b *= n;
        c *= n;
        d *= n;
        a = 0.0;
    } else {
        a = a.sqrt();
    }
    [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            qfac * 2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            qfac * 2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            qfac * (a * a + d * d - c * c - b * b),
        ],
    ]
}

fn determinant(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Returns `(b, c, d, qfac)` for an orthonormal direction matrix.
fn matrix_to_quaternion(m: &Matrix3) -> (f64, f64, f64, f64) {
    let mut r = *m;
    let qfac = if determinant(&r) >= 0.0 { 1.0 } else { -1.0 };
    if qfac < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
    }
    let trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
    let (a, mut b, mut c, mut d);
    if trace > 0.5 {
        a = 0.5 * trace.sqrt();
        b = 0.25 * (r[2][1] - r[1][2]) / a;
        c = 0.25 * (r[0][2] - r[2][0]) / a;
        d = 0.25 * (r[1][0] - r[0][1]) / a;
    } else {
        let xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
        let yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
        let zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r[0][1] + r[1][0]) / b;
            d = 0.25 * (r[0][2] + r[2][0]) / b;
            a = 0.25 * (r[2][1] - r[1][2]) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r[0][1] + r[1][0]) / c;
            d = 0.25 * (r[1][2] + r[2][1]) / c;
            a = 0.25 * (r[0][2] - r[2][0]) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r[0][2] + r[2][0]) / d;
            c = 0.25 * (r[1][2] + r[2][1]) / d;
            a = 0.25 * (r[1][0] - r[0][1]) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    (b, c, d, qfac)
}

fn decode(header: &Header, data: &[u8], kind: VolumeKind) -> Result<Volume> {
    let datatype = DataType::from_code(header.datatype_code)
        .filter(|d| d.supports(kind))
        .ok_or(VolumeError::UnsupportedDatatype {
            code: header.datatype_code,
            kind,
        })?;
    let n: usize = header.dims.iter().product();
    let expected = n * datatype.bytes_per_voxel();
    if data.len() != expected {
        return Err(VolumeError::DimensionMismatch {
            expected,
            found: data.len(),
        });
    }
    let raw = raw_values(datatype, data, header.big_endian);
    let voxels = match kind {
        VolumeKind::Label => {
            let mut labels = Vec::with_capacity(n);
            for v in raw {
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() || v > u32::MAX as f64 {
                    return Err(VolumeError::NotALabelMap(format!("voxel value {v}")));
                }
                labels.push(v as u32);
            }
            Voxels::Label(labels)
        }
        VolumeKind::Intensity => {
            let (s, i) = (header.slope, header.inter);
            if (s, i) == (1.0, 0.0) {
                Voxels::Intensity(raw)
            } else {
                Voxels::Intensity(raw.into_iter().map(|v| v * s + i).collect())
            }
        }
    };
    let volume = Volume::new(header.dims, header.spacing, datatype, voxels)?
        .with_direction(header.direction)
        .with_origin(header.origin);
    Ok(match kind {
        VolumeKind::Intensity => volume.with_scaling(header.slope, header.inter),
        VolumeKind::Label => volume,
    })
}

fn raw_values(datatype: DataType, data: &[u8], big: bool) -> Vec<f64> {
    macro_rules! read_all {
        ($width:expr, $read:ident) => {
            data.chunks_exact($width)
                .map(|c| {
                    if big {
                        BigEndian::$read(c) as f64
                    } else {
                        LittleEndian::$read(c) as f64
                    }
                })
                .collect()
        };
    }
    match datatype {
        DataType::UInt8 => data.iter().map(|&b| b as f64).collect(),
        DataType::Int16 => read_all!(2, read_i16),
        DataType::UInt16 => read_all!(2, read_u16),
        DataType::Int32 => read_all!(4, read_i32),
        DataType::Float32 => read_all!(4, read_f32),
        DataType::Float64 => read_all!(8, read_f64),
    }
}

/// Parses an in-memory single-file NIfTI image (optionally gzipped).
pub fn read_nifti_bytes(bytes: Vec<u8>, kind: VolumeKind) -> Result<Volume> {
    let bytes = decompress_if_gzip(bytes)?;
    let header = parse_header(&bytes)?;
    if header.paired {
        return Err(VolumeError::MalformedHeader(
            "`ni1` header requires a separate .img file".into(),
        ));
    }
    let data = bytes.get(header.vox_offset..).ok_or(VolumeError::DimensionMismatch {
        expected: header.vox_offset,
        found: bytes.len(),
    })?;
    decode(&header, data, kind)
}

fn paired_image_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        PathBuf::from(format!("{stem}.img.gz"))
    } else {
        path.with_extension("img")
    }
}

/// Loads a NIfTI-1 file as a label map or intensity volume.
pub fn load_volume(path: &Path, kind: VolumeKind) -> Result<Volume> {
    let bytes = decompress_if_gzip(fs::read(path)?)?;
    let header = parse_header(&bytes)?;
    if header.paired {
        let image = decompress_if_gzip(fs::read(paired_image_path(path))?)?;
        let data = image.get(header.vox_offset..).unwrap_or_default();
        decode(&header, data, kind)
    } else {
        let data = bytes.get(header.vox_offset..).unwrap_or_default();
        decode(&header, data, kind)
    }
}

struct HeaderWriter {
    buf: Vec<u8>,
    big: bool,
}

impl HeaderWriter {
    fn i16(&mut self, at: usize, v: i16) {
        if self.big {
            BigEndian::write_i16(&mut self.buf[at..], v)
        } else {
            LittleEndian::write_i16(&mut self.buf[at..], v)
        }
    }

    fn i32(&mut self, at: usize, v: i32) {
        if self.big {
            BigEndian::write_i32(&mut self.buf[at..], v)
        } else {
            LittleEndian::write_i32(&mut self.buf[at..], v)
        }
    }

    fn f32(&mut self, at: usize, v: f32) {
        if self.big {
            BigEndian::write_f32(&mut self.buf[at..], v)
        } else {
            LittleEndian::write_f32(&mut self.buf[at..], v)
        }
    }
}

/// Serializes a volume as a single-file NIfTI-1 image (uncompressed).
pub fn write_nifti_bytes(volume: &Volume, endianness: Endianness) -> Vec<u8> {
    let big = endianness == Endianness::Big;
    let mut w = HeaderWriter {
        buf: vec![0u8; DEFAULT_VOX_OFFSET],
        big,
    };
    let dt = volume.datatype();
    let dims = volume.dims();
    let spacing = volume.spacing();
    let dir = volume.direction();
    let origin = volume.origin();

    w.i32(0, HEADER_SIZE as i32);
    w.buf[38] = b'r';
    w.i16(offset::DIM, 3);
    for (axis, &d) in dims.iter().enumerate() {
        w.i16(offset::DIM + 2 * (axis + 1), d as i16);
    }
    for axis in 4..8 {
        w.i16(offset::DIM + 2 * axis, 1);
    }
    w.i16(offset::DATATYPE, dt.code());
    w.i16(offset::BITPIX, (dt.bytes_per_voxel() * 8) as i16);

    let (qb, qc, qd, qfac) = matrix_to_quaternion(dir);
    w.f32(offset::PIXDIM, qfac as f32);
    for (axis, &s) in spacing.iter().enumerate() {
        w.f32(offset::PIXDIM + 4 * (axis + 1), s as f32);
    }
    w.f32(offset::VOX_OFFSET, DEFAULT_VOX_OFFSET as f32);
    let (slope, inter) = match volume.kind() {
        VolumeKind::Intensity => volume.scaling(),
        VolumeKind::Label => (1.0, 0.0),
    };
    w.f32(offset::SCL_SLOPE, slope as f32);
    w.f32(offset::SCL_INTER, inter as f32);
    // mm + sec
    w.buf[offset::XYZT_UNITS] = 2 | 8;
    let descrip = b"bodyregion";
    w.buf[offset::DESCRIP..offset::DESCRIP + descrip.len()].copy_from_slice(descrip);

    w.i16(offset::QFORM_CODE, 1);
    w.i16(offset::SFORM_CODE, 1);
    w.f32(offset::QUATERN_B, qb as f32);
    w.f32(offset::QUATERN_B + 4, qc as f32);
    w.f32(offset::QUATERN_B + 8, qd as f32);
    for (i, &o) in origin.iter().enumerate() {
        w.f32(offset::QOFFSET_X + 4 * i, o as f32);
    }
    for r in 0..3 {
        for c in 0..3 {
            w.f32(offset::SROW_X + 16 * r + 4 * c, (dir[r][c] * spacing[c]) as f32);
        }
        w.f32(offset::SROW_X + 16 * r + 12, origin[r] as f32);
    }
    w.buf[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"n+1\0");

    let mut buf = w.buf;
    buf.reserve(volume.len() * dt.bytes_per_voxel());
    encode_voxels(volume, big, &mut buf);
    buf
}

fn encode_voxels(volume: &Volume, big: bool, out: &mut Vec<u8>) {
    let dt = volume.datatype();
    let values: Box<dyn Iterator<Item = f64> + '_> = match volume.voxels() {
        Voxels::Label(v) => Box::new(v.iter().map(|&l| l as f64)),
        Voxels::Intensity(v) => {
            let (slope, inter) = volume.scaling();
            if slope == 1.0 && inter == 0.0 {
                Box::new(v.iter().copied())
            } else {
                Box::new(v.iter().map(move |&x| (x - inter) / slope))
            }
        }
    };
    let mut tmp = [0u8; 8];
    for v in values {
        let width = dt.bytes_per_voxel();
        let slot = &mut tmp[..width];
        macro_rules! put {
            ($write:ident, $val:expr) => {
                if big {
                    BigEndian::$write(slot, $val)
                } else {
                    LittleEndian::$write(slot, $val)
                }
            };
        }
        match dt {
            DataType::UInt8 => slot[0] = v.round() as u8,
            DataType::Int16 => put!(write_i16, v.round() as i16),
            DataType::UInt16 => put!(write_u16, v.round() as u16),
            DataType::Int32 => put!(write_i32, v.round() as i32),
            DataType::Float32 => put!(write_f32, v as f32),
            DataType::Float64 => put!(write_f64, v),
        }
        out.extend_from_slice(slot);
    }
}

/// Writes a volume to `path`; a `.gz` suffix selects gzip compression.
pub fn write_nifti(path: &Path, volume: &Volume, endianness: Endianness) -> Result<()> {
    let bytes = write_nifti_bytes(volume, endianness);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::fast());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label_volume() -> Volume {
        Volume::from_labels([2, 2, 2], [1.5, 1.5, 3.0], vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap()
    }

    #[test]
    fn all_zero_uint8_volume() {
        let v = Volume::new([2, 2, 2], [1.0; 3], DataType::UInt8, Voxels::Label(vec![0; 8])).unwrap();
        let back = read_nifti_bytes(write_nifti_bytes(&v, Endianness::Little), VolumeKind::Label).unwrap();
        assert_eq!(back.dims(), [2, 2, 2]);
        assert!(back.labels().unwrap().iter().all(|&l| l == 0));
        assert_eq!(back.datatype(), DataType::UInt8);
    }

    #[test]
    fn bad_magic_is_malformed() {
        let mut bytes = write_nifti_bytes(&label_volume(), Endianness::Little);
        bytes[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"xyz\0");
        assert!(matches!(
            read_nifti_bytes(bytes, VolumeKind::Label),
            Err(VolumeError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_nifti_bytes(vec![0; 100], VolumeKind::Label),
            Err(VolumeError::MalformedHeader(_))
        ));
    }

    #[test]
    fn spacing_survives_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.nii", "a.nii.gz"] {
            let path = dir.path().join(name);
            write_nifti(&path, &label_volume(), Endianness::Little).unwrap();
            let back = load_volume(&path, VolumeKind::Label).unwrap();
            assert_eq!(back.spacing(), [1.5, 1.5, 3.0]);
            assert_eq!(back, label_volume());
        }
    }

    #[test]
    fn truncated_payload_is_dimension_mismatch() {
        let mut bytes = write_nifti_bytes(&label_volume(), Endianness::Little);
        bytes.pop();
        assert!(matches!(
            read_nifti_bytes(bytes, VolumeKind::Label),
            Err(VolumeError::DimensionMismatch { expected: 16, found: 15 })
        ));
    }

    #[test]
    fn datatype_rules() {
        let mut bytes = write_nifti_bytes(&label_volume(), Endianness::Little);
        // complex64
        LittleEndian::write_i16(&mut bytes[offset::DATATYPE..], 32);
        assert!(matches!(
            read_nifti_bytes(bytes, VolumeKind::Label),
            Err(VolumeError::UnsupportedDatatype { code: 32, .. })
        ));
        // uint8 is a label type only
        let bytes = write_nifti_bytes(
            &Volume::new([1, 1, 2], [1.0; 3], DataType::UInt8, Voxels::Label(vec![1, 2])).unwrap(),
            Endianness::Little,
        );
        assert!(matches!(
            read_nifti_bytes(bytes, VolumeKind::Intensity),
            Err(VolumeError::UnsupportedDatatype { code: 2, .. })
        ));
    }

    #[test]
    fn non_integer_labels_rejected() {
        let v = Volume::new(
            [1, 1, 2],
            [1.0; 3],
            DataType::Float32,
            Voxels::Intensity(vec![1.0, 2.5]),
        )
        .unwrap();
        let bytes = write_nifti_bytes(&v, Endianness::Little);
        assert!(matches!(
            read_nifti_bytes(bytes.clone(), VolumeKind::Label),
            Err(VolumeError::NotALabelMap(_))
        ));
        let v = Volume::new([1, 1, 2], [1.0; 3], DataType::Int16, Voxels::Intensity(vec![-1.0, 2.0])).unwrap();
        assert!(matches!(
            read_nifti_bytes(write_nifti_bytes(&v, Endianness::Big), VolumeKind::Label),
            Err(VolumeError::NotALabelMap(_))
        ));
        let v = Volume::new([1, 1, 2], [1.0; 3], DataType::Float32, Voxels::Intensity(vec![3.0, 0.0])).unwrap();
        let labels = read_nifti_bytes(write_nifti_bytes(&v, Endianness::Little), VolumeKind::Label).unwrap();
        assert_eq!(labels.labels().unwrap(), &[3, 0]);
    }

    #[test]
    fn scaling_applied_to_intensity() {
        let v = Volume::new([1, 1, 3], [1.0; 3], DataType::Int16, Voxels::Intensity(vec![-1024.0, 0.0, 3072.0]))
            .unwrap()
            .with_scaling(2.0, -1024.0);
        let bytes = write_nifti_bytes(&v, Endianness::Little);
        let raw = LittleEndian::read_i16(&bytes[DEFAULT_VOX_OFFSET..]);
        assert_eq!(raw, 0);
        let back = read_nifti_bytes(bytes, VolumeKind::Intensity).unwrap();
        assert_eq!(back.intensities().unwrap(), &[-1024.0, 0.0, 3072.0]);
    }

    #[test]
    fn qform_used_when_sform_absent() {
        // 90 degree rotation about z plus a flipped z axis
        let dir = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]];
        let v = label_volume().with_direction(dir).with_origin([10.0, -4.0, 2.5]);
        let mut bytes = write_nifti_bytes(&v, Endianness::Little);
        LittleEndian::write_i16(&mut bytes[offset::SFORM_CODE..], 0);
        let back = read_nifti_bytes(bytes, VolumeKind::Label).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((back.direction()[r][c] - dir[r][c]).abs() < 1e-6, "{:?}", back.direction());
            }
        }
        assert_eq!(back.origin(), [10.0, -4.0, 2.5]);
    }

    #[test]
    fn no_transform_gives_identity() {
        let mut bytes = write_nifti_bytes(&label_volume().with_direction([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), Endianness::Little);
        LittleEndian::write_i16(&mut bytes[offset::SFORM_CODE..], 0);
        LittleEndian::write_i16(&mut bytes[offset::QFORM_CODE..], 0);
        let back = read_nifti_bytes(bytes, VolumeKind::Label).unwrap();
        assert_eq!(*back.direction(), IDENTITY);
    }

    #[test]
    fn paired_header_and_image() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = write_nifti_bytes(&label_volume(), Endianness::Little);
        let mut hdr = bytes[..HEADER_SIZE].to_vec();
        hdr[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"ni1\0");
        LittleEndian::write_f32(&mut hdr[offset::VOX_OFFSET..], 0.0);
        fs::write(dir.path().join("scan.hdr"), &hdr).unwrap();
        fs::write(dir.path().join("scan.img"), &bytes[DEFAULT_VOX_OFFSET..]).unwrap();
        let back = load_volume(&dir.path().join("scan.hdr"), VolumeKind::Label).unwrap();
        assert_eq!(back.labels(), label_volume().labels());
    }

    #[test]
    fn four_d_rejected() {
        let mut bytes = write_nifti_bytes(&label_volume(), Endianness::Little);
        LittleEndian::write_i16(&mut bytes[offset::DIM..], 4);
        LittleEndian::write_i16(&mut bytes[offset::DIM + 8..], 2);
        assert!(matches!(
            read_nifti_bytes(bytes, VolumeKind::Label),
            Err(VolumeError::UnsupportedShape(_))
        ));
    }

    #[test]
    fn quaternion_roundtrip_for_signed_permutations() {
        let perms = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]];
        for p in perms {
            for flips in 0..8u8 {
                let mut m = [[0.0; 3]; 3];
                for c in 0..3 {
                    m[p[c]][c] = if flips & (1 << c) != 0 { -1.0 } else { 1.0 };
                }
                let (b, c, d, qfac) = matrix_to_quaternion(&m);
                let back = quaternion_to_matrix(b, c, d, qfac);
                for r in 0..3 {
                    for col in 0..3 {
                        assert!((back[r][col] - m[r][col]).abs() < 1e-9, "{m:?} -> {back:?}");
                    }
                }
            }
        }
    }

    fn payload(dt: DataType) -> BoxedStrategy<Voxels> {
        let n = 24;
        match dt {
            DataType::UInt8 => proptest::collection::vec(0u32..=255, n).prop_map(Voxels::Label).boxed(),
            DataType::UInt16 => proptest::collection::vec(0u32..=65535, n).prop_map(Voxels::Label).boxed(),
            DataType::Int32 => proptest::collection::vec(0u32..=i32::MAX as u32, n).prop_map(Voxels::Label).boxed(),
            DataType::Int16 => proptest::collection::vec(any::<i16>(), n)
                .prop_map(|v| Voxels::Intensity(v.into_iter().map(f64::from).collect()))
                .boxed(),
            DataType::Float32 => proptest::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), n)
                .prop_map(|v| Voxels::Intensity(v.into_iter().map(f64::from).collect()))
                .boxed(),
            DataType::Float64 => proptest::collection::vec(-1e300f64..1e300, n).prop_map(Voxels::Intensity).boxed(),
        }
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            (dt, voxels) in proptest::sample::select(DataType::ALL.to_vec()).prop_flat_map(|dt| (Just(dt), payload(dt))),
            spacing in proptest::array::uniform3(1u16..4000).prop_map(|s| s.map(|x| x as f64 / 1000.0 * 4.0)),
            big in any::<bool>(),
        ) {
            let v = Volume::new([2, 3, 4], spacing.map(|s| s as f32 as f64), dt, voxels).unwrap();
            let e = if big { Endianness::Big } else { Endianness::Little };
            let bytes = write_nifti_bytes(&v, e);
            let kind = v.kind();
            let back = read_nifti_bytes(bytes.clone(), kind).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            prop_assert_eq!(back.spacing(), v.spacing());
            prop_assert_eq!(back.datatype(), v.datatype());
            match (back.voxels(), v.voxels()) {
                (Voxels::Intensity(a), Voxels::Intensity(b)) => {
                    prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
                }
                (a, b) => prop_assert_eq!(a, b),
            }
            prop_assert_eq!(write_nifti_bytes(&back, e), bytes);
        }
    }
}
