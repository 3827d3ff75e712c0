//! Voxel volumes, NIfTI-1 I/O, orientation canonicalization and the
//! per-class slice presence index.

mod nifti;
mod orient;
mod presence;

pub use nifti::{load_volume, read_nifti_bytes, write_nifti, write_nifti_bytes, Endianness};
pub use orient::{canonicalize, canonicalize_with_threshold, DEFAULT_OBLIQUE_THRESHOLD};
pub use presence::{build_presence_index, ClassPresence, SlicePresenceIndex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {code} for {kind:?} volume")]
    UnsupportedDatatype { code: i16, kind: VolumeKind },
    #[error("voxel data length mismatch: expected {expected} bytes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported image shape: {0}")]
    UnsupportedShape(String),
    #[error("not a label map: {0}")]
    NotALabelMap(String),
    #[error("expected a {expected:?} volume")]
    WrongKind { expected: VolumeKind },
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("volume is too oblique for slice-based analysis (voxel axis {axis} has dominant component {component:.3})")]
    ObliqueVolume { axis: usize, component: f64 },
    #[error("volume contains no labelled voxels")]
    EmptyVolume,
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Label,
    Intensity,
}

/// NIfTI datatypes this crate reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataType {
    UInt8,
    Int16,
    Int32,
    Float32,
    Float64,
    UInt16,
}

impl DataType {
    pub const ALL: [DataType; 6] = [
        DataType::UInt8,
        DataType::Int16,
        DataType::Int32,
        DataType::Float32,
        DataType::Float64,
        DataType::UInt16,
    ];

    pub fn code(self) -> i16 {
        match self {
            DataType::UInt8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
            DataType::Float64 => 64,
            DataType::UInt16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        DataType::ALL.into_iter().find(|d| d.code() == code)
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            DataType::UInt8 => 1,
            DataType::Int16 | DataType::UInt16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DataType::Float32 | DataType::Float64)
    }

    /// Datatypes accepted for each volume kind. Float label maps are accepted
    /// as long as every value is a non-negative integer.
    pub fn supports(self, kind: VolumeKind) -> bool {
        match kind {
            VolumeKind::Label => true,
            VolumeKind::Intensity => {
                matches!(self, DataType::Int16 | DataType::Float32 | DataType::Float64)
            }
        }
    }

    fn max_label(self) -> f64 {
        match self {
            DataType::UInt8 => u8::MAX as f64,
            DataType::Int16 => i16::MAX as f64,
            DataType::UInt16 => u16::MAX as f64,
            DataType::Int32 => i32::MAX as f64,
            DataType::Float32 => 16_777_216.0,
            DataType::Float64 => u32::MAX as f64,
        }
    }
}

/// Voxel payload in NIfTI index order (axis 0 fastest).
#[derive(Debug, Clone, PartialEq)]
pub enum Voxels {
    Label(Vec<u32>),
    Intensity(Vec<f64>),
}

impl Voxels {
    pub fn len(&self) -> usize {
        match self {
            Voxels::Label(v) => v.len(),
            Voxels::Intensity(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> VolumeKind {
        match self {
            Voxels::Label(_) => VolumeKind::Label,
            Voxels::Intensity(_) => VolumeKind::Intensity,
        }
    }
}

pub type Matrix3 = [[f64; 3]; 3];

pub const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// A 3-D voxel grid with its world geometry.
///
/// `direction[r][c]` is the world component `r` of voxel axis `c`, so each
/// column is a unit vector. Values are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    direction: Matrix3,
    origin: [f64; 3],
    datatype: DataType,
    scaling: (f64, f64),
    voxels: Voxels,
}

impl Volume {
    /// Label volume stored as `uint16` with identity geometry.
    pub fn from_labels(dims: [usize; 3], spacing: [f64; 3], labels: Vec<u32>) -> Result<Self> {
        let datatype = if labels.iter().all(|&l| l <= u16::MAX as u32) {
            DataType::UInt16
        } else {
            DataType::Int32
        };
        Self::new(dims, spacing, datatype, Voxels::Label(labels))
    }

    /// Intensity volume stored as `float32` with identity geometry.
    pub fn from_intensities(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        Self::new(dims, spacing, DataType::Float32, Voxels::Intensity(values))
    }

    pub fn new(dims: [usize; 3], spacing: [f64; 3], datatype: DataType, voxels: Voxels) -> Result<Self> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!("zero-sized dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invalid(format!("non-positive spacing {spacing:?}")));
        }
        let n = dims.iter().product::<usize>();
        if voxels.len() != n {
            return Err(VolumeError::DimensionMismatch {
                expected: n,
                found: voxels.len(),
            });
        }
        if !datatype.supports(voxels.kind()) {
            return Err(VolumeError::UnsupportedDatatype {
                code: datatype.code(),
                kind: voxels.kind(),
            });
        }
        if let Voxels::Label(labels) = &voxels {
            let max = datatype.max_label();
            if let Some(bad) = labels.iter().find(|&&l| l as f64 > max) {
                return Err(VolumeError::Invalid(format!(
                    "label {bad} does not fit datatype {datatype:?}"
                )));
            }
        }
        Ok(Volume {
            dims,
            spacing,
            direction: IDENTITY,
            origin: [0.0; 3],
            datatype,
            scaling: (1.0, 0.0),
            voxels,
        })
    }

    pub fn with_direction(mut self, direction: Matrix3) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    /// `(scl_slope, scl_inter)` used when writing intensity volumes back to
    /// integer datatypes.
    pub fn with_scaling(mut self, slope: f64, inter: f64) -> Self {
        self.scaling = (slope, inter);
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn direction(&self) -> &Matrix3 {
        &self.direction
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn datatype(&self) -> DataType {
        self.datatype
    }

    pub fn scaling(&self) -> (f64, f64) {
        self.scaling
    }

    pub fn kind(&self) -> VolumeKind {
        self.voxels.kind()
    }

    pub fn voxels(&self) -> &Voxels {
        &self.voxels
    }

    pub fn labels(&self) -> Option<&[u32]> {
        match &self.voxels {
            Voxels::Label(v) => Some(v),
            Voxels::Intensity(_) => None,
        }
    }

    pub fn intensities(&self) -> Option<&[f64]> {
        match &self.voxels {
            Voxels::Intensity(v) => Some(v),
            Voxels::Label(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub(crate) fn with_voxels(&self, dims: [usize; 3], spacing: [f64; 3], voxels: Voxels) -> Self {
        Volume {
            dims,
            spacing,
            direction: self.direction,
            origin: self.origin,
            datatype: self.datatype,
            scaling: self.scaling,
            voxels,
        }
    }
}
