use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, Volume, VolumeError, VolumeKind};

/// Slice range and size of one class along the superior-inferior axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPresence {
    pub min_slice: usize,
    pub max_slice: usize,
    pub voxel_count: u64,
}

impl ClassPresence {
    pub fn span_slices(&self) -> usize {
        self.max_slice - self.min_slice + 1
    }

    pub fn covers(&self, slice: usize) -> bool {
        (self.min_slice..=self.max_slice).contains(&slice)
    }
}

/// Per-class slice ranges of a canonical label volume. Slice 0 is the most
/// inferior slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePresenceIndex {
    pub si_axis_len: usize,
    pub si_spacing_cm: f64,
    pub per_class: BTreeMap<u32, ClassPresence>,
    pub first_nonempty_slice: usize,
    pub last_nonempty_slice: usize,
}

impl SlicePresenceIndex {
    /// Builds an index from entries; `None` when there are no entries.
    pub fn from_entries(
        si_axis_len: usize,
        si_spacing_cm: f64,
        per_class: BTreeMap<u32, ClassPresence>,
    ) -> Option<Self> {
        let first = per_class.values().map(|p| p.min_slice).min()?;
        let last = per_class.values().map(|p| p.max_slice).max()?;
        Some(SlicePresenceIndex {
            si_axis_len,
            si_spacing_cm,
            per_class,
            first_nonempty_slice: first,
            last_nonempty_slice: last,
        })
    }

    /// Drops classes with fewer than `min_voxels` voxels. `None` if nothing
    /// remains.
    pub fn retain_min_voxels(&self, min_voxels: u64) -> Option<Self> {
        let kept = self
            .per_class
            .iter()
            .filter(|(_, p)| p.voxel_count >= min_voxels)
            .map(|(&id, &p)| (id, p))
            .collect();
        Self::from_entries(self.si_axis_len, self.si_spacing_cm, kept)
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassPresence> {
        self.per_class.get(&class_id)
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.per_class.contains_key(&class_id)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.per_class.keys().copied()
    }

    /// Whether `slice` is the first or last slice of the volume.
    pub fn is_volume_boundary(&self, slice: usize) -> bool {
        slice == 0 || slice + 1 == self.si_axis_len
    }
}

/// Scans a canonical label volume and records, for every non-zero class, its
/// min/max slice along axis 2 and its voxel count.
pub fn build_presence_index(volume: &Volume) -> Result<SlicePresenceIndex> {
    let labels = volume.labels().ok_or(VolumeError::WrongKind {
        expected: VolumeKind::Label,
    })?;
    let [nx, ny, nz] = volume.dims();
    let plane = nx * ny;
    let mut per_class: BTreeMap<u32, ClassPresence> = BTreeMap::new();
    for k in 0..nz {
        let slice = &labels[k * plane..(k + 1) * plane];
        let mut run: Option<(u32, u64)> = None;
        let mut flush = |(id, n): (u32, u64)| {
            per_class
                .entry(id)
                .and_modify(|p| {
                    p.max_slice = k;
                    p.voxel_count += n;
                })
                .or_insert(ClassPresence {
                    min_slice: k,
                    max_slice: k,
                    voxel_count: n,
                });
        };
        for &l in slice.iter().filter(|&&l| l != 0) {
            run = match run {
                Some((id, n)) if id == l => Some((id, n + 1)),
                Some(prev) => {
                    flush(prev);
                    Some((l, 1))
                }
                None => Some((l, 1)),
            };
        }
        if let Some(prev) = run {
            flush(prev);
        }
    }
    SlicePresenceIndex::from_entries(nz, volume.spacing()[2] / 10.0, per_class)
        .ok_or(VolumeError::EmptyVolume)
}
