use super::{Result, Volume, VolumeError, Voxels};

/// Minimum absolute direction-cosine component for a voxel axis to count as
/// aligned with a world axis.
pub const DEFAULT_OBLIQUE_THRESHOLD: f64 = 0.7;

/// Reorders and flips voxel axes so that axis 0 runs along world x
/// (left-right), axis 1 along world y (posterior-anterior) and axis 2 along
/// world z from inferior to superior.
pub fn canonicalize(volume: &Volume) -> Result<Volume> {
    canonicalize_with_threshold(volume, DEFAULT_OBLIQUE_THRESHOLD)
}

pub fn canonicalize_with_threshold(volume: &Volume, threshold: f64) -> Result<Volume> {
    let dir = volume.direction();
    // target[i] = world axis of voxel axis i
    let mut target = [0usize; 3];
    let mut flip = [false; 3];
    let mut taken = [false; 3];
    for axis in 0..3 {
        let (world, component) = (0..3)
            .map(|r| (r, dir[r][axis]))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap_or((0, 0.0));
        if component.abs() <= threshold || taken[world] {
            return Err(VolumeError::ObliqueVolume {
                axis,
                component: component.abs(),
            });
        }
        taken[world] = true;
        target[axis] = world;
        flip[axis] = component < 0.0;
    }
    if target == [0, 1, 2] && flip == [false; 3] {
        return Ok(volume.clone());
    }

    let old_dims = volume.dims();
    let old_spacing = volume.spacing();
    let mut dims = [0; 3];
    let mut spacing = [0.0; 3];
    // source[j] = voxel axis that becomes canonical axis j
    let mut source = [0usize; 3];
    for axis in 0..3 {
        dims[target[axis]] = old_dims[axis];
        spacing[target[axis]] = old_spacing[axis];
        source[target[axis]] = axis;
    }

    // Strides of the old layout, arranged per new axis, with flips folded
    // into a start offset and negative step.
    let old_stride = [1isize, old_dims[0] as isize, (old_dims[0] * old_dims[1]) as isize];
    let mut step = [0isize; 3];
    let mut start = 0isize;
    for j in 0..3 {
        let a = source[j];
        if flip[a] {
            start += (old_dims[a] as isize - 1) * old_stride[a];
            step[j] = -old_stride[a];
        } else {
            step[j] = old_stride[a];
        }
    }
    fn gather<T: Copy>(src: &[T], dims: [usize; 3], start: isize, step: [isize; 3]) -> Vec<T> {
        let mut out = Vec::with_capacity(src.len());
        for k in 0..dims[2] as isize {
            for j in 0..dims[1] as isize {
                let row = start + k * step[2] + j * step[1];
                out.extend((0..dims[0] as isize).map(|i| src[(row + i * step[0]) as usize]));
            }
        }
        out
    }
    let voxels = match volume.voxels() {
        Voxels::Label(v) => Voxels::Label(gather(v, dims, start, step)),
        Voxels::Intensity(v) => Voxels::Intensity(gather(v, dims, start, step)),
    };

    let mut direction = [[0.0; 3]; 3];
    let mut origin = volume.origin();
    for axis in 0..3 {
        let sign = if flip[axis] { -1.0 } else { 1.0 };
        for (r, row) in direction.iter_mut().enumerate() {
            row[target[axis]] = sign * dir[r][axis];
        }
        if flip[axis] {
            let span = old_spacing[axis] * (old_dims[axis] as f64 - 1.0);
            for (r, o) in origin.iter_mut().enumerate() {
                *o += dir[r][axis] * span;
            }
        }
    }
    Ok(volume
        .with_voxels(dims, spacing, voxels)
        .with_direction(direction)
        .with_origin(origin))
}
