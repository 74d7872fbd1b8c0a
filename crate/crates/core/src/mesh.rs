//! Uniform Cartesian voxel mesh over a [`BoxDomain`].

use crate::error::{Error, Result};
use crate::model::BoxDomain;

pub type VoxelId = usize;

const FACE_SNAP: f64 = 1e-10;

/// Per-face jump rate for diffusion constant `d` on voxels of width `h`.
pub fn jump_rate(d: f64, h: f64) -> f64 {
    d / (h * h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianMesh {
    pub domain: BoxDomain,
    pub h: f64,
    pub dims: [usize; 3],
}

impl CartesianMesh {
    /// Cubic voxels; every box extent must be an integer multiple of h.
    pub fn new(domain: &BoxDomain, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParam(format!("voxel counts {dims:?} must be positive")));
        }
        let ext = domain.extent();
        let h = ext[0] / dims[0] as f64;
        for k in 1..3 {
            let hk = ext[k] / dims[k] as f64;
            if ((hk - h) / h).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "voxel counts {dims:?} do not give cubic voxels for extent {ext:?}"
                )));
            }
        }
        Ok(Self {
            domain: *domain,
            h,
            dims,
        })
    }

    /// Mesh with voxel width `h`; fails unless h tiles the box exactly.
    pub fn with_width(domain: &BoxDomain, h: f64) -> Result<Self> {
        let ext = domain.extent();
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let n = (ext[k] / h).round();
            if n < 1.0 || ((n * h - ext[k]) / ext[k]).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "h = {h} does not tile extent {} along axis {k}",
                    ext[k]
                )));
            }
            dims[k] = n as usize;
        }
        Self::new(domain, dims)
    }

    pub fn cube(side: f64, n: usize) -> Self {
        Self::new(&BoxDomain::cube(side), [n; 3]).expect("cube mesh is always valid")
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.h.powi(3)
    }

    pub fn index(&self, ijk: [usize; 3]) -> VoxelId {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    pub fn coords(&self, v: VoxelId) -> [usize; 3] {
        let i = v % self.dims[0];
        let j = (v / self.dims[0]) % self.dims[1];
        let k = v / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// Voxel containing `p`. Faces belong to the voxel above them
    /// (lower-inclusive); points on the upper box wall go to the last voxel.
    pub fn voxel_of(&self, p: &[f64; 3]) -> VoxelId {
        let ijk = std::array::from_fn(|k| {
            // snap points within round-off of a face onto the upper voxel
            let x = (p[k] - self.domain.lower[k]) / self.h + FACE_SNAP;
            (x.floor().max(0.0) as usize).min(self.dims[k] - 1)
        });
        self.index(ijk)
    }

    pub fn voxel_lower(&self, v: VoxelId) -> [f64; 3] {
        let ijk = self.coords(v);
        std::array::from_fn(|k| self.domain.lower[k] + ijk[k] as f64 * self.h)
    }

    pub fn voxel_center(&self, v: VoxelId) -> [f64; 3] {
        let lo = self.voxel_lower(v);
        lo.map(|x| x + 0.5 * self.h)
    }

    /// Face neighbors; outward faces on the box boundary are dropped.
    pub fn neighbors(&self, v: VoxelId) -> impl Iterator<Item = VoxelId> + '_ {
        let ijk = self.coords(v);
        (0..6).filter_map(move |f| {
            let axis = f / 2;
            let up = f % 2 == 1;
            let mut c = ijk;
            if up {
                if c[axis] + 1 >= self.dims[axis] {
                    return None;
                }
                c[axis] += 1;
            } else {
                if c[axis] == 0 {
                    return None;
                }
                c[axis] -= 1;
            }
            Some(self.index(c))
        })
    }

    pub fn n_neighbors(&self, v: VoxelId) -> usize {
        let ijk = self.coords(v);
        (0..3)
            .map(|k| {
                if self.dims[k] == 1 {
                    0
                } else if ijk[k] == 0 || ijk[k] + 1 == self.dims[k] {
                    1
                } else {
                    2
                }
            })
            .sum()
    }

    /// Voxel whose center is nearest to the box center (ties broken downward).
    pub fn central_voxel(&self) -> VoxelId {
        self.index(self.dims.map(|n| (n - 1) / 2))
    }
}
