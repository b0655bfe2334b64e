//! Binary Fourier-domain supports of the label-free modalities' transfer functions.
//!
//! Supports are unions of voxelized Ewald caps `K = k - k_i` over the admissible
//! illuminations, closed by a one-voxel dilation. ODT uses every lattice
//! illumination inside the condenser aperture; dark field uses a ring of
//! illuminations just outside the objective aperture; the incoherent bright-field
//! support is the pupil autocorrelation, i.e. the ODT support with the condenser
//! opened to the objective NA.

use std::f64::consts::PI;

use ndarray::{Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{axis_frequency, mirror_index, GridSpec, OpticalConfig, Volume3D, VolumeKind};
use crate::tomography::ewald::cap_samples;

use super::filter::radial_frequency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    BrightField,
    DarkField,
    Qpi,
    Odt,
    DarkFieldOdt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask3D {
    pub grid: GridSpec,
    pub mask: Array3<bool>,
    pub modality: Modality,
    /// Dark-field ring margin, cycles/µm.
    pub epsilon: f64,
}

impl SupportMask3D {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Symmetric under `K -> -K` with mirror indices taken modulo the axis length.
    pub fn is_hermitian(&self) -> bool {
        let (nx, ny, nz) = self.grid.shape();
        self.mask
            .indexed_iter()
            .all(|((i, j, k), &m)| m == self.mask[[mirror_index(nx, i), mirror_index(ny, j), mirror_index(nz, k)]])
    }

    /// Largest `|ξ_x|` (cycles/µm) over voxels in the mask.
    pub fn lateral_extent_x(&self) -> f64 {
        self.mask
            .indexed_iter()
            .filter(|(_, m)| **m)
            .map(|((i, _, _), _)| axis_frequency(self.grid.nx, self.grid.pitch, i).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            grid: self.grid,
            values: self.mask.mapv(|m| if m { 1.0 } else { 0.0 }),
            kind: VolumeKind::Mask,
        }
    }
}

/// Optional modality parameters, both in cycles/µm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportParams {
    /// Dark-field ring margin; one frequency bin when absent.
    pub epsilon: Option<f64>,
    /// Radius of the ball removed for dark-field ODT; required for that modality.
    pub cutoff: Option<f64>,
}

fn lateral_wavevector(config: &OpticalConfig, kx: f64, ky: f64) -> [f64; 3] {
    let k0 = config.k0();
    [kx, ky, (k0 * k0 - kx * kx - ky * ky).sqrt()]
}

fn add_cap(mask: &mut Array3<bool>, config: &OpticalConfig, grid: &GridSpec, k: [f64; 3]) {
    for s in cap_samples(config, grid, k).samples {
        mask[s.voxel] = true;
    }
}

/// Union of caps for every lattice illumination with lateral frequency inside `na_illum`.
fn lattice_union(config: &OpticalConfig, grid: &GridSpec, na_illum: f64) -> Array3<bool> {
    let mut mask = Array3::from_elem(grid.shape(), false);
    let limit = na_illum / config.wavelength_vacuum;
    for i in 0..grid.nx {
        let fx = axis_frequency(grid.nx, grid.pitch, i);
        for j in 0..grid.ny {
            let fy = axis_frequency(grid.ny, grid.pitch, j);
            if fx.hypot(fy) <= limit {
                add_cap(&mut mask, config, grid, lateral_wavevector(config, 2.0 * PI * fx, 2.0 * PI * fy));
            }
        }
    }
    mask
}

fn hermitian_close(mask: &mut Array3<bool>) {
    let (nx, ny, nz) = mask.dim();
    let mirrored = Array3::from_shape_fn((nx, ny, nz), |(i, j, k)| {
        mask[[mirror_index(nx, i), mirror_index(ny, j), mirror_index(nz, k)]]
    });
    Zip::from(mask).and(&mirrored).for_each(|m, &r| *m |= r);
}

/// 3×3×3 dilation, clipped at the grid edges.
pub fn dilate(mask: &Array3<bool>) -> Array3<bool> {
    let mut out = mask.clone();
    for axis in 0..3 {
        let src = out.clone();
        for (mut dst, lane) in out.lanes_mut(Axis(axis)).into_iter().zip(src.lanes(Axis(axis))) {
            let n = lane.len();
            for i in 0..n {
                dst[i] = lane[i] || (i > 0 && lane[i - 1]) || (i + 1 < n && lane[i + 1]);
            }
        }
    }
    out
}

pub fn make_ctf_support(
    config: &OpticalConfig,
    grid: &GridSpec,
    modality: Modality,
    params: SupportParams,
) -> Result<SupportMask3D> {
    config.validate()?;
    grid.validate()?;
    let bin = 1.0 / grid.min_fov();
    let epsilon = params.epsilon.unwrap_or(bin);
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }

    let mut mask = match modality {
        Modality::Qpi => {
            let mut m = Array3::from_elem(grid.shape(), false);
            add_cap(&mut m, config, grid, [0.0, 0.0, config.k0()]);
            m
        }
        Modality::Odt | Modality::DarkFieldOdt => lattice_union(config, grid, config.na_condenser),
        Modality::BrightField => lattice_union(config, grid, config.na_objective),
        Modality::DarkField => {
            let ring = config.na_objective / config.wavelength_vacuum + epsilon;
            if ring >= config.n_medium / config.wavelength_vacuum {
                return Err(Error::Evanescent(format!(
                    "dark-field ring at {ring} cycles/um is beyond the medium wavenumber"
                )));
            }
            let azimuths = (4.0 * 2.0 * PI * ring / bin).ceil() as usize;
            let mut m = Array3::from_elem(grid.shape(), false);
            for a in 0..azimuths {
                let phi = 2.0 * PI * a as f64 / azimuths as f64;
                let kr = 2.0 * PI * ring;
                add_cap(&mut m, config, grid, lateral_wavevector(config, kr * phi.cos(), kr * phi.sin()));
            }
            m
        }
    };
    if modality != Modality::Qpi {
        hermitian_close(&mut mask);
    }
    mask = dilate(&mask);
    if modality != Modality::Qpi {
        hermitian_close(&mut mask);
    }

    if modality == Modality::DarkFieldOdt {
        let cutoff = params
            .cutoff
            .ok_or_else(|| Error::MissingParameter("dark_field_odt support requires a cutoff".into()))?;
        if !(cutoff > 0.0) {
            return Err(Error::InvalidParameter(format!("cutoff must be > 0, got {cutoff}")));
        }
        Zip::from(&mut mask).and(&radial_frequency(grid)).for_each(|m, &xi| {
            if xi < cutoff {
                *m = false;
            }
        });
    }
    Ok(SupportMask3D { grid: *grid, mask, modality, epsilon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskAgreement {
    pub voxels: usize,
    pub agreeing: usize,
    pub fraction: f64,
    pub disagreements: usize,
    /// Disagreeing voxels with no differing 26-neighbour in either mask.
    pub interior_disagreements: usize,
}

fn on_boundary(mask: &Array3<bool>, i: usize, j: usize, k: usize) -> bool {
    let (nx, ny, nz) = mask.dim();
    let v = mask[[i, j, k]];
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            for dk in -1i64..=1 {
                let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                    continue;
                }
                if mask[[a as usize, b as usize, c as usize]] != v {
                    return true;
                }
            }
        }
    }
    false
}

/// Voxelwise agreement of two masks on the same grid.
pub fn compare_masks(a: &SupportMask3D, b: &SupportMask3D) -> Result<MaskAgreement> {
    a.grid.check_same(&b.grid)?;
    let voxels = a.mask.len();
    let mut disagreements = 0;
    let mut interior = 0;
    for ((i, j, k), &x) in a.mask.indexed_iter() {
        if x != b.mask[[i, j, k]] {
            disagreements += 1;
            if !on_boundary(&a.mask, i, j, k) && !on_boundary(&b.mask, i, j, k) {
                interior += 1;
            }
        }
    }
    let agreeing = voxels - disagreements;
    Ok(MaskAgreement {
        voxels,
        agreeing,
        fraction: agreeing as f64 / voxels as f64,
        disagreements,
        interior_disagreements: interior,
    })
}
