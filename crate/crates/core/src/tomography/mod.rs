//! Ewald-cap mapping of Rytov fields into the object spectrum, direct inversion
//! to refractive index, and the Gerchberg-Papoulis non-negativity iteration.

pub mod ewald;
mod gp;

pub use gp::{gerchberg_papoulis, measured_samples, GpConfig, GpIteration, GpResult};

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::holography::RytovField;
use crate::optics::{mirror_index, GridSpec, OpticalConfig, Spectrum3D, Volume3D, VolumeKind};

use ewald::{cap_samples, field_per_potential};

/// Voxel fraction above which radicand clamping marks a reconstruction as degenerate.
pub const MAX_CLAMP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingReport {
    pub frames_mapped: usize,
    pub voxels_touched: usize,
    pub collisions_averaged: usize,
    pub evanescent_discarded: usize,
    /// Cap samples whose axial frequency falls beyond the grid's Nyquist limit.
    pub out_of_grid_discarded: usize,
}

struct Accumulator {
    sum: Array3<Complex64>,
    weight: Array3<f64>,
    contributions: usize,
    evanescent: usize,
    out_of_grid: usize,
}

impl Accumulator {
    fn new(grid: &GridSpec) -> Self {
        Accumulator {
            sum: Array3::zeros(grid.shape()),
            weight: Array3::zeros(grid.shape()),
            contributions: 0,
            evanescent: 0,
            out_of_grid: 0,
        }
    }

    fn add_frame(&mut self, frame: &RytovField, config: &OpticalConfig, grid: &GridSpec) {
        let psi = fft::fft2(&frame.0.values);
        let geo = cap_samples(config, grid, frame.0.k_illum);
        for s in &geo.samples {
            self.sum[s.voxel] += psi[s.lateral] / field_per_potential(grid, s.kz);
            self.weight[s.voxel] += 1.0;
        }
        self.contributions += geo.samples.len();
        self.evanescent += geo.evanescent;
        self.out_of_grid += geo.out_of_grid;
    }

    fn merge(mut self, other: Accumulator) -> Self {
        self.sum += &other.sum;
        self.weight += &other.weight;
        self.contributions += other.contributions;
        self.evanescent += other.evanescent;
        self.out_of_grid += other.out_of_grid;
        self
    }
}

/// Maps each frame's Rytov spectrum onto its Ewald cap: a lateral frequency with
/// axial wavenumber `k_z` contributes `(k_z / 2πi)·psi~` (in unitary units) to
/// the voxel nearest `K = k - k_i`. Colliding contributions are averaged.
///
/// With `parallel`, frames are accumulated on worker threads and summed once;
/// results then agree with the sequential order to rounding.
pub fn map_ewald(
    fields: &[RytovField],
    config: &OpticalConfig,
    grid: &GridSpec,
    parallel: bool,
) -> Result<(Spectrum3D, MappingReport)> {
    config.validate()?;
    grid.validate()?;
    if fields.is_empty() {
        return Err(Error::EmptyInput("no fields to map".into()));
    }
    for (i, f) in fields.iter().enumerate() {
        let f = &f.0;
        if f.nx != grid.nx || f.ny != grid.ny || (f.pitch - grid.pitch).abs() > 1e-12 * grid.pitch {
            return Err(Error::GridMismatch(format!(
                "frame {i} is {}x{} at pitch {} but the grid is {}x{} at pitch {}",
                f.nx, f.ny, f.pitch, grid.nx, grid.ny, grid.pitch
            )));
        }
        f.validate(config).map_err(|e| Error::GridMismatch(format!("frame {i}: {e}")))?;
    }
    grid.check_band(config);

    let acc = if parallel {
        fields
            .par_iter()
            .fold(
                || Accumulator::new(grid),
                |mut acc, f| {
                    acc.add_frame(f, config, grid);
                    acc
                },
            )
            .reduce(|| Accumulator::new(grid), Accumulator::merge)
    } else {
        let mut acc = Accumulator::new(grid);
        for f in fields {
            acc.add_frame(f, config, grid);
        }
        acc
    };

    let voxels_touched = acc.weight.iter().filter(|w| **w > 0.0).count();
    let mut values = acc.sum;
    Zip::from(&mut values).and(&acc.weight).for_each(|v, &w| {
        if w > 0.0 {
            *v /= w;
        }
    });
    let report = MappingReport {
        frames_mapped: fields.len(),
        voxels_touched,
        collisions_averaged: acc.contributions - voxels_touched,
        evanescent_discarded: acc.evanescent,
        out_of_grid_discarded: acc.out_of_grid,
    };
    Ok((Spectrum3D { grid: *grid, values, weights: acc.weight }, report))
}

/// Completes a measured spectrum with its Hermitian mirror: each voxel pair
/// `(k, -k)` gets the weight-averaged value of `S(k)` and `conj(S(-k))`.
/// The filled set becomes symmetric and the inverse transform real.
pub fn hermitian_complete(spec: &Spectrum3D) -> Spectrum3D {
    let (nx, ny, nz) = spec.grid.shape();
    let mut out = Spectrum3D::zeros(spec.grid);
    for ((i, j, k), &w) in spec.weights.indexed_iter() {
        let m = [mirror_index(nx, i), mirror_index(ny, j), mirror_index(nz, k)];
        let wm = spec.weights[m];
        let total = w + wm;
        if total > 0.0 {
            out.values[[i, j, k]] = (spec.values[[i, j, k]] * w + spec.values[m].conj() * wm) / total;
            out.weights[[i, j, k]] = total;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub volume: Volume3D,
    /// Voxels whose radicand fell below the physical floor.
    pub clamped: usize,
    /// `max |Im F(r)| / max |F(r)|` before the imaginary part is discarded.
    pub imaginary_residue: f64,
}

/// Converts a real scattering potential to refractive index,
/// `n = n_m·sqrt(1 + 4πF/k0²)`. Radicands below `1/n_m²` (which would give
/// `n < 1`) are clamped and counted.
pub fn potential_to_index(potential: &Array3<f64>, config: &OpticalConfig, grid: &GridSpec) -> Result<(Volume3D, usize)> {
    let nm = config.n_medium;
    let floor = 1.0 / (nm * nm);
    let mut clamped = 0usize;
    let values = potential.mapv(|f| {
        let r = config.radicand_from_potential(f);
        if r < floor {
            clamped += 1;
            1.0
        } else {
            nm * r.sqrt()
        }
    });
    let total = values.len();
    if clamped as f64 > MAX_CLAMP_FRACTION * total as f64 {
        return Err(Error::DegenerateReconstruction { clamped, total });
    }
    Ok((Volume3D::new(*grid, values, VolumeKind::RefractiveIndex)?, clamped))
}

pub(crate) fn inverse_real(spectrum: &Array3<Complex64>) -> (Array3<f64>, f64) {
    let complex = fft::ifft3(spectrum);
    let max_re = complex.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let max_im = complex.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    (complex.mapv(|v| v.re), residue)
}

/// Direct inversion: Hermitian completion, inverse transform of the weighted
/// spectrum (unfilled voxels zero), conversion to refractive index.
pub fn reconstruct(spectrum: &Spectrum3D, config: &OpticalConfig) -> Result<Reconstruction> {
    config.validate()?;
    spectrum.validate()?;
    if spectrum.filled_voxels() == 0 && spectrum.values.iter().all(|v| v.norm() == 0.0) {
        log::debug!("reconstructing an empty spectrum");
    }
    let completed = hermitian_complete(spectrum);
    let (potential, imaginary_residue) = inverse_real(&completed.values);
    let (volume, clamped) = potential_to_index(&potential, config, &spectrum.grid)?;
    Ok(Reconstruction { volume, clamped, imaginary_residue })
}
