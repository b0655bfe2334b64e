//! Ewald-cap geometry shared by the forward model and the spectrum mapping.
//!
//! For an illumination `k_i` and a lateral frequency `q` of the Rytov field
//! (on the 2D grid), the scattered wave leaves with `k = q + k_i,r` and
//! `k_z = sqrt(k0² - |k|²)`. It samples the object spectrum at
//! `K = (q, k_z - k_i,z)`; laterally this is exactly a grid frequency, axially it
//! is rounded to the nearest voxel.
//!
//! Under unitary transforms the discrete relation between the two spectra is
//!
//! ```text
//! psi~(q) = (2πi / k_z) · pitch · sqrt(nz) · F~(K)
//! ```
//!
//! which is the sampled form of the continuous Fourier diffraction relation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::optics::{axis_frequency, nearest_frequency_index, GridSpec, OpticalConfig};

/// One lateral frequency of one illumination and the voxel it lands on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapSample {
    /// Lateral index on the 2D field grid (and the voxel's x/y index).
    pub lateral: (usize, usize),
    pub voxel: [usize; 3],
    /// Axial wavenumber of the scattered plane wave, rad/µm.
    pub kz: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CapGeometry {
    pub samples: Vec<CapSample>,
    pub evanescent: usize,
    pub out_of_grid: usize,
}

/// Enumerates the cap samples of one illumination inside the objective pupil.
pub fn cap_samples(config: &OpticalConfig, grid: &GridSpec, k_illum: [f64; 3]) -> CapGeometry {
    let k0 = config.k0();
    let pupil = config.k_na_r_objective();
    let mut geo = CapGeometry::default();
    for ix in 0..grid.nx {
        let qx = 2.0 * PI * axis_frequency(grid.nx, grid.pitch, ix);
        let kx = qx + k_illum[0];
        for iy in 0..grid.ny {
            let qy = 2.0 * PI * axis_frequency(grid.ny, grid.pitch, iy);
            let ky = qy + k_illum[1];
            let kr2 = kx * kx + ky * ky;
            if kr2 > k0 * k0 {
                geo.evanescent += 1;
                continue;
            }
            if kr2 > pupil * pupil {
                continue;
            }
            let kz = (k0 * k0 - kr2).sqrt();
            let kz_obj = kz - k_illum[2];
            match nearest_frequency_index(grid.nz, grid.pitch, kz_obj / (2.0 * PI)) {
                Some(iz) => geo.samples.push(CapSample { lateral: (ix, iy), voxel: [ix, iy, iz], kz }),
                None => geo.out_of_grid += 1,
            }
        }
    }
    geo
}

/// Factor `c` with `psi~ = c · F~` for a sample with axial wavenumber `kz`.
pub fn field_per_potential(grid: &GridSpec, kz: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI / kz) * grid.pitch * (grid.nz as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_incidence_cap_lies_on_ewald_sphere() {
        let cfg = OpticalConfig::bead_default();
        let grid = GridSpec::cubic(32, 0.1).unwrap();
        let k0 = cfg.k0();
        let geo = cap_samples(&cfg, &grid, [0.0, 0.0, k0]);
        assert!(!geo.samples.is_empty());
        let step = 2.0 * PI / (32.0 * 0.1);
        for s in &geo.samples {
            let kx = (s.voxel[0] as f64 - 16.0) * step;
            let ky = (s.voxel[1] as f64 - 16.0) * step;
            let kz = (s.voxel[2] as f64 - 16.0) * step;
            // |K + (0,0,k0)| = k0 up to half a voxel along z
            let r = (kx * kx + ky * ky + (kz + k0).powi(2)).sqrt();
            let exact_z = (k0 * k0 - kx * kx - ky * ky).sqrt() - k0;
            assert!((kz - exact_z).abs() <= 0.5 * step + 1e-12);
            assert!((r - k0).abs() <= 0.5 * step + 1e-12);
        }
        // DC lands on the origin voxel
        assert!(geo.samples.iter().any(|s| s.voxel == [16, 16, 16]));
    }
}
