//! Illumination scans and the first-order (Rytov) forward model.
//!
//! The forward model is the exact inverse of the Ewald mapping in
//! [`crate::tomography::map_ewald`]: it reads the phantom's potential spectrum on
//! the voxels each cap sample lands on, converts it to the Rytov spectrum,
//! band-limits to the objective pupil, and synthesizes
//! `U = U_i · exp(psi)` at the z = 0 focal plane.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::holography::RytovField;
use crate::optics::{validate_illumination, ComplexField2D, GridSpec, OpticalConfig, Volume3D, VolumeKind};
use crate::phantom::WEAK_SCATTERING_LIMIT;
use crate::tomography::ewald::{cap_samples, field_per_potential};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum IlluminationPattern {
    Normal,
    /// `count` azimuths equally spaced on a ring at `na_fraction` of the condenser NA.
    CircularScan { count: usize, na_fraction: f64 },
    /// Fermat spiral filling the condenser aperture.
    SpiralScan { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationSet {
    pub pattern: IlluminationPattern,
    /// Wavevectors in rad/µm.
    pub k_illum: Vec<[f64; 3]>,
}

fn wavevector(config: &OpticalConfig, kr: f64, azimuth: f64) -> [f64; 3] {
    let k0 = config.k0();
    [kr * azimuth.cos(), kr * azimuth.sin(), (k0 * k0 - kr * kr).max(0.0).sqrt()]
}

pub fn generate_illuminations(config: &OpticalConfig, pattern: IlluminationPattern) -> Result<IlluminationSet> {
    config.validate()?;
    let cutoff = config.k_na_r_condenser();
    let k_illum = match pattern {
        IlluminationPattern::Normal => vec![[0.0, 0.0, config.k0()]],
        IlluminationPattern::CircularScan { count, na_fraction } => {
            if count == 0 {
                return Err(Error::InvalidParameter("illumination count must be >= 1".into()));
            }
            if !(na_fraction > 0.0 && na_fraction <= 1.0) {
                return Err(Error::Evanescent(format!("na_fraction must lie in (0, 1], got {na_fraction}")));
            }
            (0..count)
                .map(|j| wavevector(config, na_fraction * cutoff, 2.0 * PI * j as f64 / count as f64))
                .collect()
        }
        IlluminationPattern::SpiralScan { count } => {
            if count == 0 {
                return Err(Error::InvalidParameter("illumination count must be >= 1".into()));
            }
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let rho = ((j as f64 + 0.5) / count as f64).sqrt();
                    wavevector(config, rho * cutoff, golden * j as f64)
                })
                .collect()
        }
    };
    for k in &k_illum {
        validate_illumination(*k, config)?;
    }
    Ok(IlluminationSet { pattern, k_illum })
}

impl IlluminationSet {
    /// Moves each lateral wavevector onto the nearest frequency bin of the `grid`
    /// frame (stepping inward if rounding leaves the condenser aperture).
    ///
    /// An on-grid incident wave is periodic in the frame, so its spectrum does not
    /// leak outside the pupil disc that off-axis retrieval crops.
    pub fn snapped(&self, config: &OpticalConfig, grid: &GridSpec) -> Result<Self> {
        let k0 = config.k0();
        let limit = config.k_na_r_condenser();
        let step = [2.0 * PI / grid.fov()[0], 2.0 * PI / grid.fov()[1]];
        let k_illum = self
            .k_illum
            .iter()
            .map(|k| {
                let mut b = [(k[0] / step[0]).round(), (k[1] / step[1]).round()];
                while (b[0] * step[0]).hypot(b[1] * step[1]) > limit {
                    let i = if b[0].abs() * step[0] >= b[1].abs() * step[1] { 0 } else { 1 };
                    b[i] -= b[i].signum();
                }
                let (kx, ky) = (b[0] * step[0], b[1] * step[1]);
                let k = [kx, ky, (k0 * k0 - kx * kx - ky * ky).sqrt()];
                validate_illumination(k, config).map(|_| k)
            })
            .collect::<Result<_>>()?;
        Ok(IlluminationSet { pattern: self.pattern, k_illum })
    }
}

/// Precomputed phantom spectrum, reused across illuminations.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    config: OpticalConfig,
    grid: GridSpec,
    potential_spectrum: Array3<Complex64>,
}

impl ForwardModel {
    pub fn new(phantom: &Volume3D, config: &OpticalConfig) -> Result<Self> {
        config.validate()?;
        phantom.validate()?;
        if phantom.kind == VolumeKind::RefractiveIndex {
            let nm = config.n_medium;
            let max_rel = phantom.values.iter().map(|v| ((v - nm) / nm).abs()).fold(0.0, f64::max);
            if max_rel > WEAK_SCATTERING_LIMIT {
                log::warn!("relative contrast {max_rel:.3} is outside the weak-scattering regime");
            }
        }
        phantom.grid.check_band(config);
        let potential = phantom.to_scattering_potential(config)?;
        Ok(ForwardModel {
            config: *config,
            grid: phantom.grid,
            potential_spectrum: fft::fft3_real(&potential.values),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unitary spectrum of the phantom's scattering potential.
    pub fn potential_spectrum(&self) -> &Array3<Complex64> {
        &self.potential_spectrum
    }

    /// The Rytov field `psi_s` for one illumination, band-limited to the objective pupil.
    pub fn rytov(&self, k_illum: [f64; 3]) -> Result<RytovField> {
        validate_illumination(k_illum, &self.config)?;
        let geo = cap_samples(&self.config, &self.grid, k_illum);
        if geo.samples.is_empty() {
            return Err(Error::Evanescent("no propagating frequency reaches the objective pupil".into()));
        }
        let mut spectrum = Array2::<Complex64>::zeros((self.grid.nx, self.grid.ny));
        for s in &geo.samples {
            spectrum[s.lateral] = field_per_potential(&self.grid, s.kz) * self.potential_spectrum[s.voxel];
        }
        let psi = fft::ifft2(&spectrum);
        Ok(RytovField(ComplexField2D::new(self.grid.pitch, psi, k_illum)))
    }

    /// Total field `U = U_i · exp(psi_s)` at the focal plane.
    pub fn field(&self, k_illum: [f64; 3]) -> Result<ComplexField2D> {
        Ok(self.rytov(k_illum)?.to_total_field())
    }

    /// Fields for a whole scan. Parallel and sequential runs give identical frames.
    pub fn fields(&self, illuminations: &IlluminationSet, parallel: bool) -> Result<Vec<ComplexField2D>> {
        if parallel {
            illuminations.k_illum.par_iter().map(|k| self.field(*k)).collect()
        } else {
            illuminations.k_illum.iter().map(|k| self.field(*k)).collect()
        }
    }
}

pub fn simulate_scattered_field(
    phantom: &Volume3D,
    config: &OpticalConfig,
    k_illum: [f64; 3],
    grid: &GridSpec,
) -> Result<ComplexField2D> {
    grid.check_same(&phantom.grid)?;
    ForwardModel::new(phantom, config)?.field(k_illum)
}

/// Adds circular complex Gaussian noise of standard deviation `sigma` per quadrature.
pub fn add_field_noise(fields: &mut [ComplexField2D], sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for f in fields.iter_mut() {
        for v in f.values.iter_mut() {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapped_illuminations_sit_on_frame_bins() {
        let cfg = OpticalConfig::bead_default();
        let grid = GridSpec::cubic(64, 0.06).unwrap();
        let set = generate_illuminations(&cfg, IlluminationPattern::CircularScan { count: 7, na_fraction: 1.0 }).unwrap();
        let snapped = set.snapped(&cfg, &grid).unwrap();
        let step = 2.0 * PI / grid.fov()[0];
        for (a, b) in set.k_illum.iter().zip(&snapped.k_illum) {
            for c in 0..2 {
                let bins = b[c] / step;
                assert!((bins - bins.round()).abs() < 1e-9);
                assert!((a[c] - b[c]).abs() <= step);
            }
            assert!(b[0].hypot(b[1]) <= cfg.k_na_r_condenser() * (1.0 + 1e-12));
        }
    }
    use crate::phantom::{build_phantom, PhantomSpec, PhantomVariant};

    #[test]
    fn normal_illumination_is_axial() {
        let cfg = OpticalConfig::bead_default();
        let set = generate_illuminations(&cfg, IlluminationPattern::Normal).unwrap();
        assert_eq!(set.k_illum, vec![[0.0, 0.0, cfg.k0()]]);
    }

    #[test]
    fn circular_scan_geometry() {
        let cfg = OpticalConfig::new(0.532, 1.337, 1.2, 1.2).unwrap();
        let set = generate_illuminations(&cfg, IlluminationPattern::CircularScan { count: 4, na_fraction: 1.0 }).unwrap();
        let kr = 2.0 * PI * 1.2 / 0.532;
        let expect = [(kr, 0.0), (0.0, kr), (-kr, 0.0), (0.0, -kr)];
        for (k, (ex, ey)) in set.k_illum.iter().zip(expect) {
            assert!((k[0] - ex).abs() < 1e-12 && (k[1] - ey).abs() < 1e-12);
            assert!((k[0].hypot(k[1]) - kr).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_scans_stay_on_the_sphere() {
        let cfg = OpticalConfig::new(0.532, 1.337, 1.2, 1.2).unwrap();
        let k0 = cfg.k0();
        for pattern in [
            IlluminationPattern::CircularScan { count: 49, na_fraction: 0.95 },
            IlluminationPattern::SpiralScan { count: 49 },
        ] {
            let set = generate_illuminations(&cfg, pattern).unwrap();
            assert_eq!(set.k_illum.len(), 49);
            for (a, k) in set.k_illum.iter().enumerate() {
                let n = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
                assert!(((n - k0) / k0).abs() < 1e-9);
                for b in &set.k_illum[a + 1..] {
                    assert!((k[0] - b[0]).abs() + (k[1] - b[1]).abs() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn na_fraction_above_one_is_rejected() {
        let cfg = OpticalConfig::bead_default();
        let r = generate_illuminations(&cfg, IlluminationPattern::CircularScan { count: 8, na_fraction: 1.01 });
        assert!(matches!(r, Err(Error::Evanescent(_))));
    }

    #[test]
    fn empty_phantom_gives_incident_wave() {
        let cfg = OpticalConfig::bead_default();
        let grid = GridSpec::cubic(16, 0.1).unwrap();
        let vol = Volume3D::filled(grid, cfg.n_medium, VolumeKind::RefractiveIndex).unwrap();
        let set = generate_illuminations(&cfg, IlluminationPattern::CircularScan { count: 3, na_fraction: 0.7 }).unwrap();
        for k in set.k_illum {
            let u = simulate_scattered_field(&vol, &cfg, k, &grid).unwrap();
            assert_eq!(u.values, u.incident_wave());
        }
    }

    #[test]
    fn forward_model_is_linear_in_contrast() {
        let cfg = OpticalConfig::bead_default();
        let grid = GridSpec::cubic(32, 0.1).unwrap();
        let nm = cfg.n_medium;
        let sphere = |dn: f64| PhantomSpec {
            variant: PhantomVariant::Sphere { center: [0.2, -0.1, 0.0], radius: 0.8, n_inside: nm + dn },
            n_medium: nm,
        };
        let a = build_phantom(&sphere(0.01), &grid).unwrap();
        // double the potential exactly: n² - nm² → 2(n² - nm²)
        let mut b = a.clone();
        b.values.mapv_inplace(|n| (2.0 * n * n - nm * nm).sqrt());
        let k = [1.5, -2.0, (cfg.k0().powi(2) - 6.25).sqrt()];
        let pa = ForwardModel::new(&a, &cfg).unwrap().rytov(k).unwrap();
        let pb = ForwardModel::new(&b, &cfg).unwrap().rytov(k).unwrap();
        let scale = pa.0.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = pa.0.values.iter().zip(pb.0.values.iter()).map(|(x, y)| (2.0 * x - y).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-9 * scale, "{err} vs {scale}");
    }
}
