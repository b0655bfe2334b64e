//! Isotropic 3D high-pass filters and their application to tomograms.

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::optics::{axis_frequency, GridSpec, Volume3D, VolumeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    /// Zero below the cutoff, one at and above it.
    Step,
    /// `1 - exp(-ln2·|ξ|²/ξc²)`; exactly one half at the cutoff.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    CyclesPerMicron(f64),
    /// Multiples of the inverse field of view (smallest FOV axis).
    PerFov(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub shape: FilterShape,
    pub cutoff: Cutoff,
}

impl FilterSpec {
    pub fn new(shape: FilterShape, cutoff: Cutoff) -> Self {
        FilterSpec { shape, cutoff }
    }

    /// Cutoff in cycles/µm on `grid`, validated against its Nyquist limit.
    pub fn cutoff_on(&self, grid: &GridSpec) -> Result<f64> {
        let xi_c = match self.cutoff {
            Cutoff::CyclesPerMicron(c) => c,
            Cutoff::PerFov(m) => m / grid.min_fov(),
        };
        if !(xi_c > 0.0) || !xi_c.is_finite() {
            return Err(Error::InvalidParameter(format!("filter cutoff must be > 0, got {xi_c}")));
        }
        if xi_c > grid.nyquist() {
            return Err(Error::InvalidParameter(format!(
                "filter cutoff {xi_c} cycles/um exceeds the grid Nyquist {} cycles/um",
                grid.nyquist()
            )));
        }
        Ok(xi_c)
    }
}

/// Response of a filter shape at radial frequency `xi` for cutoff `xi_c`.
pub fn response(shape: FilterShape, xi: f64, xi_c: f64) -> f64 {
    match shape {
        FilterShape::Step => {
            if xi >= xi_c {
                1.0
            } else {
                0.0
            }
        }
        // 0.5^t equals exp(-ln2·t) and is exact at t = 1
        FilterShape::Gaussian => 1.0 - 0.5f64.powf((xi * xi) / (xi_c * xi_c)),
    }
}

/// Radial frequency `|ξ|` of every voxel, cycles/µm.
pub fn radial_frequency(grid: &GridSpec) -> Array3<f64> {
    let fx: Vec<f64> = (0..grid.nx).map(|i| axis_frequency(grid.nx, grid.pitch, i)).collect();
    let fy: Vec<f64> = (0..grid.ny).map(|i| axis_frequency(grid.ny, grid.pitch, i)).collect();
    let fz: Vec<f64> = (0..grid.nz).map(|i| axis_frequency(grid.nz, grid.pitch, i)).collect();
    Array3::from_shape_fn(grid.shape(), |(i, j, k)| (fx[i] * fx[i] + fy[j] * fy[j] + fz[k] * fz[k]).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter3D {
    pub grid: GridSpec,
    pub response: Array3<f64>,
    pub spec: Option<FilterSpec>,
    /// Cutoff in cycles/µm, when built from a spec.
    pub cutoff: Option<f64>,
}

impl Filter3D {
    /// Response identically one.
    pub fn all_pass(grid: GridSpec) -> Self {
        Filter3D { grid, response: Array3::ones(grid.shape()), spec: None, cutoff: None }
    }
}

pub fn make_filter(spec: &FilterSpec, grid: &GridSpec) -> Result<Filter3D> {
    grid.validate()?;
    let xi_c = spec.cutoff_on(grid)?;
    let response = radial_frequency(grid).mapv(|xi| response(spec.shape, xi, xi_c));
    Ok(Filter3D { grid: *grid, response, spec: Some(*spec), cutoff: Some(xi_c) })
}

/// Multiplies the volume spectrum by the filter response and transforms back.
/// The result is tagged [`VolumeKind::Filtered`].
pub fn apply_darkfield(vol: &Volume3D, filter: &Filter3D) -> Result<Volume3D> {
    vol.grid.check_same(&filter.grid)?;
    match vol.kind {
        VolumeKind::RefractiveIndex | VolumeKind::ScatteringPotential => {}
        other => {
            return Err(Error::KindMismatch(format!("dark-field filtering needs a physical volume, got {other:?}")));
        }
    }
    let mut spectrum = fft::fft3_real(&vol.values);
    Zip::from(&mut spectrum).and(&filter.response).for_each(|s, &h| *s *= h);
    fft::ifft3_inplace(&mut spectrum);
    let values = spectrum.mapv(|v: Complex64| v.re);
    Volume3D::new(vol.grid, values, VolumeKind::Filtered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::cubic(16, 0.25).unwrap()
    }

    fn random_volume(seed: u64) -> Volume3D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = Array3::from_shape_fn(grid().shape(), |_| 1.5 + 0.1 * rng.random::<f64>());
        Volume3D::new(grid(), values, VolumeKind::RefractiveIndex).unwrap()
    }

    #[test]
    fn gaussian_half_response_at_cutoff() {
        for xi_c in [0.1, 1.0 / 7.0, 0.4375, 1.7] {
            assert_eq!(response(FilterShape::Gaussian, xi_c, xi_c), 0.5);
        }
    }

    #[test]
    fn gaussian_matches_exponential_form() {
        let xi_c = 0.3;
        for xi in [0.0, 0.05, 0.3, 0.71, 2.0] {
            let expect = 1.0 - (-(2f64.ln()) * xi * xi / (xi_c * xi_c)).exp();
            assert!((response(FilterShape::Gaussian, xi, xi_c) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn dc_is_blocked() {
        for shape in [FilterShape::Step, FilterShape::Gaussian] {
            let f = make_filter(&FilterSpec::new(shape, Cutoff::PerFov(2.0)), &grid()).unwrap();
            assert_eq!(f.response[[8, 8, 8]], 0.0);
        }
    }

    #[test]
    fn step_rises_exactly_at_cutoff() {
        assert_eq!(response(FilterShape::Step, 0.999 * 0.5, 0.5), 0.0);
        assert_eq!(response(FilterShape::Step, 0.5, 0.5), 1.0);
        // on the grid: cutoff of 3 bins along an axis
        let g = grid();
        let f = make_filter(&FilterSpec::new(FilterShape::Step, Cutoff::PerFov(3.0)), &g).unwrap();
        assert_eq!(f.response[[11, 8, 8]], 1.0);
        assert_eq!(f.response[[10, 8, 8]], 0.0);
        assert!(f.response.iter().all(|&r| r == 0.0 || r == 1.0));
    }

    #[test]
    fn per_fov_uses_smallest_axis() {
        let g = GridSpec::new(16, 32, 16, 0.25).unwrap();
        let spec = FilterSpec::new(FilterShape::Gaussian, Cutoff::PerFov(2.0));
        assert_eq!(spec.cutoff_on(&g).unwrap(), 2.0 / 4.0);
    }

    #[test]
    fn cutoff_beyond_nyquist_is_rejected() {
        let spec = FilterSpec::new(FilterShape::Step, Cutoff::CyclesPerMicron(2.5));
        assert!(make_filter(&spec, &grid()).is_err());
        let spec = FilterSpec::new(FilterShape::Step, Cutoff::CyclesPerMicron(-1.0));
        assert!(make_filter(&spec, &grid()).is_err());
    }

    #[test]
    fn all_pass_is_identity() {
        let v = random_volume(1);
        let out = apply_darkfield(&v, &Filter3D::all_pass(grid())).unwrap();
        let err = (&out.values - &v.values).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert_eq!(out.kind, VolumeKind::Filtered);
    }

    #[test]
    fn dc_removal_zeroes_mean() {
        let v = random_volume(2);
        let f = make_filter(&FilterSpec::new(FilterShape::Gaussian, Cutoff::PerFov(1.5)), &grid()).unwrap();
        let out = apply_darkfield(&v, &f).unwrap();
        assert!(out.mean().abs() < 1e-9 * 1.6);
    }

    #[test]
    fn filtered_volume_is_not_refiltered() {
        let v = random_volume(3);
        let f = Filter3D::all_pass(grid());
        let out = apply_darkfield(&v, &f).unwrap();
        assert!(matches!(apply_darkfield(&out, &f), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn step_filter_is_idempotent() {
        let v = random_volume(4);
        let f = make_filter(&FilterSpec::new(FilterShape::Step, Cutoff::PerFov(2.0)), &grid()).unwrap();
        let once = apply_darkfield(&v, &f).unwrap();
        let as_potential = Volume3D::new(grid(), once.values.clone(), VolumeKind::ScatteringPotential).unwrap();
        let twice = apply_darkfield(&as_potential, &f).unwrap();
        let err = (&once.values - &twice.values).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn parseval_for_filtered_output() {
        let v = random_volume(5);
        let f = make_filter(&FilterSpec::new(FilterShape::Gaussian, Cutoff::PerFov(3.0)), &grid()).unwrap();
        let out = apply_darkfield(&v, &f).unwrap();
        let spectrum = fft::fft3_real(&v.values);
        let expect: f64 = spectrum.iter().zip(f.response.iter()).map(|(s, h)| (s * h).norm_sqr()).sum();
        let got: f64 = out.values.iter().map(|x| x * x).sum();
        assert!(((got - expect) / expect).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn responses_in_unit_interval_and_gaussian_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0, c in 0.05f64..2.0) {
            for shape in [FilterShape::Step, FilterShape::Gaussian] {
                let r = response(shape, a, c);
                prop_assert!((0.0..=1.0).contains(&r));
            }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(response(FilterShape::Gaussian, lo, c) <= response(FilterShape::Gaussian, hi, c));
        }

        #[test]
        fn filtering_is_linear(sa in -2.0f64..2.0, sb in -2.0f64..2.0, seed in 0u64..1000) {
            let v1 = random_volume(seed);
            let v2 = random_volume(seed + 1);
            let f = make_filter(&FilterSpec::new(FilterShape::Gaussian, Cutoff::PerFov(2.5)), &grid()).unwrap();
            let combo = Volume3D::new(grid(), &v1.values * sa + &v2.values * sb, VolumeKind::ScatteringPotential).unwrap();
            let lhs = apply_darkfield(&combo, &f).unwrap();
            let rhs = &apply_darkfield(&v1, &f).unwrap().values * sa + &apply_darkfield(&v2, &f).unwrap().values * sb;
            let err = (&lhs.values - &rhs).iter().map(|x| x.abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-9);
        }
    }
}
