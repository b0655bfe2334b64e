//! Ground-truth refractive-index phantoms.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{GridSpec, Volume3D, VolumeKind};

/// Relative contrast above which the first-order model is flagged as unreliable.
pub const WEAK_SCATTERING_LIMIT: f64 = 0.05;

const MARGIN_VOXELS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomVariant {
    /// Homogeneous sphere. `center` is relative to the grid center, µm.
    Sphere { center: [f64; 3], radius: f64, n_inside: f64 },
    /// 3D Shepp-Logan head scaled so its unit semi-axes span `scale` µm.
    /// Inside the head `n = n_background + contrast·v` with `v` the summed ellipsoid intensities.
    #[serde(rename = "shepp_logan")]
    SheppLogan3D { scale: f64, n_background: f64, contrast: f64 },
    /// Point perturbations `(position relative to center in µm, Δn)` on the nearest voxel.
    Deltas { points: Vec<([f64; 3], f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub variant: PhantomVariant,
    pub n_medium: f64,
}

impl PhantomSpec {
    /// 7 µm polystyrene bead (1.5983) in 1.574 medium at the grid center.
    pub fn polystyrene_bead() -> Self {
        PhantomSpec {
            variant: PhantomVariant::Sphere { center: [0.0; 3], radius: 3.5, n_inside: 1.5983 },
            n_medium: 1.574,
        }
    }
}

/// `(intensity, semi-axes, center, rotation about z in degrees)`, in units of the head scale.
/// Modified (higher-contrast) 3D Shepp-Logan table; rotations are about z only.
const SHEPP_LOGAN: [(f64, [f64; 3], [f64; 3], f64); 10] = [
    (1.0, [0.6900, 0.920, 0.810], [0.0, 0.0, 0.0], 0.0),
    (-0.8, [0.6624, 0.874, 0.780], [0.0, -0.0184, 0.0], 0.0),
    (-0.2, [0.1100, 0.310, 0.220], [0.22, 0.0, 0.0], -18.0),
    (-0.2, [0.1600, 0.410, 0.280], [-0.22, 0.0, 0.0], 18.0),
    (0.1, [0.2100, 0.250, 0.410], [0.0, 0.35, -0.15], 0.0),
    (0.1, [0.0460, 0.046, 0.050], [0.0, 0.1, 0.25], 0.0),
    (0.1, [0.0460, 0.046, 0.050], [0.0, -0.1, 0.25], 0.0),
    (0.1, [0.0460, 0.023, 0.050], [-0.08, -0.605, 0.0], 0.0),
    (0.1, [0.0230, 0.023, 0.020], [0.0, -0.606, 0.0], 0.0),
    (0.1, [0.0230, 0.046, 0.020], [0.06, -0.605, 0.0], 0.0),
];

fn coords(grid: &GridSpec) -> impl Fn(usize, usize, usize) -> [f64; 3] + '_ {
    move |i, j, k| [grid.coordinate(grid.nx, i), grid.coordinate(grid.ny, j), grid.coordinate(grid.nz, k)]
}

/// Checks that the axis-aligned box `center ± half` keeps the margin inside the grid.
fn check_fits(grid: &GridSpec, center: [f64; 3], half: [f64; 3]) -> Result<()> {
    let margin = MARGIN_VOXELS * grid.pitch;
    for (axis, n) in grid.dims().into_iter().enumerate() {
        let lo = grid.coordinate(n, 0);
        let hi = grid.coordinate(n, n - 1);
        if center[axis] - half[axis] - margin < lo - 1e-12 || center[axis] + half[axis] + margin > hi + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "structure exceeds the grid margin on axis {axis}: extent [{:.3}, {:.3}] um, grid [{lo:.3}, {hi:.3}] um",
                center[axis] - half[axis],
                center[axis] + half[axis]
            )));
        }
    }
    Ok(())
}

/// Fraction of a voxel inside a sphere, by 3×3×3 subsampling on boundary voxels.
fn sphere_fill(p: [f64; 3], center: [f64; 3], radius: f64, pitch: f64) -> f64 {
    let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
    let half_diag = 0.5 * 3f64.sqrt() * pitch;
    if d <= radius - half_diag {
        return 1.0;
    }
    if d >= radius + half_diag {
        return 0.0;
    }
    let mut inside = 0;
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            for c in [-1.0, 0.0, 1.0] {
                let q = [p[0] + a * pitch / 3.0, p[1] + b * pitch / 3.0, p[2] + c * pitch / 3.0];
                let r2 = (q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2) + (q[2] - center[2]).powi(2);
                if r2 <= radius * radius {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / 27.0
}

fn shepp_logan_value(p: [f64; 3], scale: f64) -> f64 {
    let mut v = 0.0;
    for (amp, axes, c, phi) in SHEPP_LOGAN {
        let (s, co) = phi.to_radians().sin_cos();
        let x = p[0] / scale - c[0];
        let y = p[1] / scale - c[1];
        let z = p[2] / scale - c[2];
        let xr = co * x + s * y;
        let yr = -s * x + co * y;
        if (xr / axes[0]).powi(2) + (yr / axes[1]).powi(2) + (z / axes[2]).powi(2) <= 1.0 {
            v += amp;
        }
    }
    v
}

pub fn build_phantom(spec: &PhantomSpec, grid: &GridSpec) -> Result<Volume3D> {
    grid.validate()?;
    let nm = spec.n_medium;
    if !(nm >= 1.0) {
        return Err(Error::InvalidParameter(format!("medium index {nm} < 1")));
    }
    let at = coords(grid);
    let values = match &spec.variant {
        PhantomVariant::Sphere { center, radius, n_inside } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidParameter(format!("sphere radius must be > 0, got {radius}")));
            }
            if *n_inside < 1.0 {
                return Err(Error::InvalidParameter(format!("sphere index {n_inside} < 1")));
            }
            check_fits(grid, *center, [*radius; 3])?;
            Array3::from_shape_fn(grid.shape(), |(i, j, k)| {
                nm + sphere_fill(at(i, j, k), *center, *radius, grid.pitch) * (n_inside - nm)
            })
        }
        PhantomVariant::SheppLogan3D { scale, n_background, contrast } => {
            if !(*scale > 0.0) {
                return Err(Error::InvalidParameter(format!("Shepp-Logan scale must be > 0, got {scale}")));
            }
            check_fits(grid, [0.0; 3], [0.69 * scale, 0.92 * scale, 0.81 * scale])?;
            // summed intensities range over [0, 1] inside the head
            if n_background.min(n_background + contrast) < 1.0 {
                return Err(Error::InvalidParameter("Shepp-Logan indices would drop below 1".into()));
            }
            Array3::from_shape_fn(grid.shape(), |(i, j, k)| {
                let p = at(i, j, k);
                let x = p[0] / (0.69 * scale);
                let y = p[1] / (0.92 * scale);
                let z = p[2] / (0.81 * scale);
                if x * x + y * y + z * z <= 1.0 {
                    n_background + contrast * shepp_logan_value(p, *scale)
                } else {
                    nm
                }
            })
        }
        PhantomVariant::Deltas { points } => {
            let mut vals = Array3::from_elem(grid.shape(), nm);
            for (pos, dn) in points {
                check_fits(grid, *pos, [0.0; 3])?;
                let idx: Vec<usize> = grid
                    .dims()
                    .iter()
                    .zip(pos.iter())
                    .map(|(&n, &x)| ((x / grid.pitch).round() + (n / 2) as f64) as usize)
                    .collect();
                vals[[idx[0], idx[1], idx[2]]] += dn;
            }
            if vals.iter().any(|&v| v < 1.0) {
                return Err(Error::InvalidParameter("delta contrast drives the index below 1".into()));
            }
            vals
        }
    };
    let max_rel = values.iter().map(|v| ((v - nm) / nm).abs()).fold(0.0, f64::max);
    if max_rel > WEAK_SCATTERING_LIMIT {
        log::warn!("phantom relative contrast {max_rel:.3} exceeds the weak-scattering limit {WEAK_SCATTERING_LIMIT}");
    }
    Volume3D::new(*grid, values, VolumeKind::RefractiveIndex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bead_interior_and_exterior() {
        let grid = GridSpec::cubic(64, 0.2).unwrap();
        let vol = build_phantom(&PhantomSpec::polystyrene_bead(), &grid).unwrap();
        assert_eq!(vol.kind, VolumeKind::RefractiveIndex);
        assert_eq!(vol.values[[32, 32, 32]], 1.5983);
        assert_eq!(vol.values[[32, 32, 32 + 10]], 1.5983); // 2.0 um from center
        assert_eq!(vol.values[[0, 0, 0]], 1.574);
        assert_eq!(vol.values[[32, 32, 32 + 20]], 1.574); // 4.0 um from center
    }

    #[test]
    fn bead_volume_fraction_matches_sphere_volume() {
        let grid = GridSpec::cubic(64, 0.2).unwrap();
        let vol = build_phantom(&PhantomSpec::polystyrene_bead(), &grid).unwrap();
        let filled: f64 = vol.values.iter().map(|n| (n - 1.574) / (1.5983 - 1.574)).sum();
        let voxel = 0.2f64.powi(3);
        let exact = 4.0 / 3.0 * PI * 3.5f64.powi(3) / voxel;
        // one voxel-shell: surface area × pitch
        let shell = 4.0 * PI * 3.5f64.powi(2) * 0.2 / voxel;
        assert!((filled - exact).abs() < shell, "filled {filled} exact {exact}");
        // antialiasing keeps the error far below the shell bound
        assert!((filled - exact).abs() / exact < 0.01);
    }

    #[test]
    fn empty_deltas_give_uniform_medium() {
        let grid = GridSpec::cubic(16, 0.2).unwrap();
        let spec = PhantomSpec { variant: PhantomVariant::Deltas { points: vec![] }, n_medium: 1.337 };
        let vol = build_phantom(&spec, &grid).unwrap();
        assert!(vol.values.iter().all(|&v| v == 1.337));
    }

    #[test]
    fn oversized_sphere_is_rejected() {
        let grid = GridSpec::cubic(32, 0.2).unwrap();
        let spec = PhantomSpec {
            variant: PhantomVariant::Sphere { center: [0.0; 3], radius: 3.0, n_inside: 1.6 },
            n_medium: 1.574,
        };
        assert!(matches!(build_phantom(&spec, &grid), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn shepp_logan_stays_physical() {
        let grid = GridSpec::cubic(32, 0.25).unwrap();
        let spec = PhantomSpec {
            variant: PhantomVariant::SheppLogan3D { scale: 3.0, n_background: 1.34, contrast: 0.02 },
            n_medium: 1.337,
        };
        let vol = build_phantom(&spec, &grid).unwrap();
        assert!(vol.values.iter().all(|&v| v >= 1.337));
        assert_eq!(vol.values[[0, 0, 0]], 1.337);
        let distinct: std::collections::BTreeSet<u64> = vol.values.iter().map(|v| (v * 1e6) as u64).collect();
        assert!(distinct.len() >= 4);
    }
}
