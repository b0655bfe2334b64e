//! Comparison metrics and figure-style slice export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::darkfield::dilate;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::optics::{GridSpec, Volume3D};

/// Summary metrics emitted by the CLI as JSON. Absent metrics are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ncc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ringing_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_contrast_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamped_voxels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_of_grid_samples: Option<usize>,
}

/// Pearson correlation over all voxels.
pub fn ncc(a: &Volume3D, b: &Volume3D) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    let n = a.values.len() as f64;
    let ma = a.values.sum() / n;
    let mb = b.values.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    Zip::from(&a.values).and(&b.values).for_each(|&x, &y| {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    });
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantVolume);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Voxels whose centres lie within `radius` (µm) of `center`.
pub fn sphere_mask(grid: &GridSpec, center: [f64; 3], radius: f64) -> Array3<bool> {
    Array3::from_shape_fn(grid.shape(), |(i, j, k)| {
        let d = distance(grid, center, i, j, k);
        d <= radius
    })
}

fn distance(grid: &GridSpec, center: [f64; 3], i: usize, j: usize, k: usize) -> f64 {
    let x = grid.coordinate(grid.nx, i) - center[0];
    let y = grid.coordinate(grid.ny, j) - center[1];
    let z = grid.coordinate(grid.nz, k) - center[2];
    (x * x + y * y + z * z).sqrt()
}

/// Mean squared value outside `object_mask` dilated by `guard_voxels`.
pub fn ringing_energy(vol: &Volume3D, object_mask: &Array3<bool>, guard_voxels: usize) -> Result<f64> {
    if object_mask.dim() != vol.grid.shape() {
        return Err(Error::GridMismatch(format!(
            "mask {:?} does not match volume {:?}",
            object_mask.dim(),
            vol.grid.shape()
        )));
    }
    if guard_voxels == 0 {
        return Err(Error::InvalidParameter("guard must be at least one voxel".into()));
    }
    let mut grown = object_mask.clone();
    for _ in 0..guard_voxels {
        grown = dilate(&grown);
    }
    let (mut sum, mut count) = (0.0, 0usize);
    Zip::from(&vol.values).and(&grown).for_each(|&v, &inside| {
        if !inside {
            sum += v * v;
            count += 1;
        }
    });
    if count == 0 {
        return Err(Error::EmptyShell);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellStatistics {
    /// Mean `|v - reference|` on the boundary shell `| |r - c| - R | <= half_width`.
    pub shell_mean: f64,
    /// Mean `|v - reference|` for `|r - c| <= interior_fraction·R`.
    pub interior_mean: f64,
    pub ratio: f64,
    pub shell_voxels: usize,
    pub interior_voxels: usize,
}

/// Boundary-versus-interior contrast of a spherical object.
pub fn shell_statistics(
    vol: &Volume3D,
    center: [f64; 3],
    radius: f64,
    half_width: f64,
    interior_fraction: f64,
    reference: f64,
) -> Result<ShellStatistics> {
    let g = vol.grid;
    let (mut shell, mut ns, mut interior, mut ni) = (0.0, 0usize, 0.0, 0usize);
    for ((i, j, k), &v) in vol.values.indexed_iter() {
        let d = distance(&g, center, i, j, k);
        let a = (v - reference).abs();
        if (d - radius).abs() <= half_width {
            shell += a;
            ns += 1;
        }
        if d <= interior_fraction * radius {
            interior += a;
            ni += 1;
        }
    }
    if ns == 0 || ni == 0 {
        return Err(Error::EmptyShell);
    }
    let (shell_mean, interior_mean) = (shell / ns as f64, interior / ni as f64);
    Ok(ShellStatistics {
        shell_mean,
        interior_mean,
        ratio: shell_mean / interior_mean,
        shell_voxels: ns,
        interior_voxels: ni,
    })
}

/// Mean value over voxels within `radius` of `center`.
pub fn mean_within(vol: &Volume3D, center: [f64; 3], radius: f64) -> Result<f64> {
    let mask = sphere_mask(&vol.grid, center, radius);
    let (mut s, mut c) = (0.0, 0usize);
    Zip::from(&vol.values).and(&mask).for_each(|&v, &m| {
        if m {
            s += v;
            c += 1;
        }
    });
    if c == 0 {
        return Err(Error::EmptyShell);
    }
    Ok(s / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(Plane::Xy),
            "xz" => Ok(Plane::Xz),
            "yz" => Ok(Plane::Yz),
            other => Err(Error::InvalidParameter(format!("unknown plane {other:?}"))),
        }
    }
}

/// Extracts a slice as `(rows, columns)`: XY rows run along y, XZ and YZ rows along z.
pub fn extract_slice(vol: &Volume3D, plane: Plane, index: usize) -> Result<Array2<f64>> {
    let (nx, ny, nz) = vol.grid.shape();
    let limit = match plane {
        Plane::Xy => nz,
        Plane::Xz => ny,
        Plane::Yz => nx,
    };
    if index >= limit {
        return Err(Error::IndexOutOfRange { index: vec![index], shape: vec![limit] });
    }
    let v = &vol.values;
    Ok(match plane {
        Plane::Xy => Array2::from_shape_fn((ny, nx), |(r, c)| v[[c, r, index]]),
        Plane::Xz => Array2::from_shape_fn((nz, nx), |(r, c)| v[[c, index, r]]),
        Plane::Yz => Array2::from_shape_fn((nz, ny), |(r, c)| v[[index, c, r]]),
    })
}

/// Linear map of `[min, max]` onto `0..=255`, clamped; a degenerate range maps to 128.
pub fn quantize(v: f64, min: f64, max: f64) -> u8 {
    if max <= min {
        return 128;
    }
    (255.0 * (v - min) / (max - min)).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceExport {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    pub pixels: Vec<u8>,
    pub image_path: PathBuf,
    pub sidecar_path: PathBuf,
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes a binary PGM slice plus a `<image>.txt` sidecar with the mapping.
pub fn export_slice(
    vol: &Volume3D,
    plane: Plane,
    index: usize,
    value_range: Option<(f64, f64)>,
    path: &Path,
) -> Result<SliceExport> {
    let slice = extract_slice(vol, plane, index)?;
    let (min, max) = match value_range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return Err(Error::InvalidParameter(format!("invalid value range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => (
            slice.iter().copied().fold(f64::INFINITY, f64::min),
            slice.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
    };
    let (height, width) = slice.dim();
    let pixels: Vec<u8> = slice.iter().map(|&v| quantize(v, min, max)).collect();

    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    atomic_write(path, &bytes)?;

    let mut side = String::new();
    let _ = writeln!(side, "plane = {plane:?}");
    let _ = writeln!(side, "index = {index}");
    let _ = writeln!(side, "width = {width}");
    let _ = writeln!(side, "height = {height}");
    let _ = writeln!(side, "value_min = {min:e}");
    let _ = writeln!(side, "value_max = {max:e}");
    let _ = writeln!(side, "kind = {:?}", vol.kind);
    if max <= min {
        let _ = writeln!(side, "mapping = constant 128");
    } else {
        let _ = writeln!(side, "mapping = round(255 * (v - value_min) / (value_max - value_min)), clamped to 0..255");
    }
    let sidecar = sidecar_path(path);
    atomic_write(&sidecar, side.as_bytes())?;

    Ok(SliceExport { width, height, min, max, pixels, image_path: path.to_path_buf(), sidecar_path: sidecar })
}

/// Reads a binary 8-bit PGM as `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::MalformedHeader(format!("unsupported PGM header {fields:?}")));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::MalformedHeader(format!("bad PGM size {s:?}")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(Error::PayloadLength { expected: w * h, actual: data.len() });
    }
    Ok((w, h, data.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::VolumeKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid() -> GridSpec {
        GridSpec::cubic(16, 0.25).unwrap()
    }

    fn random(seed: u64) -> Volume3D {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Volume3D::new(grid(), Array3::from_shape_fn(grid().shape(), |_| rng.random::<f64>()), VolumeKind::Filtered).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let a = random(1);
        assert!((ncc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = Volume3D { values: a.values.mapv(|v| 2.0 * v + 3.0), ..a.clone() };
        assert!((ncc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = Volume3D { values: a.values.mapv(|v| -v), ..a.clone() };
        assert!((ncc(&a, &c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_volume_has_no_correlation() {
        let a = random(2);
        let c = Volume3D::filled(grid(), 1.5, VolumeKind::Filtered).unwrap();
        assert!(matches!(ncc(&a, &c), Err(Error::ConstantVolume)));
    }

    #[test]
    fn ringing_of_zero_volume_is_zero() {
        let z = Volume3D::filled(grid(), 0.0, VolumeKind::Filtered).unwrap();
        let mask = sphere_mask(&grid(), [0.0; 3], 1.0);
        assert_eq!(ringing_energy(&z, &mask, 2).unwrap(), 0.0);
    }

    #[test]
    fn ringing_ignores_interior_and_guard() {
        let g = grid();
        let mask = sphere_mask(&g, [0.0; 3], 0.8);
        let mut grown = mask.clone();
        grown = dilate(&grown);
        let values = Array3::from_shape_fn(g.shape(), |idx| if grown[idx] { 5.0 } else { 0.0 });
        let v = Volume3D::new(g, values, VolumeKind::Filtered).unwrap();
        assert_eq!(ringing_energy(&v, &mask, 1).unwrap(), 0.0);
        assert!(ringing_energy(&v, &mask, 1).is_ok());
        assert!(matches!(ringing_energy(&v, &mask, 0), Err(Error::InvalidParameter(_))));
        let full = Array3::from_elem(g.shape(), true);
        assert!(matches!(ringing_energy(&v, &full, 1), Err(Error::EmptyShell)));
    }

    #[test]
    fn ringing_scales_quadratically() {
        let a = random(3);
        let mask = sphere_mask(&grid(), [0.0; 3], 1.0);
        let base = ringing_energy(&a, &mask, 1).unwrap();
        let scaled = Volume3D { values: a.values.mapv(|v| 3.0 * v), ..a.clone() };
        let r = ringing_energy(&scaled, &mask, 1).unwrap();
        assert!((r / base - 9.0).abs() < 1e-12);
    }

    #[test]
    fn shell_statistics_of_a_hollow_sphere() {
        let g = GridSpec::cubic(32, 0.1).unwrap();
        let values = Array3::from_shape_fn(g.shape(), |(i, j, k)| {
            let d = distance(&g, [0.0; 3], i, j, k);
            if (d - 1.0).abs() <= 0.2 {
                1.0
            } else if d < 1.0 {
                0.25
            } else {
                0.0
            }
        });
        let v = Volume3D::new(g, values, VolumeKind::Filtered).unwrap();
        let s = shell_statistics(&v, [0.0; 3], 1.0, 0.2, 0.7, 0.0).unwrap();
        assert_eq!(s.shell_mean, 1.0);
        assert_eq!(s.interior_mean, 0.25);
        assert_eq!(s.ratio, 4.0);
    }

    #[test]
    fn slice_orientation() {
        let g = GridSpec::new(8, 10, 12, 0.1).unwrap();
        let values = Array3::from_shape_fn(g.shape(), |(i, j, k)| (100 * i + 10 * j + k) as f64);
        let v = Volume3D::new(g, values, VolumeKind::Filtered).unwrap();
        let xy = extract_slice(&v, Plane::Xy, 3).unwrap();
        assert_eq!(xy.dim(), (10, 8));
        assert_eq!(xy[[2, 5]], 523.0);
        let xz = extract_slice(&v, Plane::Xz, 4).unwrap();
        assert_eq!(xz[[7, 1]], 147.0);
        let yz = extract_slice(&v, Plane::Yz, 2).unwrap();
        assert_eq!(yz[[0, 9]], 290.0);
        assert!(extract_slice(&v, Plane::Xy, 12).is_err());
    }

    #[test]
    fn constant_slice_is_mid_gray() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let v = Volume3D::filled(grid(), 1.574, VolumeKind::RefractiveIndex).unwrap();
        let out = export_slice(&v, Plane::Xy, 8, None, &p).unwrap();
        assert!(out.pixels.iter().all(|&px| px == 128));
        let (w, h, px) = read_pgm(&p).unwrap();
        assert_eq!((w, h), (16, 16));
        assert_eq!(px, out.pixels);
        let side = std::fs::read_to_string(sidecar_path(&p)).unwrap();
        assert!(side.contains("constant 128"));
    }

    #[test]
    fn exported_bytes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.pgm");
        let v = random(9);
        let out = export_slice(&v, Plane::Xz, 3, Some((0.2, 0.8)), &p).unwrap();
        let slice = extract_slice(&v, Plane::Xz, 3).unwrap();
        let expect: Vec<u8> = slice.iter().map(|&x| quantize(x, 0.2, 0.8)).collect();
        assert_eq!(read_pgm(&p).unwrap().2, expect);
        assert_eq!(out.pixels, expect);
        assert_eq!(quantize(0.2, 0.2, 0.8), 0);
        assert_eq!(quantize(0.8, 0.2, 0.8), 255);
        assert_eq!(quantize(5.0, 0.2, 0.8), 255);
    }

    proptest! {
        #[test]
        fn ncc_symmetric_and_bounded(s1 in 0u64..500, s2 in 0u64..500) {
            let (a, b) = (random(s1), random(s2 + 1000));
            let ab = ncc(&a, &b).unwrap();
            let ba = ncc(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn ncc_invariant_under_common_permutation(seed in 0u64..500, shift in 1usize..15) {
            let (a, b) = (random(seed), random(seed + 7));
            let perm = |v: &Volume3D| {
                let n = v.values.len();
                let flat: Vec<f64> = v.values.iter().copied().collect();
                let moved: Vec<f64> = (0..n).map(|i| flat[(i * 7 + shift) % n]).collect();
                Volume3D { values: Array3::from_shape_vec(v.values.dim(), moved).unwrap(), ..v.clone() }
            };
            let before = ncc(&a, &b).unwrap();
            let after = ncc(&perm(&a), &perm(&b)).unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
