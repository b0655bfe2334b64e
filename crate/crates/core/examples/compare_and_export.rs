//! Volume comparison and slice export: NCC between a phantom and a blurred copy,
//! then XY/XZ slices as PGM images with sidecars.

use dfodt::analysis::{export_slice, ncc, read_pgm, Plane};
use dfodt::darkfield::{apply_darkfield, make_filter, Cutoff, FilterShape, FilterSpec};
use dfodt::phantom::{build_phantom, PhantomSpec, PhantomVariant};
use dfodt::GridSpec;

fn main() -> dfodt::Result<()> {
    let grid = GridSpec::cubic(64, 0.15)?;
    let spec = PhantomSpec {
        variant: PhantomVariant::SheppLogan3D { scale: 4.0, n_background: 1.58, contrast: 0.02 },
        n_medium: 1.574,
    };
    let phantom = build_phantom(&spec, &grid)?;
    let highpass = apply_darkfield(&phantom, &make_filter(&FilterSpec::new(FilterShape::Gaussian, Cutoff::PerFov(4.0)), &grid)?)?;
    println!("ncc(phantom, phantom) = {:.6}", ncc(&phantom, &phantom)?);
    println!("ncc(phantom, high-passed) = {:.4}", ncc(&phantom, &highpass)?);

    let dir = std::env::temp_dir().join("dfodt_slices");
    std::fs::create_dir_all(&dir)?;
    for (plane, name) in [(Plane::Xy, "xy"), (Plane::Xz, "xz")] {
        let path = dir.join(format!("phantom_{name}.pgm"));
        let out = export_slice(&phantom, plane, 32, None, &path)?;
        let (w, h, _) = read_pgm(&out.image_path)?;
        println!("{name}: {w}x{h}, range [{:.4}, {:.4}] -> {}", out.min, out.max, out.image_path.display());
    }
    Ok(())
}
