//! Step versus Gaussian dark-field filters on the bead phantom across cutoffs:
//! ringing outside the object and boundary/interior contrast.

use dfodt::analysis::{ringing_energy, shell_statistics, sphere_mask};
use dfodt::darkfield::{apply_darkfield, make_filter, response, Cutoff, FilterShape, FilterSpec};
use dfodt::phantom::{build_phantom, PhantomSpec};
use dfodt::GridSpec;

fn main() -> dfodt::Result<()> {
    let grid = GridSpec::cubic(96, 0.12)?;
    let phantom = build_phantom(&PhantomSpec::polystyrene_bead(), &grid)?;
    let object = sphere_mask(&grid, [0.0; 3], 3.5);

    println!("gaussian response at the cutoff: {}", response(FilterShape::Gaussian, 1.0, 1.0));
    println!("{:>8} {:>12} {:>12} {:>10}", "xi_c FOV", "ring step", "ring gauss", "edge gauss");
    for per_fov in [2.0, 5.0, 10.0, 20.0] {
        let mut ring = Vec::new();
        let mut edge = 0.0;
        for shape in [FilterShape::Step, FilterShape::Gaussian] {
            let f = make_filter(&FilterSpec::new(shape, Cutoff::PerFov(per_fov)), &grid)?;
            let out = apply_darkfield(&phantom, &f)?;
            ring.push(ringing_energy(&out, &object, 3)?);
            if shape == FilterShape::Gaussian {
                edge = shell_statistics(&out, [0.0; 3], 3.5, 2.0 * grid.pitch, 0.8, 0.0)?.ratio;
            }
        }
        println!("{per_fov:>8} {:>12.3e} {:>12.3e} {edge:>10.3}", ring[0], ring[1]);
    }
    Ok(())
}
