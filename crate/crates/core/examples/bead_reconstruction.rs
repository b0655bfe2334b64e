//! Polystyrene bead: forward simulation, direct inversion and Gerchberg-Papoulis,
//! then dark-field filtering of the result.
//!
//! Run with `cargo run --release --example bead_reconstruction [grid] [pitch]`.

use std::time::Instant;

use dfodt::analysis::{mean_within, ncc, ringing_energy, shell_statistics, sphere_mask};
use dfodt::darkfield::{apply_darkfield, make_filter, Cutoff, FilterShape, FilterSpec};
use dfodt::forward::{generate_illuminations, ForwardModel, IlluminationPattern};
use dfodt::holography::rytov_transform;
use dfodt::phantom::{build_phantom, PhantomSpec};
use dfodt::tomography::{gerchberg_papoulis, map_ewald, reconstruct, GpConfig};
use dfodt::{GridSpec, OpticalConfig};

fn main() -> dfodt::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let pitch = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.1);

    let config = OpticalConfig::bead_default();
    let grid = GridSpec::cubic(n, pitch)?;
    let bead = PhantomSpec::polystyrene_bead();
    let phantom = build_phantom(&bead, &grid)?;
    let radius = 3.5;
    let t = Instant::now();

    let model = ForwardModel::new(&phantom, &config)?;
    let scan = generate_illuminations(&config, IlluminationPattern::CircularScan { count: 49, na_fraction: 0.95 })?;
    let fields = model.fields(&scan, true)?;
    let rytov: Vec<_> = fields.iter().map(rytov_transform).collect::<dfodt::Result<_>>()?;
    let (spectrum, report) = map_ewald(&rytov, &config, &grid, true)?;
    println!("mapping: {report:?} ({:.1} s)", t.elapsed().as_secs_f64());

    let plain = reconstruct(&spectrum, &config)?;
    let gp = gerchberg_papoulis(&spectrum, &config, &GpConfig::default())?;
    println!("reconstructed ({:.1} s)", t.elapsed().as_secs_f64());
    for it in &gp.log {
        println!(
            "  gp {}: violation {:.3e}, misfit {:.3e}",
            it.iteration, it.violation_energy, it.data_misfit
        );
    }

    let center = [0.0; 3];
    let truth = 1.5983;
    let n_plain = mean_within(&plain.volume, center, 0.8 * radius)?;
    let n_gp = mean_within(&gp.volume, center, 0.8 * radius)?;
    println!("interior RI without GP {n_plain:.5} (error {:.5})", (n_plain - truth).abs());
    println!("interior RI with GP    {n_gp:.5} (error {:.5})", (n_gp - truth).abs());
    println!("ncc(GP, phantom) = {:.4}", ncc(&gp.volume, &phantom)?);
    println!("ncc(plain, phantom) = {:.4}", ncc(&plain.volume, &phantom)?);

    let object = sphere_mask(&grid, center, radius);
    for shape in [FilterShape::Step, FilterShape::Gaussian] {
        let f = make_filter(&FilterSpec::new(shape, Cutoff::PerFov(10.0)), &grid)?;
        let filtered = apply_darkfield(&phantom, &f)?;
        println!("{shape:?} ringing at 10/FOV: {:.4e}", ringing_energy(&filtered, &object, 3)?);
    }

    let half = 2.0 * pitch;
    let f = make_filter(&FilterSpec::new(FilterShape::Gaussian, Cutoff::CyclesPerMicron(1.0 / 7.0)), &grid)?;
    let dark = apply_darkfield(&gp.volume, &f)?;
    let s_dark = shell_statistics(&dark, center, radius, half, 0.8, 0.0)?;
    let s_ri = shell_statistics(&gp.volume, center, radius, half, 0.8, config.n_medium)?;
    println!("edge ratio dark-field {:.3}, unfiltered {:.3}", s_dark.ratio, s_ri.ratio);
    println!("total {:.1} s", t.elapsed().as_secs_f64());
    Ok(())
}
