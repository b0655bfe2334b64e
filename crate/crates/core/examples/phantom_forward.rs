//! Builds the three phantom families, simulates a spiral scan for each, and writes
//! the phantom volume and field stack to a temporary directory.

use dfodt::forward::{add_field_noise, generate_illuminations, ForwardModel, IlluminationPattern};
use dfodt::io::{self, WriteOptions};
use dfodt::phantom::{build_phantom, PhantomSpec, PhantomVariant};
use dfodt::{GridSpec, OpticalConfig};

fn main() -> dfodt::Result<()> {
    let cfg = OpticalConfig::bead_default();
    let grid = GridSpec::cubic(64, 0.2)?;
    let dir = std::env::temp_dir().join("dfodt_phantom_forward");
    std::fs::create_dir_all(&dir)?;

    let phantoms = [
        ("sphere", PhantomSpec::polystyrene_bead()),
        (
            "shepp_logan",
            PhantomSpec {
                variant: PhantomVariant::SheppLogan3D { scale: 4.0, n_background: 1.58, contrast: 0.01 },
                n_medium: 1.574,
            },
        ),
        (
            "deltas",
            PhantomSpec { variant: PhantomVariant::Deltas { points: vec![([0.0; 3], 0.02)] }, n_medium: 1.574 },
        ),
    ];
    let scan = generate_illuminations(&cfg, IlluminationPattern::SpiralScan { count: 30 })?;

    for (name, spec) in phantoms {
        let phantom = build_phantom(&spec, &grid)?;
        let model = ForwardModel::new(&phantom, &cfg)?;
        let mut fields = model.fields(&scan, true)?;
        add_field_noise(&mut fields, 0.002, 1)?;
        let max_phase = fields
            .iter()
            .map(|f| {
                let ui = f.incident_wave();
                f.values.iter().zip(ui.iter()).map(|(u, i)| (u / i).arg().abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);

        io::write_volume(dir.join(format!("{name}.vol")), &phantom)?;
        io::write_field_stack(dir.join(format!("{name}.stack")), &fields, &WriteOptions::default().with_config(cfg))?;
        println!("{name:<12} mean n {:.5}, {} frames, max scattered phase {max_phase:.3} rad", phantom.mean(), fields.len());
    }
    println!("written to {}", dir.display());
    Ok(())
}
