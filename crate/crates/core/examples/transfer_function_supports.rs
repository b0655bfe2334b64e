//! Transfer-function supports of the five modalities, and the bandwidth comparison
//! between matched-NA dark-field and dark-field ODT.

use dfodt::darkfield::{compare_masks, make_ctf_support, Modality, SupportParams};
use dfodt::{GridSpec, OpticalConfig};

fn main() -> dfodt::Result<()> {
    let cfg = OpticalConfig::bead_default();
    let grid = GridSpec::cubic(64, 0.1)?;
    let bin = 1.0 / grid.min_fov();
    let params = SupportParams { epsilon: Some(bin), cutoff: Some(bin) };

    for m in [Modality::Qpi, Modality::BrightField, Modality::DarkField, Modality::Odt, Modality::DarkFieldOdt] {
        let mask = make_ctf_support(&cfg, &grid, m, params)?;
        println!(
            "{:<14} {:>7} voxels, lateral extent {:.3} cycles/um, hermitian {}",
            format!("{m:?}"),
            mask.count(),
            mask.lateral_extent_x(),
            mask.is_hermitian()
        );
    }

    let df = make_ctf_support(&cfg, &grid, Modality::DarkField, params)?;
    let dfodt = make_ctf_support(&cfg, &grid, Modality::DarkFieldOdt, params)?;
    let a = compare_masks(&df, &dfodt)?;
    println!(
        "dark-field vs dark-field ODT: {:.4} agreement, {} disagreements, {} away from a boundary",
        a.fraction, a.disagreements, a.interior_disagreements
    );
    println!("expected ODT extent {:.3}", (cfg.na_condenser + cfg.na_objective) / cfg.wavelength_vacuum);
    Ok(())
}
