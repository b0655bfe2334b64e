use dfodt::analysis::{mean_within, ncc};
use dfodt::forward::{add_field_noise, generate_illuminations, ForwardModel, IlluminationPattern};
use dfodt::holography::{normalize_to_incident, retrieve_field, rytov_transform, synthesize_interferogram};
use dfodt::io::{self, WriteOptions};
use dfodt::phantom::{build_phantom, PhantomSpec, PhantomVariant};
use dfodt::tomography::{gerchberg_papoulis, map_ewald, reconstruct, GpConfig};
use dfodt::{GridSpec, OpticalConfig, VolumeKind};

fn small_bead() -> PhantomSpec {
    PhantomSpec {
        variant: PhantomVariant::Sphere { center: [0.0; 3], radius: 1.2, n_inside: 1.59 },
        n_medium: 1.574,
    }
}

#[test]
fn holographic_acquisition_reconstructs_like_direct_fields() {
    // fine pitch so the sideband separates at NA 1.2
    let cfg = OpticalConfig::bead_default();
    let grid = GridSpec::cubic(64, 0.06).unwrap();
    let phantom = build_phantom(&small_bead(), &grid).unwrap();
    let model = ForwardModel::new(&phantom, &cfg).unwrap();
    let set = generate_illuminations(&cfg, IlluminationPattern::CircularScan { count: 12, na_fraction: 0.9 }).unwrap().snapped(&cfg, &grid).unwrap();
    let fields = model.fields(&set, false).unwrap();
    let carrier = 21.0 / (64.0 * 0.06);
    let retrieved: Vec<_> = fields
        .iter()
        .map(|f| {
            let h = synthesize_interferogram(f, [carrier, carrier], 2.0, &cfg).unwrap();
            normalize_to_incident(&retrieve_field(&h, &cfg).unwrap(), 2).unwrap()
        })
        .collect();
    let direct: Vec<_> = fields.iter().map(|f| rytov_transform(f).unwrap()).collect();
    let via_holo: Vec<_> = retrieved.iter().map(|f| rytov_transform(f).unwrap()).collect();
    let (a, _) = map_ewald(&direct, &cfg, &grid, false).unwrap();
    let (b, _) = map_ewald(&via_holo, &cfg, &grid, false).unwrap();
    let ra = reconstruct(&a, &cfg).unwrap().volume;
    let rb = reconstruct(&b, &cfg).unwrap().volume;
    let c = ncc(&ra, &rb).unwrap();
    assert!(c > 0.99, "{c}");
}

#[test]
fn noisy_fields_survive_the_file_round_trip_and_reconstruct() {
    let cfg = OpticalConfig::bead_default();
    let grid = GridSpec::cubic(48, 0.2).unwrap();
    let phantom = build_phantom(&small_bead(), &grid).unwrap();
    let model = ForwardModel::new(&phantom, &cfg).unwrap();
    let set = generate_illuminations(&cfg, IlluminationPattern::SpiralScan { count: 24 }).unwrap();
    let mut fields = model.fields(&set, true).unwrap();
    add_field_noise(&mut fields, 0.005, 9).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fields.stack");
    io::write_field_stack(&path, &fields, &WriteOptions::f64()).unwrap();
    let (back, _) = io::read_field_stack(&path).unwrap();
    assert_eq!(back, fields);

    let rytov: Vec<_> = back.iter().map(|f| rytov_transform(f).unwrap()).collect();
    let (spec, _) = map_ewald(&rytov, &cfg, &grid, true).unwrap();
    let gp = gerchberg_papoulis(&spec, &cfg, &GpConfig::default()).unwrap();
    assert_eq!(gp.volume.kind, VolumeKind::RefractiveIndex);
    let inside = mean_within(&gp.volume, [0.0; 3], 0.6).unwrap();
    assert!(inside > cfg.n_medium + 0.5 * (1.59 - cfg.n_medium), "{inside}");
    assert!(ncc(&gp.volume, &phantom).unwrap() > 0.7);
}
