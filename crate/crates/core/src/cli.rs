//! Batch front end: one subcommand per pipeline stage plus `run` for the whole chain.
//!
//! Every command reads the effective [`RunConfig`] (config file, then flag
//! overrides), writes its outputs atomically into `paths.output_dir`, and records a
//! `<command>.manifest.json` with hashes, the tool version and summary metrics.
//! Errors go to stderr as one JSON line; the exit code encodes the error class.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{export_slice, mean_within, ncc, ringing_energy, shell_statistics, sphere_mask};
use crate::config::{parse_override, RunConfig};
use crate::darkfield::{apply_darkfield, make_ctf_support, make_filter, FilterShape, FilterSpec};
use crate::error::{Error, ErrorClass, Result};
use crate::forward::{add_field_noise, generate_illuminations, ForwardModel};
use crate::holography::{
    add_detector_noise, normalize_to_incident, retrieve_field, rytov_transform, synthesize_interferogram, Interferogram,
    RytovField,
};
use crate::io::{self, WriteOptions};
use crate::optics::{ComplexField2D, Volume3D, VolumeKind};
use crate::phantom::{build_phantom, PhantomVariant};
use crate::tomography::{gerchberg_papoulis, map_ewald, reconstruct};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const PHANTOM_FILE: &str = "phantom.vol";
pub const FIELDS_FILE: &str = "fields.stack";
pub const INTERFEROGRAMS_FILE: &str = "interferograms.stack";
pub const RETRIEVED_FILE: &str = "retrieved.stack";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.vol";
pub const DIRECT_FILE: &str = "reconstruction_direct.vol";
pub const SPECTRUM_FILE: &str = "spectrum.spec";
pub const GP_LOG_FILE: &str = "gp_log.jsonl";
pub const DARKFIELD_FILE: &str = "darkfield.vol";

#[derive(Debug, Parser)]
#[command(name = "dfodt", version, about = "Dark-field optical diffraction tomography pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// paths.output_dir
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// noise.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// parallel = true
    #[arg(long, global = true)]
    pub parallel: bool,
    /// precision (f32 or f64)
    #[arg(long, global = true)]
    pub precision: Option<String>,
    /// Arbitrary `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the configured phantom volume.
    Phantom,
    /// Simulate the field stack (and interferograms if holography is enabled).
    Simulate {
        /// paths.phantom
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Retrieve fields from an interferogram stack.
    Retrieve {
        /// paths.interferograms
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Map fields onto Ewald caps and reconstruct, with and without GP.
    Reconstruct {
        /// paths.fields
        #[arg(long)]
        input: Option<PathBuf>,
        /// gp.iterations
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// High-pass filter a volume.
    Darkfield {
        /// paths.volume
        #[arg(long)]
        input: Option<PathBuf>,
        /// filter.shape (step or gaussian)
        #[arg(long)]
        shape: Option<String>,
        /// filter.cutoff.cycles_per_micron
        #[arg(long, conflicts_with = "cutoff_fov")]
        cutoff: Option<f64>,
        /// filter.cutoff.per_fov
        #[arg(long)]
        cutoff_fov: Option<f64>,
    },
    /// Generate a transfer-function support mask.
    Ctf {
        /// ctf.modality (bright_field, dark_field, qpi, odt, dark_field_odt)
        #[arg(long)]
        modality: Option<String>,
        /// ctf.epsilon, cycles/µm
        #[arg(long)]
        epsilon: Option<f64>,
        /// ctf.cutoff.cycles_per_micron
        #[arg(long, conflicts_with = "cutoff_fov")]
        cutoff: Option<f64>,
        /// ctf.cutoff.per_fov
        #[arg(long)]
        cutoff_fov: Option<f64>,
    },
    /// Normalized cross-correlation of two volumes.
    Compare { a: PathBuf, b: PathBuf },
    /// Export a volume slice as an 8-bit PGM with a text sidecar.
    Slice {
        /// paths.volume
        #[arg(long)]
        input: Option<PathBuf>,
        /// slice.plane (xy, xz, yz)
        #[arg(long)]
        plane: Option<String>,
        /// slice.index
        #[arg(long)]
        index: Option<usize>,
        /// slice.range as min,max
        #[arg(long, value_delimiter = ',', num_args = 2)]
        range: Option<Vec<f64>>,
    },
    /// phantom → simulate → (retrieve) → reconstruct → darkfield → compare.
    Run,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::Simulate { .. } => "simulate",
            Command::Retrieve { .. } => "retrieve",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Darkfield { .. } => "darkfield",
            Command::Ctf { .. } => "ctf",
            Command::Compare { .. } => "compare",
            Command::Slice { .. } => "slice",
            Command::Run => "run",
        }
    }

    fn overrides(&self) -> Vec<(String, toml::Value)> {
        let mut out = Vec::new();
        let path = |p: &Path| toml::Value::String(p.to_string_lossy().into_owned());
        let mut cutoff = |prefix: &str, c: Option<f64>, f: Option<f64>| {
            if let Some(c) = c {
                out.push((format!("{prefix}.cutoff"), table("cycles_per_micron", toml::Value::Float(c))));
            }
            if let Some(f) = f {
                out.push((format!("{prefix}.cutoff"), table("per_fov", toml::Value::Float(f))));
            }
        };
        match self {
            Command::Darkfield { cutoff: c, cutoff_fov: f, .. } => cutoff("filter", *c, *f),
            Command::Ctf { cutoff: c, cutoff_fov: f, .. } => cutoff("ctf", *c, *f),
            _ => {}
        }
        match self {
            Command::Simulate { input: Some(p) } => out.push(("paths.phantom".into(), path(p))),
            Command::Retrieve { input: Some(p) } => out.push(("paths.interferograms".into(), path(p))),
            Command::Reconstruct { input, iterations } => {
                if let Some(p) = input {
                    out.push(("paths.fields".into(), path(p)));
                }
                if let Some(n) = iterations {
                    out.push(("gp.iterations".into(), toml::Value::Integer(*n as i64)));
                }
            }
            Command::Darkfield { input, shape, .. } => {
                if let Some(p) = input {
                    out.push(("paths.volume".into(), path(p)));
                }
                if let Some(s) = shape {
                    out.push(("filter.shape".into(), toml::Value::String(s.clone())));
                }
            }
            Command::Ctf { modality, epsilon, .. } => {
                if let Some(m) = modality {
                    out.push(("ctf.modality".into(), toml::Value::String(m.clone())));
                }
                if let Some(e) = epsilon {
                    out.push(("ctf.epsilon".into(), toml::Value::Float(*e)));
                }
            }
            Command::Slice { input, plane, index, range } => {
                if let Some(p) = input {
                    out.push(("paths.volume".into(), path(p)));
                }
                if let Some(p) = plane {
                    out.push(("slice.plane".into(), toml::Value::String(p.to_ascii_lowercase())));
                }
                if let Some(i) = index {
                    out.push(("slice.index".into(), toml::Value::Integer(*i as i64)));
                }
                if let Some(r) = range {
                    let arr = r.iter().map(|v| toml::Value::Float(*v)).collect();
                    out.push(("slice.range".into(), toml::Value::Array(arr)));
                }
            }
            _ => {}
        }
        out
    }
}

fn table(key: &str, value: toml::Value) -> toml::Value {
    let mut t = toml::Table::new();
    t.insert(key.into(), value);
    toml::Value::Table(t)
}

impl GlobalArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut out = Vec::new();
        if let Some(d) = &self.output_dir {
            out.push(("paths.output_dir".into(), toml::Value::String(d.to_string_lossy().into_owned())));
        }
        if let Some(s) = self.seed {
            out.push(("noise.seed".into(), toml::Value::Integer(s as i64)));
        }
        if self.parallel {
            out.push(("parallel".into(), toml::Value::Boolean(true)));
        }
        if let Some(p) = &self.precision {
            out.push(("precision".into(), toml::Value::String(p.to_ascii_lowercase())));
        }
        for s in &self.overrides {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub timestamp_unix: u64,
    pub config_sha256: String,
    pub config: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub metrics: Map<String, Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record(path: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(path)?;
    Ok(FileRecord { path: path.to_string_lossy().into_owned(), sha256: sha256_hex(&bytes) })
}

struct Context {
    cfg: RunConfig,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    metrics: Map<String, Value>,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.output_dir.join(name)
    }

    fn opts(&self) -> WriteOptions {
        WriteOptions { precision: self.cfg.precision, config: Some(self.cfg.optical) }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if !self.inputs.iter().chain(self.outputs.iter()).any(|r| Path::new(&r.path) == path) {
            self.inputs.push(record(path)?);
        }
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        let r = record(path)?;
        self.outputs.retain(|o| o.path != r.path);
        self.outputs.push(r);
        Ok(())
    }

    fn metric(&mut self, key: &str, value: Value) {
        self.metrics.insert(key.into(), value);
    }

    fn read_volume(&mut self, path: &Path) -> Result<Volume3D> {
        let v = io::read_volume(path)?;
        self.input(path)?;
        Ok(v)
    }

    fn write_volume(&mut self, path: &Path, vol: &Volume3D) -> Result<()> {
        io::write_volume_with(path, vol, &self.opts())?;
        self.output(path)
    }

    fn sphere(&self) -> Option<([f64; 3], f64, f64)> {
        match &self.cfg.phantom {
            Some(p) => match p.variant {
                PhantomVariant::Sphere { center, radius, n_inside } => Some((center, radius, n_inside)),
                _ => None,
            },
            None => None,
        }
    }
}

fn phantom_stage(ctx: &mut Context) -> Result<PathBuf> {
    let spec = ctx
        .cfg
        .phantom
        .clone()
        .ok_or_else(|| Error::MissingParameter("phantom".into()))?;
    let vol = build_phantom(&spec, &ctx.cfg.grid)?;
    let path = ctx.out(PHANTOM_FILE);
    ctx.write_volume(&path, &vol)?;
    let min = vol.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vol.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ctx.metric("phantom", json!({ "voxels": vol.values.len(), "min": min, "max": max, "mean": vol.mean() }));
    Ok(path)
}

fn simulate_stage(ctx: &mut Context, phantom_path: &Path) -> Result<()> {
    let phantom = ctx.read_volume(phantom_path)?;
    ctx.cfg.grid.check_same(&phantom.grid)?;
    let cfg = ctx.cfg.clone();
    let model = ForwardModel::new(&phantom, &cfg.optical)?;
    let mut set = generate_illuminations(&cfg.optical, cfg.illumination)?;
    if cfg.holography.enabled {
        set = set.snapped(&cfg.optical, &cfg.grid)?;
    }
    let mut fields = model.fields(&set, cfg.parallel)?;
    if cfg.noise.field_sigma > 0.0 {
        let seed = cfg.noise.seed.ok_or_else(|| Error::MissingParameter("noise.seed".into()))?;
        add_field_noise(&mut fields, cfg.noise.field_sigma, seed)?;
    }
    let path = ctx.out(FIELDS_FILE);
    io::write_field_stack(&path, &fields, &ctx.opts())?;
    ctx.output(&path)?;
    let mut m = json!({ "frames": fields.len(), "field_sigma": cfg.noise.field_sigma });

    if cfg.holography.enabled {
        let h = &cfg.holography;
        let synth = |(i, f): (usize, &ComplexField2D)| -> Result<Interferogram> {
            let mut holo = synthesize_interferogram(f, h.reference_tilt, h.reference_amplitude, &cfg.optical)?;
            if cfg.noise.detector_sigma > 0.0 {
                let seed = cfg.noise.seed.ok_or_else(|| Error::MissingParameter("noise.seed".into()))?;
                add_detector_noise(&mut holo, cfg.noise.detector_sigma, seed.wrapping_add(1 + i as u64))?;
            }
            Ok(holo)
        };
        let holos: Vec<Interferogram> = if cfg.parallel {
            fields.par_iter().enumerate().map(synth).collect::<Result<_>>()?
        } else {
            fields.iter().enumerate().map(synth).collect::<Result<_>>()?
        };
        let path = ctx.out(INTERFEROGRAMS_FILE);
        io::write_interferogram_stack(&path, &holos, &ctx.opts())?;
        ctx.output(&path)?;
        m["interferograms"] = json!(holos.len());
        m["detector_sigma"] = json!(cfg.noise.detector_sigma);
    }
    ctx.metric("simulate", m);
    Ok(())
}

fn retrieve_stage(ctx: &mut Context, input: &Path) -> Result<PathBuf> {
    let (holos, _) = io::read_interferogram_stack(input)?;
    ctx.input(input)?;
    let cfg = ctx.cfg.clone();
    let one = |h: &Interferogram| -> Result<ComplexField2D> {
        normalize_to_incident(&retrieve_field(h, &cfg.optical)?, cfg.holography.normalization_border)
    };
    let fields: Vec<ComplexField2D> = if cfg.parallel {
        holos.par_iter().map(one).collect::<Result<_>>()?
    } else {
        holos.iter().map(one).collect::<Result<_>>()?
    };
    let path = ctx.out(RETRIEVED_FILE);
    io::write_field_stack(&path, &fields, &ctx.opts())?;
    ctx.output(&path)?;
    ctx.metric("retrieve", json!({ "frames": fields.len() }));
    Ok(path)
}

fn reconstruct_stage(ctx: &mut Context, input: &Path) -> Result<PathBuf> {
    let (fields, _) = io::read_field_stack(input)?;
    ctx.input(input)?;
    let cfg = ctx.cfg.clone();
    let rytov: Vec<RytovField> = if cfg.parallel {
        fields.par_iter().map(rytov_transform).collect::<Result<_>>()?
    } else {
        fields.iter().map(rytov_transform).collect::<Result<_>>()?
    };
    let (spectrum, report) = map_ewald(&rytov, &cfg.optical, &cfg.grid, cfg.parallel)?;
    if cfg.paths.dump_spectrum {
        let path = ctx.out(SPECTRUM_FILE);
        io::write_spectrum(&path, &spectrum, &ctx.opts())?;
        ctx.output(&path)?;
    }
    let direct = reconstruct(&spectrum, &cfg.optical)?;
    let gp = gerchberg_papoulis(&spectrum, &cfg.optical, &cfg.gp)?;

    let direct_path = ctx.out(DIRECT_FILE);
    ctx.write_volume(&direct_path, &direct.volume)?;
    let path = ctx.out(RECONSTRUCTION_FILE);
    ctx.write_volume(&path, &gp.volume)?;
    let log_path = ctx.out(GP_LOG_FILE);
    let mut log = Vec::new();
    gp.write_log(&mut log)?;
    io::atomic_write(&log_path, &log)?;
    ctx.output(&log_path)?;

    let mut m = json!({
        "mapping": report,
        "clamped_direct": direct.clamped,
        "clamped_gp": gp.clamped,
        "imaginary_residue": direct.imaginary_residue.max(gp.imaginary_residue),
        "gp_iterations": gp.log.len(),
    });
    if let Some(last) = gp.log.last() {
        m["gp_final_violation_energy"] = json!(last.violation_energy);
        m["gp_final_data_misfit"] = json!(last.data_misfit);
    }
    if let Some((center, radius, n_inside)) = ctx.sphere() {
        let r = cfg.analysis.interior_fraction * radius;
        let plain = mean_within(&direct.volume, center, r)?;
        let with_gp = mean_within(&gp.volume, center, r)?;
        m["interior_ri_direct"] = json!(plain);
        m["interior_ri_gp"] = json!(with_gp);
        m["interior_ri_error_direct"] = json!((plain - n_inside).abs());
        m["interior_ri_error_gp"] = json!((with_gp - n_inside).abs());
    }
    let phantom_path = cfg.paths.phantom.clone().unwrap_or_else(|| ctx.out(PHANTOM_FILE));
    if phantom_path.exists() {
        let phantom = ctx.read_volume(&phantom_path)?;
        if phantom.grid == gp.volume.grid {
            m["ncc_gp_vs_phantom"] = json!(ncc(&gp.volume, &phantom)?);
            m["ncc_direct_vs_phantom"] = json!(ncc(&direct.volume, &phantom)?);
        }
    }
    ctx.metric("reconstruct", m);
    Ok(path)
}

fn darkfield_stage(ctx: &mut Context, input: &Path) -> Result<PathBuf> {
    let vol = ctx.read_volume(input)?;
    let cfg = ctx.cfg.clone();
    let spec = cfg.filter_spec()?;
    let filter = make_filter(&spec, &vol.grid)?;
    let out = apply_darkfield(&vol, &filter)?;
    let path = ctx.out(DARKFIELD_FILE);
    ctx.write_volume(&path, &out)?;

    let mut m = json!({ "shape": spec.shape, "cutoff_cycles_per_micron": filter.cutoff });
    if let Some((center, radius, _)) = ctx.sphere() {
        let a = &cfg.analysis;
        let half = a.shell_half_width_voxels * vol.grid.pitch;
        let object = sphere_mask(&vol.grid, center, radius);
        m["ringing_energy"] = json!(ringing_energy(&out, &object, a.guard_voxels)?);
        for shape in [FilterShape::Step, FilterShape::Gaussian] {
            let f = make_filter(&FilterSpec::new(shape, spec.cutoff), &vol.grid)?;
            let e = ringing_energy(&apply_darkfield(&vol, &f)?, &object, a.guard_voxels)?;
            let key = match shape {
                FilterShape::Step => "ringing_energy_step",
                FilterShape::Gaussian => "ringing_energy_gaussian",
            };
            m[key] = json!(e);
        }
        let reference = if vol.kind == VolumeKind::RefractiveIndex { cfg.optical.n_medium } else { 0.0 };
        let filtered = shell_statistics(&out, center, radius, half, a.interior_fraction, 0.0)?;
        let unfiltered = shell_statistics(&vol, center, radius, half, a.interior_fraction, reference)?;
        m["edge_contrast_ratio"] = json!(filtered.ratio);
        m["edge_contrast_ratio_unfiltered"] = json!(unfiltered.ratio);
    }
    ctx.metric("darkfield", m);
    Ok(path)
}

fn ctf_stage(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg.clone();
    let mask = make_ctf_support(&cfg.optical, &cfg.grid, cfg.ctf.modality, cfg.ctf.params(&cfg.grid))?;
    let name = serde_json::to_value(cfg.ctf.modality)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "mask".into());
    let path = ctx.out(&format!("ctf_{name}.vol"));
    ctx.write_volume(&path, &mask.to_volume())?;
    ctx.metric(
        "ctf",
        json!({
            "modality": cfg.ctf.modality,
            "epsilon": mask.epsilon,
            "voxels": mask.count(),
            "lateral_extent_x": mask.lateral_extent_x(),
            "hermitian": mask.is_hermitian(),
        }),
    );
    Ok(())
}

fn compare_stage(ctx: &mut Context, a: &Path, b: &Path) -> Result<()> {
    let va = ctx.read_volume(a)?;
    let vb = ctx.read_volume(b)?;
    let value = ncc(&va, &vb)?;
    ctx.metric("ncc", json!(value));
    Ok(())
}

fn slice_stage(ctx: &mut Context, input: &Path) -> Result<()> {
    let vol = ctx.read_volume(input)?;
    let s = ctx.cfg.slice.clone();
    let (nx, ny, nz) = vol.grid.shape();
    let index = s.index.unwrap_or(match s.plane {
        crate::analysis::Plane::Xy => nz / 2,
        crate::analysis::Plane::Xz => ny / 2,
        crate::analysis::Plane::Yz => nx / 2,
    });
    let plane = format!("{:?}", s.plane).to_ascii_lowercase();
    let path = ctx.out(&format!("slice_{plane}_{index}.pgm"));
    let out = export_slice(&vol, s.plane, index, s.range.map(|r| (r[0], r[1])), &path)?;
    ctx.output(&out.image_path)?;
    ctx.output(&out.sidecar_path)?;
    ctx.metric(
        "slice",
        json!({ "plane": plane, "index": index, "width": out.width, "height": out.height, "min": out.min, "max": out.max }),
    );
    Ok(())
}

/// Runs one command with an already-resolved configuration and returns its manifest.
pub fn execute(command: &Command, cfg: RunConfig) -> Result<Manifest> {
    std::fs::create_dir_all(&cfg.paths.output_dir)?;
    let config_text = cfg.to_toml()?;
    let mut ctx = Context { cfg, inputs: Vec::new(), outputs: Vec::new(), metrics: Map::new() };
    let p = ctx.cfg.paths.clone();
    match command {
        Command::Phantom => {
            phantom_stage(&mut ctx)?;
        }
        Command::Simulate { .. } => {
            let input = p.phantom.clone().unwrap_or_else(|| ctx.out(PHANTOM_FILE));
            simulate_stage(&mut ctx, &input)?;
        }
        Command::Retrieve { .. } => {
            let input = p.interferograms.clone().unwrap_or_else(|| ctx.out(INTERFEROGRAMS_FILE));
            retrieve_stage(&mut ctx, &input)?;
        }
        Command::Reconstruct { .. } => {
            let fallback = if ctx.cfg.holography.enabled { RETRIEVED_FILE } else { FIELDS_FILE };
            let input = p.fields.clone().unwrap_or_else(|| ctx.out(fallback));
            reconstruct_stage(&mut ctx, &input)?;
        }
        Command::Darkfield { .. } => {
            let input = p.volume.clone().unwrap_or_else(|| ctx.out(RECONSTRUCTION_FILE));
            darkfield_stage(&mut ctx, &input)?;
        }
        Command::Ctf { .. } => ctf_stage(&mut ctx)?,
        Command::Compare { a, b } => compare_stage(&mut ctx, a, b)?,
        Command::Slice { .. } => {
            let input = p.volume.clone().unwrap_or_else(|| ctx.out(RECONSTRUCTION_FILE));
            slice_stage(&mut ctx, &input)?;
        }
        Command::Run => {
            let phantom = phantom_stage(&mut ctx)?;
            simulate_stage(&mut ctx, &phantom)?;
            let fields = if ctx.cfg.holography.enabled {
                let holos = ctx.out(INTERFEROGRAMS_FILE);
                retrieve_stage(&mut ctx, &holos)?
            } else {
                ctx.out(FIELDS_FILE)
            };
            let rec = reconstruct_stage(&mut ctx, &fields)?;
            darkfield_stage(&mut ctx, &rec)?;
            compare_stage(&mut ctx, &rec, &phantom)?;
        }
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config_sha256: sha256_hex(config_text.as_bytes()),
        config: config_text,
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        metrics: ctx.metrics,
    };
    let path = ctx.cfg.paths.output_dir.join(format!("{}.manifest.json", command.name()));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    io::atomic_write(&path, text.as_bytes())?;
    Ok(manifest)
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Io => EXIT_IO,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

fn error_line(class: &str, code: i32, message: &str) -> String {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    json!({ "error": class, "exit_code": code, "message": message }).to_string()
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", EXIT_CONFIG, first));
            return EXIT_CONFIG;
        }
    };
    let result = cli
        .global
        .overrides()
        .and_then(|mut ov| {
            ov.extend(cli.command.overrides());
            RunConfig::load(cli.global.config.as_deref(), &ov)
        })
        .and_then(|cfg| execute(&cli.command, cfg));
    match result {
        Ok(m) => {
            println!("{}", serde_json::to_string(&m.metrics).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            let class = match e.class() {
                ErrorClass::Config => "config",
                ErrorClass::Io => "io",
                ErrorClass::Numerical => "numerical",
            };
            eprintln!("{}", error_line(class, code, &e.to_string()));
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn error_lines_are_single_line_json() {
        let line = error_line("config", 2, "bad\nthing");
        assert!(!line.contains('\n'));
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["exit_code"], 2);
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::MissingParameter("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::PayloadLength { expected: 1, actual: 2 }), EXIT_IO);
        assert_eq!(exit_code(&Error::DegenerateReconstruction { clamped: 2, total: 3 }), EXIT_NUMERICAL);
    }

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from(["dfodt", "ctf", "--modality", "dark_field_odt", "--cutoff-fov", "2", "--seed", "7"]).unwrap();
        let mut ov = cli.global.overrides().unwrap();
        ov.extend(cli.command.overrides());
        let cfg = RunConfig::from_toml_with("", &ov).unwrap();
        assert_eq!(cfg.ctf.modality, crate::darkfield::Modality::DarkFieldOdt);
        assert_eq!(cfg.ctf.cutoff, Some(crate::darkfield::Cutoff::PerFov(2.0)));
        assert_eq!(cfg.noise.seed, Some(7));
    }
}
