//! Declarative run configuration (TOML).
//!
//! Every section has defaults mirroring the polystyrene bead experiment, so an
//! empty file is a valid configuration. Unknown keys are rejected. Command-line
//! flags are applied as `section.key = value` overrides on the parsed TOML before
//! it is deserialized, so a flag and its config key always behave identically.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::darkfield::{Cutoff, FilterShape, FilterSpec, Modality, SupportParams};
use crate::error::{Error, Result};
use crate::forward::IlluminationPattern;
use crate::io::Precision;
use crate::optics::{GridSpec, OpticalConfig};
use crate::phantom::PhantomSpec;
use crate::tomography::GpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub optical: OpticalConfig,
    pub grid: GridSpec,
    pub phantom: Option<PhantomSpec>,
    pub illumination: IlluminationPattern,
    pub gp: GpConfig,
    pub filter: Option<FilterSpec>,
    pub holography: HolographyConfig,
    pub noise: NoiseConfig,
    pub ctf: CtfConfig,
    pub slice: SliceConfig,
    pub analysis: AnalysisConfig,
    /// Run per-frame work on the thread pool. Outputs then match sequential runs
    /// to rounding instead of bit for bit.
    pub parallel: bool,
    /// Payload precision of written files.
    pub precision: Precision,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            optical: OpticalConfig::bead_default(),
            grid: GridSpec { nx: 128, ny: 128, nz: 128, pitch: 0.1 },
            phantom: Some(PhantomSpec::polystyrene_bead()),
            illumination: IlluminationPattern::CircularScan { count: 49, na_fraction: 0.95 },
            gp: GpConfig::default(),
            filter: Some(FilterSpec::new(FilterShape::Gaussian, Cutoff::CyclesPerMicron(1.0 / 7.0))),
            holography: HolographyConfig::default(),
            noise: NoiseConfig::default(),
            ctf: CtfConfig::default(),
            slice: SliceConfig::default(),
            analysis: AnalysisConfig::default(),
            parallel: false,
            precision: Precision::F32,
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolographyConfig {
    /// Route simulated fields through interferogram synthesis and retrieval.
    pub enabled: bool,
    /// Reference carrier, cycles/µm.
    pub reference_tilt: [f64; 2],
    pub reference_amplitude: f64,
    /// Width in pixels of the frame border used to rescale retrieved fields to
    /// the incident wave.
    pub normalization_border: usize,
}

impl Default for HolographyConfig {
    fn default() -> Self {
        HolographyConfig { enabled: false, reference_tilt: [5.5, 5.5], reference_amplitude: 1.0, normalization_border: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of additive complex field noise per quadrature; 0 disables.
    pub field_sigma: f64,
    /// Standard deviation of additive interferogram intensity noise; 0 disables.
    pub detector_sigma: f64,
    /// Required whenever a sigma is nonzero.
    pub seed: Option<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { field_sigma: 0.0, detector_sigma: 0.0, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtfConfig {
    pub modality: Modality,
    /// Dark-field ring margin, cycles/µm; one frequency bin when absent.
    pub epsilon: Option<f64>,
    /// Ball radius removed for dark-field ODT.
    pub cutoff: Option<Cutoff>,
}

impl Default for CtfConfig {
    fn default() -> Self {
        CtfConfig { modality: Modality::Odt, epsilon: None, cutoff: None }
    }
}

impl CtfConfig {
    pub fn params(&self, grid: &GridSpec) -> SupportParams {
        SupportParams {
            epsilon: self.epsilon,
            cutoff: self.cutoff.map(|c| match c {
                Cutoff::CyclesPerMicron(v) => v,
                Cutoff::PerFov(m) => m / grid.min_fov(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceConfig {
    pub plane: crate::analysis::Plane,
    /// Slice index; the central plane when absent.
    pub index: Option<usize>,
    /// Value range mapped to 0..255; the slice min/max when absent.
    pub range: Option<[f64; 2]>,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig { plane: crate::analysis::Plane::Xy, index: None, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Guard shell (voxels) between the object and the region scored for ringing.
    pub guard_voxels: usize,
    /// Interior region radius as a fraction of the sphere radius.
    pub interior_fraction: f64,
    /// Half-width of the boundary shell, voxels.
    pub shell_half_width_voxels: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { guard_voxels: 3, interior_fraction: 0.8, shell_half_width_voxels: 2.0 }
    }
}

/// File locations. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
    /// Input overrides; each command otherwise reads the file its predecessor
    /// writes into `output_dir`.
    pub phantom: Option<PathBuf>,
    pub fields: Option<PathBuf>,
    pub interferograms: Option<PathBuf>,
    pub volume: Option<PathBuf>,
    /// Write the mapped spectrum next to the reconstruction.
    pub dump_spectrum: bool,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            output_dir: PathBuf::from("out"),
            phantom: None,
            fields: None,
            interferograms: None,
            volume: None,
            dump_spectrum: false,
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key = value` overrides, and validates.
    pub fn from_toml_with(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut root = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut root, file);
        for (key, value) in overrides {
            set_key(&mut root, key, value.clone())?;
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    /// Canonical TOML of the effective configuration; hashed into run manifests.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.optical.validate()?;
        self.grid.validate()?;
        if let Some(p) = &self.phantom {
            if (p.n_medium - self.optical.n_medium).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "phantom medium {} differs from optical medium {}",
                    p.n_medium, self.optical.n_medium
                )));
            }
        }
        if let Some(f) = &self.filter {
            f.cutoff_on(&self.grid)?;
        }
        for (name, s) in [("field_sigma", self.noise.field_sigma), ("detector_sigma", self.noise.detector_sigma)] {
            if !(s >= 0.0) {
                return Err(Error::Config(format!("noise.{name} must be >= 0")));
            }
            if s > 0.0 && self.noise.seed.is_none() {
                return Err(Error::Config(format!("noise.{name} > 0 requires noise.seed")));
            }
        }
        if self.analysis.guard_voxels == 0 {
            return Err(Error::Config("analysis.guard_voxels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        self.filter.ok_or_else(|| Error::MissingParameter("filter".into()))
    }
}

// Tagged variants (phantom, illumination, cutoff) are replaced whole so that fields
// of the default variant never leak into a different one.
fn merge(base: &mut toml::Table, incoming: toml::Table) {
    for (key, value) in incoming {
        let tagged = value
            .as_table()
            .is_some_and(|t| key == "cutoff" || t.contains_key("type") || t.contains_key("pattern"));
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(v)) if !tagged => merge(b, v),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key:?}: {part:?} is not a table")))?;
    }
    let last = parts[parts.len() - 1];
    if matches!(last, "type" | "pattern") && table.get(last) != Some(&value) {
        table.clear();
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`, reading the value as TOML and falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::PhantomVariant;

    #[test]
    fn empty_config_is_the_bead_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.gp.iterations, 8);
        assert_eq!(cfg.optical.wavelength_vacuum, 0.532);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[gp]\niteration = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.phantom = Some(PhantomSpec {
            variant: PhantomVariant::SheppLogan3D { scale: 3.0, n_background: 1.58, contrast: 0.01 },
            n_medium: 1.574,
        });
        cfg.illumination = IlluminationPattern::SpiralScan { count: 30 };
        cfg.ctf.cutoff = Some(Cutoff::PerFov(1.0));
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "[gp]\niterations = 3\n";
        let ov = vec![parse_override("gp.iterations=5").unwrap(), parse_override("grid.nx = 32").unwrap()];
        let cfg = RunConfig::from_toml_with(text, &ov).unwrap();
        assert_eq!(cfg.gp.iterations, 5);
        assert_eq!(cfg.grid.nx, 32);
        let (k, v) = parse_override("ctf.modality=dark_field").unwrap();
        assert_eq!(k, "ctf.modality");
        assert_eq!(v, toml::Value::String("dark_field".into()));
    }

    #[test]
    fn partial_sections_and_variant_switches() {
        let cfg = RunConfig::from_toml("[grid]\nnx = 64\n[phantom.variant]\ntype = \"shepp_logan\"\nscale = 2.0\nn_background = 1.58\ncontrast = 0.01\n").unwrap();
        assert_eq!((cfg.grid.nx, cfg.grid.ny), (64, RunConfig::default().grid.ny));
        assert!(matches!(cfg.phantom.unwrap().variant, PhantomVariant::SheppLogan3D { .. }));
        let ov = vec![
            parse_override("illumination.pattern=spiral_scan").unwrap(),
            parse_override("illumination.count=12").unwrap(),
        ];
        let cfg = RunConfig::from_toml_with("", &ov).unwrap();
        assert_eq!(cfg.illumination, IlluminationPattern::SpiralScan { count: 12 });
    }

    #[test]
    fn noise_requires_seed() {
        assert!(RunConfig::from_toml("[noise]\nfield_sigma = 0.01").is_err());
        assert!(RunConfig::from_toml("[noise]\nfield_sigma = 0.01\nseed = 4").is_ok());
    }

    #[test]
    fn invalid_sections_fail_validation() {
        assert!(RunConfig::from_toml("[grid]\nnx = 7\nny = 8\nnz = 8\npitch = 0.1").is_err());
        assert!(RunConfig::from_toml("[optical]\nwavelength_vacuum = 0.5\nn_medium = 1.0\nna_condenser = 1.2\nna_objective = 1.2").is_err());
    }
}
