//! Gerchberg-Papoulis iteration: alternate between the measured Fourier samples
//! and a real-space non-negativity (and optional support) constraint on the
//! scattering potential.

use std::io::Write;

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::optics::{OpticalConfig, Spectrum3D, Volume3D};

use super::{hermitian_complete, inverse_real, potential_to_index};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub iterations: usize,
    pub enforce_nonnegativity: bool,
    /// Real-space object support; the potential is zeroed outside it.
    #[serde(skip)]
    pub support_mask: Option<Array3<bool>>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { iterations: 8, enforce_nonnegativity: true, support_mask: None }
    }
}

impl GpConfig {
    pub fn disabled() -> Self {
        GpConfig { iterations: 0, enforce_nonnegativity: false, support_mask: None }
    }
}

/// Diagnostics of one round, serialized as one JSON line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpIteration {
    pub iteration: usize,
    /// `sum min(F, 0)²` of the estimate entering the projection.
    pub violation_energy: f64,
    /// Relative RMS distance of the projected estimate's spectrum from the
    /// measured samples, before they are re-imposed.
    pub data_misfit: f64,
    /// Largest deviation from the measured samples after re-imposition.
    pub residual_after_reimpose: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpResult {
    pub volume: Volume3D,
    pub log: Vec<GpIteration>,
    pub clamped: usize,
    pub imaginary_residue: f64,
}

impl GpResult {
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        for it in &self.log {
            let line = serde_json::to_string(it).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn violation_energy(f: &Array3<f64>) -> f64 {
    f.iter().map(|v| v.min(0.0).powi(2)).sum()
}

fn project(f: &mut Array3<f64>, gp: &GpConfig) {
    if gp.enforce_nonnegativity {
        f.mapv_inplace(|v| v.max(0.0));
    }
    if let Some(mask) = &gp.support_mask {
        Zip::from(f).and(mask).for_each(|v, &inside| {
            if !inside {
                *v = 0.0;
            }
        });
    }
}

/// Runs `gp.iterations` rounds of projection, forward transform and
/// re-imposition of the measured (Hermitian-completed) samples, then projects
/// once more and converts to refractive index.
///
/// With zero iterations, no non-negativity and no support mask the output is
/// identical to [`super::reconstruct`].
pub fn gerchberg_papoulis(spectrum: &Spectrum3D, config: &OpticalConfig, gp: &GpConfig) -> Result<GpResult> {
    config.validate()?;
    spectrum.validate()?;
    if let Some(mask) = &gp.support_mask {
        if mask.dim() != spectrum.grid.shape() {
            return Err(Error::GridMismatch(format!(
                "support mask {:?} does not match grid {:?}",
                mask.dim(),
                spectrum.grid.shape()
            )));
        }
    }
    let measured = hermitian_complete(spectrum);
    let (mut potential, mut imaginary_residue) = inverse_real(&measured.values);
    let measured_norm = measured
        .values
        .iter()
        .zip(measured.weights.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| v.norm_sqr())
        .sum::<f64>()
        .sqrt();

    let mut log = Vec::with_capacity(gp.iterations);
    for iteration in 0..gp.iterations {
        let violation = violation_energy(&potential);
        project(&mut potential, gp);
        let mut estimate = fft::fft3_real(&potential);
        let mut misfit = 0.0;
        let mut residual = 0.0f64;
        Zip::from(&mut estimate)
            .and(&measured.values)
            .and(&measured.weights)
            .for_each(|s, &m, &w| {
                if w > 0.0 {
                    misfit += (*s - m).norm_sqr();
                    *s = m;
                    residual = residual.max((*s - m).norm());
                }
            });
        let misfit = if measured_norm > 0.0 { misfit.sqrt() / measured_norm } else { misfit.sqrt() };
        log::debug!("gp iteration {iteration}: violation {violation:.3e}, misfit {misfit:.3e}");
        log.push(GpIteration { iteration, violation_energy: violation, data_misfit: misfit, residual_after_reimpose: residual });
        let (next, residue) = inverse_real(&estimate);
        potential = next;
        imaginary_residue = imaginary_residue.max(residue);
    }
    project(&mut potential, gp);

    let (volume, clamped) = potential_to_index(&potential, config, &spectrum.grid)?;
    Ok(GpResult { volume, log, clamped, imaginary_residue })
}

/// The measured samples as seen by the data step; exposed for fidelity checks.
pub fn measured_samples(spectrum: &Spectrum3D) -> Spectrum3D {
    hermitian_complete(spectrum)
}
