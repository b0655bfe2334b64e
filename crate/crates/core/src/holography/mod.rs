//! Off-axis holography: interferogram synthesis, sideband field retrieval and
//! the Rytov transform of retrieved fields.

mod unwrap;

pub use unwrap::{count_residues, unwrap_phase, wrap, UnwrapResult};

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fft;
use crate::optics::{axis_frequency, incident_wave, ComplexField2D, OpticalConfig};

/// Recorded intensity of the sample beam interfering with a tilted reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    pub intensity: Array2<f64>,
    /// Reference carrier, cycles/µm.
    pub reference_tilt: [f64; 2],
    /// Illumination of the sample beam, carried through to the retrieved field.
    pub k_illum: [f64; 3],
}

/// `psi_s = ln(U / U_i)` stored on the field grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RytovField(pub ComplexField2D);

impl RytovField {
    pub fn field(&self) -> &ComplexField2D {
        &self.0
    }

    /// Inverts the transform: `U = U_i · exp(psi_s)`.
    pub fn to_total_field(&self) -> ComplexField2D {
        let f = &self.0;
        let ui = f.incident_wave();
        let values = ndarray::Zip::from(&ui).and(&f.values).map_collect(|u, p| u * p.exp());
        ComplexField2D::new(f.pitch, values, f.k_illum)
    }
}

/// Checks that the sideband disc around the carrier sits inside the Nyquist square
/// and clear of the baseband autocorrelation disc (radius twice the pupil).
pub fn check_separability(pitch: f64, tilt: [f64; 2], config: &OpticalConfig) -> Result<()> {
    let r = config.na_objective / config.wavelength_vacuum;
    let nyq = 0.5 / pitch;
    if tilt[0].abs() + r > nyq || tilt[1].abs() + r > nyq {
        return Err(Error::Separability(format!(
            "sideband of radius {r:.4} around {tilt:?} leaves the Nyquist square (+-{nyq:.4} cycles/um)"
        )));
    }
    let t = tilt[0].hypot(tilt[1]);
    if t <= 3.0 * r {
        return Err(Error::Separability(format!(
            "carrier |{t:.4}| cycles/um overlaps the baseband; needs > {:.4}",
            3.0 * r
        )));
    }
    Ok(())
}

/// Intensity `|U + A·exp(i2π t·r)|²` on the field grid.
pub fn synthesize_interferogram(
    sample: &ComplexField2D,
    tilt: [f64; 2],
    ref_amplitude: f64,
    config: &OpticalConfig,
) -> Result<Interferogram> {
    check_separability(sample.pitch, tilt, config)?;
    let (nx, ny, p) = (sample.nx, sample.ny, sample.pitch);
    let intensity = Array2::from_shape_fn((nx, ny), |(i, j)| {
        let x = (i as f64 - (nx / 2) as f64) * p;
        let y = (j as f64 - (ny / 2) as f64) * p;
        let reference = Complex64::from_polar(ref_amplitude, 2.0 * PI * (tilt[0] * x + tilt[1] * y));
        (sample.values[[i, j]] + reference).norm_sqr()
    });
    Ok(Interferogram { nx, ny, pitch: p, intensity, reference_tilt: tilt, k_illum: sample.k_illum })
}

/// Adds Gaussian detector noise and clips at zero intensity.
pub fn add_detector_noise(holo: &mut Interferogram, sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    holo.intensity.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
    Ok(())
}

/// Sideband power below this multiple of the median out-of-band power is treated as absent.
const SNR_FLOOR: f64 = 100.0;

/// Off-axis retrieval: 2D FFT, crop the pupil-sized disc around the sideband that
/// carries `U`, move it to DC, inverse FFT, then fix the global phase.
///
/// With the reference written as `A·exp(+i2π t·r)`, the term `U·conj(R)` sits at
/// `-t`; that is the sideband cropped here. The carrier is rounded to the nearest bin.
pub fn retrieve_field(holo: &Interferogram, config: &OpticalConfig) -> Result<ComplexField2D> {
    let (nx, ny, p) = (holo.nx, holo.ny, holo.pitch);
    check_separability(p, holo.reference_tilt, config)?;
    let spectrum = fft::fft2(&holo.intensity.mapv(|v| Complex64::new(v, 0.0)));

    let r = config.na_objective / config.wavelength_vacuum;
    let tb = [
        (holo.reference_tilt[0] * nx as f64 * p).round() as isize,
        (holo.reference_tilt[1] * ny as f64 * p).round() as isize,
    ];
    let t = [tb[0] as f64 / (nx as f64 * p), tb[1] as f64 / (ny as f64 * p)];

    let mut cropped = Array2::<Complex64>::zeros((nx, ny));
    let mut peak = 0.0f64;
    let mut background = Vec::new();
    for i in 0..nx {
        let fx = axis_frequency(nx, p, i);
        for j in 0..ny {
            let fy = axis_frequency(ny, p, j);
            if fx * fx + fy * fy <= r * r {
                let si = i as isize - tb[0];
                let sj = j as isize - tb[1];
                let v = spectrum[[si as usize, sj as usize]];
                peak = peak.max(v.norm_sqr());
                cropped[[i, j]] = v;
            }
            let near_base = fx.hypot(fy) <= 2.0 * r;
            let near_minus = (fx + t[0]).hypot(fy + t[1]) <= r;
            let near_plus = (fx - t[0]).hypot(fy - t[1]) <= r;
            if !(near_base || near_minus || near_plus) {
                background.push(spectrum[[i, j]].norm_sqr());
            }
        }
    }
    let dc = spectrum[[nx / 2, ny / 2]].norm_sqr();
    let noise = if background.is_empty() {
        0.0
    } else {
        let mid = background.len() / 2;
        *background.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let floor = (SNR_FLOOR * noise).max(1e-20 * dc);
    if peak <= floor {
        return Err(Error::LowSnr { peak, floor });
    }

    let mut field = fft::ifft2(&cropped);
    normalize_global_phase(&mut field);
    Ok(ComplexField2D::new(p, field, holo.k_illum))
}

/// Rotates the field so its complex mean over the smoothest 10% of pixels is real-positive.
pub fn normalize_global_phase(field: &mut Array2<Complex64>) {
    let (nx, ny) = field.dim();
    let mut grad: Vec<(f64, usize, usize)> = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let c = field[[i, j]];
            let gx = field[[(i + 1).min(nx - 1), j]] - c;
            let gy = field[[i, (j + 1).min(ny - 1)]] - c;
            grad.push((gx.norm_sqr() + gy.norm_sqr(), i, j));
        }
    }
    grad.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let take = (grad.len() / 10).max(1);
    let mean: Complex64 = grad[..take].iter().map(|&(_, i, j)| field[[i, j]]).sum::<Complex64>() / take as f64;
    if mean.norm() > 0.0 {
        let rot = mean.conj() / mean.norm();
        field.mapv_inplace(|v| v * rot);
    }
}

/// Rescales a retrieved field by the complex constant that matches it to the unit
/// incident wave on a frame border `border` pixels wide, where the sample is assumed
/// absent. Retrieval leaves the reference amplitude and an arbitrary global phase on
/// the field; both would otherwise land on the DC voxel of every mapped frame.
pub fn normalize_to_incident(field: &ComplexField2D, border: usize) -> Result<ComplexField2D> {
    let (nx, ny) = (field.nx, field.ny);
    if border == 0 || 2 * border >= nx.min(ny) {
        return Err(Error::InvalidParameter(format!("border {border} does not fit a {nx}x{ny} frame")));
    }
    let ui = field.incident_wave();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for ((i, j), v) in field.values.indexed_iter() {
        if i < border || j < border || i >= nx - border || j >= ny - border {
            sum += v * ui[[i, j]].conj();
            count += 1;
        }
    }
    let c = sum / count as f64;
    if !(c.norm() > 0.0) {
        return Err(Error::ZeroAmplitude { pixels: count, floor: 0.0 });
    }
    Ok(ComplexField2D::new(field.pitch, field.values.mapv(|v| v / c), field.k_illum))
}

/// Least-squares complex constant `c` minimising `|c·field - reference|`, and the
/// resulting maximum error relative to `max |reference|`.
pub fn align_to(reference: &Array2<Complex64>, field: &Array2<Complex64>) -> (Complex64, f64) {
    let num: Complex64 = field.iter().zip(reference.iter()).map(|(f, r)| f.conj() * r).sum();
    let den: f64 = field.iter().map(|f| f.norm_sqr()).sum();
    let c = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
    let scale = reference.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = field.iter().zip(reference.iter()).map(|(f, r)| (c * f - r).norm()).fold(0.0, f64::max);
    (c, if scale > 0.0 { err / scale } else { err })
}

/// `psi_s = ln|U/U_i| + i·unwrap(arg(U/U_i))`, with `U_i` the unit plane wave of the
/// field's illumination. The unwrapped phase is offset by a multiple of 2π so its
/// median lies in `(-π, π]`.
pub fn rytov_transform(sample: &ComplexField2D) -> Result<RytovField> {
    let amplitudes: Vec<f64> = sample.values.iter().map(|v| v.norm()).collect();
    let median = {
        let mut a = amplitudes.clone();
        let mid = a.len() / 2;
        *a.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let floor = 1e-6 * median;
    let low = amplitudes.iter().filter(|&&a| !(a > floor)).count();
    if low > 0 {
        return Err(Error::ZeroAmplitude { pixels: low, floor });
    }
    let ui = incident_wave(sample.nx, sample.ny, sample.pitch, sample.k_illum);
    let ratio = ndarray::Zip::from(&sample.values).and(&ui).map_collect(|u, i| u * i.conj());
    let unwrapped = unwrap_phase(&ratio.mapv(|v| v.arg()));
    if unwrapped.has_residues() {
        log::warn!("phase map has {} residues; unwrapping may be path dependent", unwrapped.residues);
    }
    let mut phase = unwrapped.phase;
    let med = {
        let mut a: Vec<f64> = phase.iter().copied().collect();
        let mid = a.len() / 2;
        *a.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let offset = med - wrap(med);
    if offset != 0.0 {
        phase.mapv_inplace(|v| v - offset);
    }
    let values = ndarray::Zip::from(&ratio).and(&phase).map_collect(|r, ph| Complex64::new(r.norm().ln(), *ph));
    Ok(RytovField(ComplexField2D::new(sample.pitch, values, sample.k_illum)))
}
