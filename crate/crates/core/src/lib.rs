//! Optical diffraction tomography with computational dark-field contrast.
//!
//! The crate covers the whole synthetic pipeline:
//!
//! * [`optics`]: shared types (optical configuration, grids, volumes, spectra, fields)
//!   and centered-DC frequency coordinates.
//! * [`fft`]: unitary centered 2D/3D Fourier transforms.
//! * [`io`]: the binary volume / spectrum / stack file format.
//! * [`phantom`] and [`forward`]: ground-truth phantoms and the first-order
//!   (Rytov) forward model for plane-wave illumination scans.
//! * [`holography`]: off-axis interferogram synthesis, sideband field retrieval,
//!   phase unwrapping and the Rytov transform.
//! * [`tomography`]: Ewald-cap mapping, direct inversion and the
//!   Gerchberg-Papoulis non-negativity iteration.
//! * [`darkfield`]: step and Gaussian 3D high-pass filters and the transfer
//!   function supports of the label-free modalities.
//! * [`analysis`]: correlation, ringing and edge-contrast metrics, slice export.
//! * [`config`] and [`cli`]: the declarative batch front end.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod darkfield;
pub mod error;
pub mod fft;
pub mod forward;
pub mod holography;
pub mod io;
pub mod optics;
pub mod phantom;
pub mod tomography;

pub use error::{Error, Result};
pub use optics::{ComplexField2D, GridSpec, OpticalConfig, Spectrum3D, Volume3D, VolumeKind};
