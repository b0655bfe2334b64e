//! Dark-field ODT: 3D high-pass filtering of tomograms, and the transfer-function
//! supports used to compare modalities.

mod filter;
mod support;

pub use filter::{apply_darkfield, make_filter, radial_frequency, response, Cutoff, Filter3D, FilterShape, FilterSpec};
pub use support::{compare_masks, dilate, make_ctf_support, MaskAgreement, Modality, SupportMask3D, SupportParams};
