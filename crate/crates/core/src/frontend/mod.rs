//! From raw speech to network inputs: GCI detection, inverse filtering and
//! three-period windows.

pub mod gci;
pub mod iaif;
pub mod windows;

pub use gci::{detect_gci, GciSource, GciTrack};
pub use iaif::{aligned_correlation, iaif, normalized_correlation};
pub use windows::{make_windows, FeatureKind, FeatureWindow, Windowing, FEATURE_DIM};
