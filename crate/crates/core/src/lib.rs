//! Corpus-scale analysis of scanned drawings.
//!
//! The crate is organised by analysis family:
//!
//! - [`corpus`]: manifest loading, validation and grouping
//! - [`imaging`]: decoding, resampling, grayscale and sRGB/CIE LAB conversion
//! - [`gravity`]: inverse row-intensity profiles and their group means
//! - [`colorfield`]: reference-color presence masks and heatmaps
//! - [`palette`]: GMM foreground extraction, k-means palettes, Silhouette selection
//! - [`complexity`]: Harris corner counts and palette variability
//! - [`stats`]: nearest-neighbour coincidence two-sample tests
//! - [`synth`]: deterministic synthetic corpora with ground truth
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Results never depend on the number of worker threads.

pub mod colorfield;
pub mod complexity;
pub mod corpus;
pub mod gravity;
pub mod imaging;
pub mod palette;
pub mod par;
pub mod seed;
pub mod stats;
pub mod synth;

pub use corpus::{AgeBin, DrawingRecord, GroupDimension, GroupKey};
pub use imaging::{GrayImage, Lab, LabImage, RasterImage};
