//! Digitization engine for historical newspaper page scans.
//!
//! The crate turns detector and encoder outputs into structured article
//! records: layout post-processing ([`geometry`]), legibility gating
//! ([`legibility`]), retrieval-based word/character decoding
//! ([`recognition`]), dictionary tooling ([`lexicon`]), rule-based content
//! association ([`association`]) and batch orchestration ([`pipeline`]).
//! Evaluation metrics live in [`metrics`] and the contrastive-training
//! math used to build the recognizer lives in [`trainmath`].
//!
//! Neural models are consumed through the boundary traits in
//! [`recognition`], [`legibility`] and [`pipeline::boundary`]; the crate
//! never decodes raster images.

pub mod association;
pub mod domain;
mod error;
pub mod geometry;
pub mod legibility;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod recognition;
pub mod testkit;
pub mod trainmath;

pub use domain::{BoundingBox, ContentClass, ContentRegion, LegibilityClass, PageScan};
pub use error::{BoundaryError, Error, Result};
