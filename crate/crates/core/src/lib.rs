//! Object-centric 3D scene-language pipeline.
//!
//! A scene is a set of segmented object proposals plus the calibrated camera
//! views it was captured from. The crate covers every deterministic stage
//! between those inputs and a language model:
//!
//! - [`model`]: proposals, identifier tokens, axis-aligned boxes and IoU.
//! - [`projection`]: pinhole projection, key-object selection, label anchors,
//!   size-weighted multi-view feature aggregation.
//! - [`describe`]: per-view planning of relational description requests with
//!   cross-view deduplication, the describer prompt, execution against a
//!   backend and a geometric mock describer.
//! - [`text_encoding`]: description embeddings (hashed trigram mock or
//!   precomputed vectors).
//! - [`fusion`]: projection heads, per-object token blocks, scene token
//!   serialization and the response-token cross-entropy objective.
//! - [`prompt`]: referenced-object detection, reference-style rewriting and
//!   dialogue prompt assembly.
//! - [`metrics`]: grounding accuracy, multi-target F1, BLEU, ROUGE-L,
//!   METEOR, CIDEr, IoU-gated captioning and EM / EM-R.
//! - [`backends`]: OpenAI-compatible chat-completion clients and mocks.
//! - [`io`]: scene, embedding, JSONL and results file formats.
//! - [`pipeline`]: the stages chained together, used by the `relscene` CLI.

pub mod backends;
pub mod config;
pub mod describe;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod projection;
pub mod prompt;
pub mod text_encoding;
pub mod toy;

pub use error::{Error, Result};
pub use model::{Aabb, ObjectProposal, Point, Scene};
pub use projection::CameraView;
