//! Core library for a text-to-video retrieval engine with a referring
//! segmentation ("explainability") subsystem.
//!
//! The indexing path is
//! [`preprocess::filter_blurry`] → [`preprocess::normalize_orientation`] →
//! [`embedding::Embedder::embed_frame`] → [`preprocess::group_similar`] →
//! [`index::VectorIndex::insert`] (bundled as [`pipeline::prepare_video`]);
//! queries go through
//! [`retrieval::run_query`]. Segmentation masks for a retrieved video come
//! from [`refseg::explain_video`].

pub mod catalog;
pub mod embedding;
pub mod image;
pub mod index;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod refseg;
pub mod retrieval;

pub use embedding::{unit_normalize, Embedder, EmbedderConfig, ProviderKind};
pub use image::GrayImage;
pub use index::{AnnParams, MetadataFilter, SearchHit, VectorIndex};
pub use model::{
    EmbeddingVector, FrameRecord, QueryResult, SegmentGroup, VideoAsset, VideoMetadata,
};
pub use preprocess::PreprocessConfig;
pub use retrieval::{Engine, QueryRequest, SearchMode};
