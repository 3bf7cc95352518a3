//! Word-set aware preprocessing for synthetic tabular data.
//!
//! The pipeline reads a table with one word-set column (for example a
//! `skills` column), builds a tag-interleaved corpus, trains skip-gram
//! embeddings, clusters the words and encodes every word set as per-cluster
//! counts. The [`metrics`] module compares synthetic tables against the
//! source.

pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod encoders;
pub mod error;
pub mod metrics;
pub mod schema;

pub use cluster::{
    build_mapper, elbow_select_k, kmeans, kmeans_with, word_points, ClusterMapper, ClusterModel, Distance,
    KMeansConfig, Point,
};
pub use corpus::{build_tagged_corpus, unique_words, TaggedCorpus, Vocabulary};
pub use embed::{cosine, train_word2vec, EmbedConfig, EmbeddingModel};
pub use encoders::{
    decode, decode_cluster_counts, encode_cluster_counts, encode_multihot, encode_onehot_skillsets,
    ColumnDomain, EncodedLayout, EncodedTable, EncoderKind,
};
pub use error::{Error, Result};
pub use schema::{Column, ColumnKind, Dataset, Schema, Value, WordSet};
