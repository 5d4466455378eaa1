//! Fact-aware retrieval for clinical reports.
//!
//! The crate mines factually similar report pairs from entity/relation
//! annotations, trains a contrastive projection retriever on them, and
//! evaluates what it retrieves. It is `no_std` with `alloc`; file formats,
//! parallel drivers and the command line live in the `factmine` crate.
//!
//! Pipeline order: [`corpus`] → [`mining`] → [`train`] → [`index`] →
//! [`eval`] / [`rag`].

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod metrics;
pub mod mining;
pub mod rag;
pub mod synth;
pub mod train;

pub use corpus::{
    normalize_entity, Corpus, Entity, EntityLabel, FactGraph, FeatureDims, LabelVector, Relation, RelationType,
    ReportRecord, Split,
};
pub use encoder::{contrastive_loss, encode_doc, encode_query, relevance, DocFeatures, EncoderParams, Gradients};
pub use error::{Error, Result};
pub use eval::{
    eval_retrieval, judge_relevance, mrr, oracle_retrieve, retrieve, RankedList, RelevanceJudgment, RetrievalRun,
    RunProvenance,
};
pub use index::{build_index, search, search_batch, EmbeddingIndex, ExclusionPolicy, Hit, QueryIdentity};
pub use metrics::{
    chexbert_instance, chexbert_micro, fact_items, factual_similarity, rouge_l, CorpusScore, InstanceScore,
};
pub use mining::{mine_pairs, threshold_sweep, MiningConfig, PairSet};
pub use rag::{build_rag_dataset, RagDataset, RagExample, RagMode};
pub use synth::{synth_corpus, SynthParams, SynthVocab};
pub use train::{train, TrainConfig, TrainLog, TrainOutcome};
