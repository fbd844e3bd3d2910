//! Two-step generation: sample a cluster-id level, then translate it back
//! to tile embeddings and render.

pub mod grid;
pub mod sequence;
pub mod translate;

pub use grid::{delinearize, linearize, ClusterGrid, ScanOrder, Vocab};
pub use sequence::{
    greedy_rollout, sample_level, train_sequence_model, unigram_perplexity, GenerationSeed, SequenceCorpus, SequenceEval, SequenceMode, SequenceModel,
    SequenceModelConfig, SequenceReport,
};
pub use translate::{
    discretize, render_level, train_translator, translate_level, translate_level_raw, ClusterMemberIndex, IndexedLevel, Member, RenderedLevel, Translator,
    TranslatorConfig, TranslatorReport,
};
