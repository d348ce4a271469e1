//! Corpus ingestion: the six-column TSV format, label schemes, vocabularies
//! and pretrained embedding files.

mod corpus;
mod embeddings;
pub(crate) mod scheme;
mod vocab;

pub use corpus::{parse_corpus, parse_corpus_str, serialize_corpus, validate_heads, write_corpus, Sentence};
pub use embeddings::{embedding_matrix, init_row, load_embeddings, parse_embeddings, read_embedding_file, EmbeddingFile};
pub use scheme::{convert_label_scheme, detect_scheme, encode_spans, parse_spans, strict_spans, EntitySpan, LabelScheme};
pub use vocab::{build_vocab, Index, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
