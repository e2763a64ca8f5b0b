//! Dictionaries, greedy pursuit and KSVD dictionary learning.

mod dictionary;
mod ksvd;
mod omp;

pub use dictionary::{
    Dictionary, DictionaryFile, SparseCode, DICTIONARY_FORMAT, DICTIONARY_VERSION,
};
pub use ksvd::{
    dictionary_update, ksvd_train, objective, update_atom, AtomInit, KsvdResult, TrainConfig,
};
pub use omp::{batch_omp, batch_omp_codes, omp, GramCache};
