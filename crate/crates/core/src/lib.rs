//! Retrieval-augmented multiple-choice question answering over textbook
//! lessons.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod embedder;
pub mod eval;
pub mod generation;
pub mod http;
pub mod manifest;
pub mod promptgen;
pub mod retrieval;
pub mod stub;
pub mod synthetic;
pub mod vectorstore;
