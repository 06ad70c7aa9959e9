//! Explanation-assisted image guessing.
//!
//! A player asks questions about a secret image hidden among similar ones, a
//! visual-question-answering backend answers and explains itself, and the
//! player guesses. This crate provides the game engine, the backend contract
//! with a scripted oracle and a noise wrapper, simulated players, the HTTP
//! service, and the analytics that evaluate whether explanations helped.
//!
//! | module | role |
//! |---|---|
//! | [`catalog`] | image pool, FC7 distances, difficulty-banded image sets |
//! | [`embeddings`] | word vectors and token-list similarity |
//! | [`explain`] | importance scores, related questions, explanation bundles |
//! | [`answerer`] | backend trait, scripted/noisy/remote backends |
//! | [`engine`] | game sessions, scoring, logs, worker block plans |
//! | [`simplayer`] | Bayesian bots and batch simulation |
//! | [`analytics`] | win rates, z-tests, report tables |
//! | [`service`] | HTTP API and session store |

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail range checks

pub mod analytics;
pub mod answerer;
pub mod catalog;
pub mod cli;
pub mod embeddings;
pub mod engine;
pub mod explain;
pub mod rng;
pub mod service;
pub mod simplayer;
pub mod text;
