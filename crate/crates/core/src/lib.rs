//! Few-shot adaptation of web agents on synthetic websites.
//!
//! - [`webenv`]: deterministic site state machines, tasks and oracle paths;
//! - [`domkit`]: element descriptors, candidate ranking and featurization;
//! - [`layout`]: box layouts with numeric marks, the visual channel;
//! - [`policy`]: a small MLP policy with hand-written gradients;
//! - [`metatrain`]: first-order MAML, task selection and fine-tuning baselines;
//! - [`icl`]: demonstration prompts, agent clients and response parsing;
//! - [`evalkit`]: metrics, split amendment, stratification and the protocol;
//! - [`demostore`]: canonical demonstration files.

pub mod text;
pub mod webenv;
pub mod domkit;
pub mod layout;
pub mod observation;
pub mod policy;
pub mod demostore;
pub mod metatrain;
pub mod icl;
pub mod evalkit;
pub mod experiments;
