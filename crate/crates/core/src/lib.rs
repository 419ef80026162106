//! Workflow service for community eye screening: participant registry,
//! questionnaire, retinal image grading, result letters, follow-up tracking,
//! data export and cohort analytics.

pub mod access;
pub mod analytics;
pub mod api;
pub mod config;
pub mod domain;
pub mod error;
pub mod grading;
pub mod ids;
pub mod reporting;
pub mod service;
pub mod storage;
pub mod survey;

pub use error::{Error, Result};
