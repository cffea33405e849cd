//! Sampling programs as helper functions, clustering those helpers and
//! feeding representative ones back into later sampling rounds.

pub mod chain;
pub mod cluster;
pub mod eval;
pub mod exec;
pub mod extract;
pub mod hashing;
pub mod llm;
pub mod prompt;
pub mod task;

pub use extract::{CandidateSolution, ParseStatus, SubModule};
pub use prompt::{FeedbackItem, OneShot, RenderedPrompt, TemplateName, TemplateSet};
pub use task::{Dataset, Difficulty, IoMode, Split, Task, TestCase};
