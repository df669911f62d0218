//! The user guide, mounted as rustdoc modules so every code block in it
//! compiles and runs as a doc-test. The rendered version lives in `book/`
//! (mdbook format); this keeps the two from drifting apart.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/engines.md")]
pub mod engines {}

#[doc = include_str!("../../../book/src/operators.md")]
pub mod operators {}

#[doc = include_str!("../../../book/src/tasks-and-metrics.md")]
pub mod tasks_and_metrics {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
