//! Test-time evaluation, confusion matrices, plots and the results bundle.

pub mod evaluation;
pub mod plots;
pub mod results;

pub use evaluation::{
    argmax_labels, auto_evaluate, confusion, probability_rows, ConfusionMatrix, EvaluationReport,
};
pub use plots::{render_confusion, render_curves, render_minmax};
pub use results::{build_results, ArtifactPaths, ResultsBundle};
