//! Fixtures, end-to-end reconstruction runs, ablation suites and stage timing.

mod ablation;
mod fixtures;
mod run;

pub use ablation::{run_ablation_suite, write_ablation_csv, AblationRow, AblationSpec, Variant, ABLATION_HEADER};
pub use fixtures::{estimated_sign_dataset, gen_fixture, sign_heldout_accuracy, sign_heldout_shapes, sign_training_shapes, train_standard_sign_net};
pub use run::{reconstruct, run_reconstruct, time_stages, FieldSource, RunMetrics, RunRecord, RunSpec, SignMode, StageTimes};
