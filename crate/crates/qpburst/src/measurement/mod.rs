//! Synthetic measurement records: transition/confusion matrices, sequence
//! propagators, per-shot simulation, heralding and Ramsey groups.

pub mod herald;
pub mod matrix;
pub mod ramsey;
pub mod record;
pub mod sequence;
pub mod shots;

pub use herald::{herald_all, herald_bits, herald_errors, HeraldSeries};
pub use matrix::{is_stochastic, transition_matrix, x_pi, ConfusionMatrix, Mat2, TransitionMatrixParams, Vec2};
pub use ramsey::{simulate_ramsey, FrequencyTrajectory, RamseyConfig};
pub use record::{read_triggers_csv, write_triggers_csv, RecordHeader, RecordKind, ShotRecord, Trigger};
pub use sequence::{sequence_matrix, steady_measured_excited, step_sequence, Propagators, SequenceKind, SequenceTiming};
pub use shots::{burst_times, simulate_burst_stream, simulate_shots, trigger_times, BurstStreamConfig, RateTrajectory, ShotConfig, TriggerMode};
