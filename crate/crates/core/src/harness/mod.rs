//! Deterministic training runs, evaluation, metrics and sweeps.

mod config;
mod metrics;
mod run;
mod store;
mod sweep;

pub use config::{
    default_total_steps, AgentConfig, Algo, RunConfig, CODE_VERSION, DEFAULT_EVAL_EPISODES, DEFAULT_EVAL_EVERY,
};
pub use metrics::{
    gaussian_kernel, gaussian_smooth, max_avg_return, max_of_mean_curve, max_per_seed_mean, mean_curve, median,
    EvalRecord,
};
pub use run::{check_dims, evaluate, evaluate_run, random_action, run_training, RunOutcome};
pub use store::{
    eval_header, eval_row, find_run_dirs, load_run, read_config, read_eval_csv, read_summary, write_atomic,
    write_config, ConfigEcho, CsvLog, RunData, RunSummary, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE, SUMMARY_FILE,
    TRAIN_FILE,
};
pub use sweep::{cell_seed, is_complete, run_all, CellStatus, Overrides, SweepSpec};
