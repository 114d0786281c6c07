//! Evaluation: dataset loading, chronological splits, window metrics,
//! the offline and online protocols, a synthetic stream generator, a
//! brute-force clustering oracle and a throughput/memory benchmark.

pub mod bench;
pub mod dataset;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod split;
pub mod synth;

pub use bench::{current_rss, run_bench, BenchError, BenchReport, RssSampler};
pub use dataset::{load_bgl, load_dataset, load_path, DatasetError, DatasetFormat, LabeledDataset, LabeledLine};
pub use metrics::{compute_metrics, MetricsError, MetricsReport};
pub use oracle::{run_oracle, OracleOutcome, OracleSummary};
pub use protocol::{run_floor, run_offline, run_online, EvalError, EvalSetup, OfflineReport, OnlineReport};
pub use split::{split_offline, split_online};
pub use synth::{generate_bgl_text, generate_dataset, write_bgl, SynthConfig, SynthStream};
