//! Command-line harness for the `shelab` experiments: JSON configs in,
//! reproducible CSV / JSON records out.

pub mod config;
pub mod error;
pub mod record;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use error::CliError;
pub use record::{emit_plot_data, write_outputs, ResultRecord, Table, View};
pub use run::run;
