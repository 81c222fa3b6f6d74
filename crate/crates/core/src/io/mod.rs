//! Configuration text, the binary field format, and CSV reports.

mod config;
mod field_io;
mod report;

pub use config::{
    parse_config, parse_config_with_overrides, AnalysisSection, ConfigError, ConfigErrors, GridSection, OutputSection,
    RunConfig,
};
pub use field_io::{decode_field, encode_field, read_field, write_field, FORMAT_VERSION, MAGIC};
pub use report::{
    emit_report, read_summary, write_dipole_csv, write_slices, write_summary, write_timing, write_trace, RunOutputs,
    SummaryRow, SUMMARY_COLUMNS,
};
