//! Dataset ingestion, encoding, splitting and report files.

pub mod encode;
pub mod report;
pub mod split;
pub mod table;

pub use encode::{encode, encode_with, fit_encoding, ColumnEncoding, EncodingMeta, TargetEncoding};
pub use report::{load_json, save_json, to_json_string, write_curves_csv, write_plot_data, write_report_dir};
pub use split::{split, split_indices, SplitIndices, SplitSpec};
pub use table::{load_csv, load_schema, read_csv, ColumnKind, RawTable, Schema};
