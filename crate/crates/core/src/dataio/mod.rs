//! Tabular data: loading, encoding, splitting and resampling.

mod arff;
mod csv;
mod dataset;
mod encode;
mod manifest;
mod resample;
mod split;

pub use arff::{arff_to_csv, parse_arff_row, read_arff_header, ArffAttribute, ArffHeader, ArffType};
pub use self::csv::{load_csv, load_csv_reader, ColumnKind, ColumnSpec, LoadedCsv, TargetKindSpec, TargetSpec};
pub use dataset::{Dataset, FeatureKind, FeatureMeta, Targets};
pub use encode::{min_max_scale, one_hot_encode, MinMax};
pub use manifest::{Manifest, PreparedDataset, Task};
pub use resample::{oversample, undersample};
pub use split::{split, strip_labels, LabelSplit, Proportions, SplitSpec, Splits};
