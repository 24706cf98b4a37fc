//! Loading delimited files, analysis configuration, encoding into a
//! [`Dataset`](crate::Dataset), and backward stepwise covariate selection.

mod config;
mod encode;
mod stepwise;
mod table;

pub use config::{
    AnalysisConfig, Criterion, DerivedColumn, PropensitySettings, StepwiseSettings, TargetConfig, Transform,
    ZoneSpec,
};
pub use encode::{encode, Encoded};
pub use stepwise::{stepwise_select, StepwiseResult, StepwiseStep};
pub use table::{delimiter_for, load_table, load_table_with, RawColumn, RawTable};
