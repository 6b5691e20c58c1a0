//! Market data ingestion, technical indicators, feature selection and
//! evaluation metrics.

pub mod features;
pub mod indicators;
pub mod market;
pub mod metrics;

pub use indicators::{build_feature_matrix, FeatureMatrix, IndicatorParams};
pub use market::{Bar, LabelSeries, PriceSeries, WindowSpec};
