pub mod aggregate;
pub mod decoder;
pub mod encoding;
pub mod knn;
pub mod scene;

pub use aggregate::{aggregate_features, local_summary, Aggregate, LocalSummary};
pub use decoder::{decode, DecoderMlp, RadianceSample};
pub use encoding::positional_encoding;
pub use knn::{knn, GridIndex, KnnResult};
pub use scene::{query_field, FieldConfig, FieldModel, FieldScene, PointInput, PosedGeometry, RadianceField};
