//! Local regression models that reconstruct OPF setpoints from the nodal
//! voltage, one P and one Q model per DER and operating point.

pub mod bucket;
pub mod fit;
pub mod model;
pub mod nnr;
pub mod store;

pub use bucket::{BucketEntry, BucketSet, IngestOutcome, Origin, TrainingBucket, DEFAULT_CAPACITY};
pub use fit::{fit_auto, fit_linear, fit_piecewise};
pub use model::{Channel, RegressionModel, TrainingSample};
pub use nnr::fit_nnr;
pub use store::{buckets_from_sweep, train_from_sweep, LearnerConfig, LearnerKind, ModelEntry, ModelStore, RegressionModelSet};
