//! Shape comparison and classification.
//!
//! Every subject is mapped from a common mean surface. Per mean-surface
//! vertex, the shape index combines the mean and Gaussian curvature
//! differences with the Teichmüller distance of the whole map. Vertices whose
//! index differs between the two classes (Welch's t-test) feed a bagged tree
//! classifier, and the weights are chosen by a grid search on the sphere.

mod bagging;
mod features;
mod mean;
mod pipeline;
mod search;
pub mod stats;

pub use bagging::{bagging_oob, OobResult, DEFAULT_TREES};
pub use features::{
    feature_curvatures, mask_at, p_values, shape_index, shape_terms, significant_vertices, FeatureComponents,
    FeatureMatrix, ShapeIndexParams, ShapeTerms,
};
pub use mean::{kabsch, maps_from, mean_surface, mean_surface_of, medoid, pairwise_distances, rect_params, MeanSurface, MAX_EXCLUDED_FRACTION};
pub use pipeline::{extract_features, run_pipeline, write_artifacts, Features, PipelineOptions, PipelineOutput};
pub use search::{
    classify, evaluate_direction, evaluate_params, sms_grid, sms_search, ClassRate, ClassificationReport, Evaluation,
    GridPoint, Prediction, SearchOptions, SearchResult, DEFAULT_P_CUTS, DEFAULT_RHO, RHO_RANGE,
};
