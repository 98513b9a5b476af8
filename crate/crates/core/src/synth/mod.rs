//! Synthetic polarized face scenes with known ground truth.

mod dataset;
mod field;
mod profile;

pub use dataset::{
    generate_dataset, train_count, Channel, DatasetManifest, ManifestRecord, SampleFiles, Split,
    MANIFEST_FILE,
};
pub use field::{
    make_field, malus, render_angle_images, value_noise, FaceEllipse, PolarizationField,
    BACKGROUND_ALBEDO,
};
pub use profile::{Label, MaterialProfile, ProfilePack, ThetaMode};
