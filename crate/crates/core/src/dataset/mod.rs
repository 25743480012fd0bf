//! On-disk formats: HRIR archives, anthropometry tables and trained models.

mod anthropometry;
mod archive;
mod model_file;

pub use anthropometry::{
    measurement_index, AnthropometryTable, MEASUREMENTS, MEASUREMENT_NAMES, MEASUREMENT_UNITS,
};
pub use archive::{
    subject_file_name, validate_directions, Direction, Ear, Hemisphere, HrirArchive,
    ARCHIVE_FORMAT, ARCHIVE_VERSION, CIPIC_AZIMUTHS, EARS, MANIFEST_FILE,
};
pub use model_file::{decode_model, encode_model, load_model, save_model, TrainedModel, MODEL_MAGIC};

pub(crate) use archive::write_atomic;

/// Loads an archive from a directory or manifest path.
pub fn load_archive(path: impl AsRef<std::path::Path>) -> crate::Result<HrirArchive> {
    HrirArchive::load(path)
}

pub fn load_anthropometry(path: impl AsRef<std::path::Path>) -> crate::Result<AnthropometryTable> {
    AnthropometryTable::load(path)
}
