//! Scene documents, images, checkpoints and training logs.

mod checkpoint;
mod image;
mod log;
mod obj;
mod scene_doc;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CheckpointState, CHECKPOINT_VERSION};
pub use image::{pfm_from_bytes, pfm_to_bytes, read_pfm, srgb_encode, write_png_preview, write_pfm};
pub use log::{read_log, LogWriter, LOG_HEADER};
pub use obj::parse_obj;
pub use scene_doc::{load_scene, parse_scene, CameraDoc, EmitterDoc, LoadedScene, MaterialDoc, MeshDoc, SceneDoc, TrainingDoc};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::field::FieldError;
use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {at}: {message}", path.display())]
    Invalid { path: PathBuf, at: String, message: String },
    #[error("{}: {source}", path.display())]
    Scene { path: PathBuf, source: SceneError },
    #[error("{}: {source}", path.display())]
    Field { path: PathBuf, source: FieldError },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, message: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_path_buf(), message: message.into() }
    }
}
