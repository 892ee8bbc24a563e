//! Pose-sequence prediction with a position-velocity recurrent
//! encoder-decoder, written from scratch on plain `Vec<f64>` numerics.
//!
//! The pieces, bottom up: [`linalg`] (row-major matrices), [`rotmath`]
//! (exponential map ↔ quaternion ↔ rotation matrix ↔ Euler angles, with
//! hand-derived Jacobians), [`posembed`] (sinusoidal temporal embeddings),
//! [`net`] (the gated recurrent cell, dropout, Adam — every gradient
//! derived by hand), [`data`] (synthetic motion, text codec, clip
//! sampling), [`model`] (encoder/decoder wiring, losses, backpropagation
//! through time, training), [`eval`] (horizon-error protocol and reference
//! baselines), and [`gradcheck`] (finite-difference harnesses over all of
//! the above).

use std::path::Path;

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod net;
pub mod posembed;
pub mod rotmath;

pub use data::{MotionSequence, SynthSpec};
pub use error::{Error, Result};
pub use eval::{EvalProtocol, HorizonTable, Predictor};
pub use linalg::Mat;
pub use model::{LossKind, ModelConfig, ModelFile, TrainConfig, Variant};
pub use net::ModelParams;

/// Write a whole file atomically: bytes land in a sibling temporary file
/// which is then renamed over the target, so a reader never sees a
/// half-written file. The parent directory must already exist.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| {
        Error::InvalidInput(format!("not a writable file path: {}", path.display()))
    })?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_writes_replace_existing_files_and_leave_no_droppings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        assert!(write_atomic(Path::new("/"), b"x").is_err());
    }
}
