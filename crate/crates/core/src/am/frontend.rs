use std::io::{Read, Write};

use crate::binio;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frame stacking and skipping applied to filterbank features before the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontendConfig {
    pub feature_dim: usize,
    pub stack_size: usize,
    pub right_context: usize,
    pub skip: usize,
}

impl Default for FrontendConfig {
    /// 40-dim features, 8 stacked frames (7 of right context), every third presented.
    fn default() -> Self {
        Self {
            feature_dim: 40,
            stack_size: 8,
            right_context: 7,
            skip: 3,
        }
    }
}

impl FrontendConfig {
    pub fn new(feature_dim: usize, right_context: usize, skip: usize) -> Result<Self> {
        let cfg = Self {
            feature_dim,
            stack_size: right_context + 1,
            right_context,
            skip,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stack_size != self.right_context + 1 {
            return Err(Error::Config(format!(
                "stack size {} must equal right context {} + 1",
                self.stack_size, self.right_context
            )));
        }
        if self.skip == 0 || self.feature_dim == 0 {
            return Err(Error::Config("skip and feature dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Dimension of one stacked frame.
    pub fn stacked_dim(&self) -> usize {
        self.feature_dim * self.stack_size
    }

    /// Number of network steps for `frames` input frames: `ceil(frames / skip)`.
    pub fn num_steps(&self, frames: usize) -> usize {
        frames.div_ceil(self.skip)
    }
}

/// Stacks `stack_size` consecutive frames starting at every `skip`-th frame.
///
/// Frames past the end of the utterance are replaced by copies of the last frame.
pub fn stack_frames(features: &Matrix, cfg: &FrontendConfig) -> Result<Matrix> {
    cfg.validate()?;
    let frames = features.rows();
    if frames == 0 {
        return Err(Error::InvalidInput("no feature frames".into()));
    }
    if features.cols() != cfg.feature_dim {
        return Err(Error::Shape(format!(
            "features have {} dims, frontend expects {}",
            features.cols(),
            cfg.feature_dim
        )));
    }
    let steps = cfg.num_steps(frames);
    let dim = cfg.feature_dim;
    let mut out = Matrix::zeros(steps, cfg.stacked_dim());
    for m in 0..steps {
        let t = m * cfg.skip;
        let row = out.row_mut(m);
        for k in 0..cfg.stack_size {
            let src = (t + k).min(frames - 1);
            row[k * dim..(k + 1) * dim].copy_from_slice(features.row(src));
        }
    }
    Ok(out)
}

const FEATURE_MAGIC: &[u8; 4] = b"EFT1";

pub fn write_features(w: &mut impl Write, features: &Matrix) -> Result<()> {
    binio::write_header(w, FEATURE_MAGIC, 1)?;
    binio::write_u32(w, features.rows() as u32)?;
    binio::write_u32(w, features.cols() as u32)?;
    binio::write_f32s(w, features.as_slice())
}

pub fn read_features(r: &mut impl Read) -> Result<Matrix> {
    binio::expect_header(r, FEATURE_MAGIC, 1, "feature file")?;
    let rows = binio::read_u32(r)? as usize;
    let cols = binio::read_u32(r)? as usize;
    let data = binio::read_f32s(r, rows * cols)?;
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Feature matrix whose every element equals its frame index.
    fn indexed(frames: usize, dim: usize) -> Matrix {
        Matrix::from_fn(frames, dim, |r, _| r as f32)
    }

    fn stacked_indices(out: &Matrix, row: usize, cfg: &FrontendConfig) -> Vec<usize> {
        (0..cfg.stack_size)
            .map(|k| out.get(row, k * cfg.feature_dim) as usize)
            .collect()
    }

    #[test]
    fn single_frame_is_repeated() {
        let cfg = FrontendConfig::default();
        let out = stack_frames(&indexed(1, 40), &cfg).unwrap();
        assert_eq!(out.rows(), 1);
        assert_eq!(out.cols(), 320);
        assert_eq!(stacked_indices(&out, 0, &cfg), vec![0; 8]);
    }

    #[test]
    fn twenty_four_frames() {
        let cfg = FrontendConfig::default();
        let out = stack_frames(&indexed(24, 40), &cfg).unwrap();
        assert_eq!(out.rows(), 8);
        for m in 0..8 {
            let t = 3 * m;
            let expect: Vec<usize> = (t..t + 8).map(|i| i.min(23)).collect();
            assert_eq!(stacked_indices(&out, m, &cfg), expect);
        }
        // rows starting past frame 16 run off the end
        assert_eq!(stacked_indices(&out, 6, &cfg), vec![18, 19, 20, 21, 22, 23, 23, 23]);
        assert_eq!(stacked_indices(&out, 7, &cfg), vec![21, 22, 23, 23, 23, 23, 23, 23]);
    }

    #[test]
    fn three_frames() {
        let cfg = FrontendConfig::default();
        let out = stack_frames(&indexed(3, 40), &cfg).unwrap();
        assert_eq!(out.rows(), 1);
        assert_eq!(stacked_indices(&out, 0, &cfg), vec![0, 1, 2, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn step_count_is_ceiling() {
        let cfg = FrontendConfig::default();
        for frames in 1..50 {
            let out = stack_frames(&indexed(frames, 40), &cfg).unwrap();
            assert_eq!(out.rows(), frames.div_ceil(3));
        }
    }

    #[test]
    fn empty_and_misshaped_inputs() {
        let cfg = FrontendConfig::default();
        assert!(matches!(
            stack_frames(&Matrix::zeros(0, 40), &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            stack_frames(&Matrix::zeros(4, 39), &cfg),
            Err(Error::Shape(_))
        ));
        assert!(FrontendConfig::new(40, 7, 0).is_err());
    }

    #[test]
    fn feature_file_roundtrip() {
        let f = indexed(5, 3);
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"EFT1");
        assert_eq!(read_features(&mut buf.as_slice()).unwrap(), f);
    }
}
