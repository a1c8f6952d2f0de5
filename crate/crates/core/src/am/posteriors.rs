use std::io::{Read, Write};

use crate::binio;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EPG1";

/// Per-step posterior distributions over acoustic targets (blank at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    num_steps: usize,
    num_targets: usize,
    data: Vec<f32>,
}

impl Posteriorgram {
    pub fn new(num_steps: usize, num_targets: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != num_steps * num_targets {
            return Err(Error::Shape(format!(
                "{} values for {num_steps} steps of {num_targets} targets",
                data.len()
            )));
        }
        if num_targets < 2 {
            return Err(Error::InvalidInput("need at least blank plus one target".into()));
        }
        Ok(Self {
            num_steps,
            num_targets,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let num_targets = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_targets) {
            return Err(Error::Shape("ragged posterior rows".into()));
        }
        Self::new(rows.len(), num_targets, rows.concat())
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn row(&self, step: usize) -> &[f32] {
        &self.data[step * self.num_targets..(step + 1) * self.num_targets]
    }

    pub fn get(&self, step: usize, target: usize) -> f32 {
        self.data[step * self.num_targets + target]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.num_steps)
            .map(|t| (self.row(t).iter().map(|&p| p as f64).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_header(w, MAGIC, 1)?;
        binio::write_u32(w, self.num_steps as u32)?;
        binio::write_u32(w, self.num_targets as u32)?;
        binio::write_f32s(w, &self.data)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_header(r, MAGIC, 1, "posteriorgram")?;
        let steps = binio::read_u32(r)? as usize;
        let targets = binio::read_u32(r)? as usize;
        let data = binio::read_f32s(r, steps * targets)?;
        Self::new(steps, targets, data)
    }
}
