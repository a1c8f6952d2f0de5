//! Joint low-rank factorization of LSTM weights into shared projection layers.
//!
//! For each hidden layer the recurrent block (which reads the layer's own
//! output) and the inter-layer block (the next layer's input weights, or the
//! output layer for the last hidden layer) both consume the same
//! `n`-dimensional cell output. Stacking them and truncating the SVD gives a
//! rank-`r` projection `P = V_rᵀ` shared by both consumers, while the
//! row-slices of `U_r Σ_r` become the new weights that read the projection.

use nalgebra::linalg::SVD;
use nalgebra::DMatrix;

use crate::am::{AcousticModel, LstmLayer, OutputLayer, Weights};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const SVD_MAX_ITERATIONS: usize = 1_000_000;

/// Per-layer projection ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorizationPlan {
    pub ranks: Vec<usize>,
}

impl FactorizationPlan {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self { ranks }
    }

    /// Rank 100 for the first four layers and 200 for the fifth.
    pub fn reference() -> Self {
        Self::new(vec![100, 100, 100, 100, 200])
    }
}

/// Result of [`joint_factorize`].
#[derive(Debug, Clone)]
pub struct JointFactorization {
    /// `4n x r`, replaces the recurrent block.
    pub recurrent_factor: Matrix,
    /// `m x r`, replaces the inter-layer block.
    pub interlayer_factor: Matrix,
    /// `r x n`, the shared projection.
    pub projection: Matrix,
    /// All singular values of the stacked matrix, descending.
    pub singular_values: Vec<f64>,
}

impl JointFactorization {
    /// `Σ_{i>r} σ_i²`, the squared Frobenius error of the truncation.
    pub fn tail_energy(&self) -> f64 {
        let r = self.projection.rows();
        self.singular_values.iter().skip(r).map(|s| s * s).sum()
    }
}

fn to_dmatrix(blocks: &[&Matrix]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.rows()).sum();
    let cols = blocks[0].cols();
    let mut m = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        for r in 0..b.rows() {
            for c in 0..cols {
                m[(offset + r, c)] = b.get(r, c) as f64;
            }
        }
        offset += b.rows();
    }
    m
}

/// Rank-`rank` truncated SVD of the vertically stacked `[recurrent; interlayer]` blocks.
pub fn joint_factorize(recurrent: &Matrix, interlayer: &Matrix, rank: usize) -> Result<JointFactorization> {
    let n = recurrent.cols();
    if interlayer.cols() != n {
        return Err(Error::Shape(format!(
            "recurrent block reads {n} outputs but inter-layer block reads {}",
            interlayer.cols()
        )));
    }
    if rank == 0 || rank > n {
        return Err(Error::InvalidRank { rank, cells: n });
    }
    let stacked = to_dmatrix(&[recurrent, interlayer]);
    let svd = SVD::try_new(stacked, true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numeric("SVD returned no singular vectors".into())),
    };
    let sigma = svd.singular_values;
    let k = sigma.len();
    let singular_values: Vec<f64> = sigma.iter().copied().collect();

    // U_r Σ_r, zero-padded when the stack has fewer rows than the rank.
    let factor = |row: usize, c: usize| -> f32 {
        if c < k {
            (u[(row, c)] * sigma[c]) as f32
        } else {
            0.0
        }
    };
    let rec_rows = recurrent.rows();
    let recurrent_factor = Matrix::from_fn(rec_rows, rank, &factor);
    let interlayer_factor = Matrix::from_fn(interlayer.rows(), rank, |r, c| factor(rec_rows + r, c));
    let projection = Matrix::from_fn(rank, n, |r, c| if r < k { v_t[(r, c)] as f32 } else { 0.0 });
    Ok(JointFactorization {
        recurrent_factor,
        interlayer_factor,
        projection,
        singular_values,
    })
}

fn float_weights(w: &Weights) -> Result<&Matrix> {
    match w {
        Weights::Float(m) => Ok(m),
        Weights::Quantized(_) => Err(Error::InvalidInput(
            "compress the float model before quantizing it".into(),
        )),
    }
}

/// Replaces every hidden layer's output with a shared low-rank projection.
///
/// The input must be an unprojected float model. Layers are factorized
/// independently (in parallel) from the original weights.
pub fn compress_model(model: &AcousticModel, plan: &FactorizationPlan) -> Result<AcousticModel> {
    let layers = model.layers();
    if plan.ranks.len() != layers.len() {
        return Err(Error::Plan {
            plan: plan.ranks.len(),
            layers: layers.len(),
        });
    }
    for (layer, &rank) in layers.iter().zip(&plan.ranks) {
        if layer.projection().is_some() {
            return Err(Error::InvalidInput("model already has projection layers".into()));
        }
        if rank == 0 || rank > layer.cells() {
            return Err(Error::InvalidRank {
                rank,
                cells: layer.cells(),
            });
        }
    }

    // (recurrent block, inter-layer block) per layer, both n columns wide.
    let mut blocks = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let gates = float_weights(layer.gates())?;
        let recurrent = gates.columns(layer.input_dim(), gates.cols());
        let interlayer = match layers.get(l + 1) {
            Some(next) => float_weights(next.gates())?.columns(0, next.input_dim()),
            None => float_weights(model.output().weights())?.clone(),
        };
        blocks.push((recurrent, interlayer));
    }

    let factors: Vec<Result<JointFactorization>> = std::thread::scope(|s| {
        let handles: Vec<_> = blocks
            .iter()
            .zip(&plan.ranks)
            .map(|((rec, inter), &rank)| s.spawn(move || joint_factorize(rec, inter, rank)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numeric("factorization thread panicked".into()))))
            .collect()
    });
    let factors = factors.into_iter().collect::<Result<Vec<_>>>()?;

    let mut new_layers = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let input_block = if l == 0 {
            float_weights(layer.gates())?.columns(0, layer.input_dim())
        } else {
            factors[l - 1].interlayer_factor.clone()
        };
        let gates = input_block.hstack(&factors[l].recurrent_factor)?;
        new_layers.push(LstmLayer::new(
            input_block.cols(),
            layer.cells(),
            Weights::Float(gates),
            layer.bias.clone(),
            layer.peephole.clone(),
            Some(Weights::Float(factors[l].projection.clone())),
        )?);
    }
    let last = factors.last().expect("at least one layer");
    let output = OutputLayer::new(Weights::Float(last.interlayer_factor.clone()), model.output().bias.clone())?;
    AcousticModel::new(*model.frontend(), new_layers, output)
}
