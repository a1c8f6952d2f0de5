use std::io::{Read, Write};

use rand::Rng;

use super::frontend::FrontendConfig;
use crate::binio;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quant::{quantize_tensor, IntOperand, QuantizedTensor};

const MAGIC: &[u8; 4] = b"EAM1";
const VERSION: u16 = 1;

/// 41 context-independent phones plus blank.
pub const DEFAULT_TARGETS: usize = 42;

/// A weight matrix in either float or 8-bit form.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Float(Matrix),
    Quantized(QuantizedWeights),
}

/// Quantized tensor plus its offset-corrected integer operand.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeights {
    tensor: QuantizedTensor,
    operand: IntOperand,
}

impl QuantizedWeights {
    pub fn new(tensor: QuantizedTensor) -> Result<Self> {
        let operand = IntOperand::from_tensor(&tensor)?;
        Ok(Self { tensor, operand })
    }

    pub fn tensor(&self) -> &QuantizedTensor {
        &self.tensor
    }

    pub fn operand(&self) -> &IntOperand {
        &self.operand
    }
}

impl Weights {
    pub fn rows(&self) -> usize {
        match self {
            Weights::Float(m) => m.rows(),
            Weights::Quantized(q) => q.tensor.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Weights::Float(m) => m.cols(),
            Weights::Quantized(q) => q.tensor.cols(),
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Weights::Quantized(_))
    }

    /// Float view; dequantizes 8-bit weights.
    pub fn to_float(&self) -> Matrix {
        match self {
            Weights::Float(m) => m.clone(),
            Weights::Quantized(q) => q.tensor.dequantize(),
        }
    }

    pub fn quantized(&self) -> Result<Weights> {
        match self {
            Weights::Float(m) => Ok(Weights::Quantized(QuantizedWeights::new(quantize_tensor(m)?)?)),
            Weights::Quantized(_) => Ok(self.clone()),
        }
    }

    fn serialized_len(&self) -> usize {
        match self {
            Weights::Float(m) => 8 + 4 * m.as_slice().len(),
            Weights::Quantized(q) => q.tensor.serialized_len(),
        }
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        match self {
            Weights::Float(m) => {
                binio::write_u32(w, m.rows() as u32)?;
                binio::write_u32(w, m.cols() as u32)?;
                binio::write_f32s(w, m.as_slice())
            }
            Weights::Quantized(q) => q.tensor.write_to(w),
        }
    }

    fn read_from(r: &mut impl Read, quantized: bool) -> Result<Self> {
        if quantized {
            Ok(Weights::Quantized(QuantizedWeights::new(QuantizedTensor::read_from(r)?)?))
        } else {
            let rows = binio::read_u32(r)? as usize;
            let cols = binio::read_u32(r)? as usize;
            Ok(Weights::Float(Matrix::from_vec(rows, cols, binio::read_f32s(r, rows * cols)?)?))
        }
    }
}

/// One LSTM layer with peepholes and an optional linear recurrent projection.
///
/// Gate rows are ordered input, forget, cell, output; columns are the layer
/// input followed by the recurrent input. Peepholes are ordered input,
/// forget, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub(crate) input_dim: usize,
    pub(crate) cells: usize,
    pub(crate) gates: Weights,
    pub(crate) bias: Vec<f32>,
    pub(crate) peephole: Vec<f32>,
    pub(crate) projection: Option<Weights>,
}

impl LstmLayer {
    pub fn new(
        input_dim: usize,
        cells: usize,
        gates: Weights,
        bias: Vec<f32>,
        peephole: Vec<f32>,
        projection: Option<Weights>,
    ) -> Result<Self> {
        let layer = Self {
            input_dim,
            cells,
            gates,
            bias,
            peephole,
            projection,
        };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<()> {
        let n = self.cells;
        if n == 0 {
            return Err(Error::Shape("layer has no cells".into()));
        }
        if let Some(p) = &self.projection {
            if p.cols() != n || p.rows() == 0 {
                return Err(Error::Shape(format!(
                    "projection is {}x{}, expected rx{n}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        let want_cols = self.input_dim + self.recur_dim();
        if self.gates.rows() != 4 * n || self.gates.cols() != want_cols {
            return Err(Error::Shape(format!(
                "gate weights are {}x{}, expected {}x{want_cols}",
                self.gates.rows(),
                self.gates.cols(),
                4 * n
            )));
        }
        if self.bias.len() != 4 * n || self.peephole.len() != 3 * n {
            return Err(Error::Shape(format!(
                "bias/peephole lengths {}/{} for {n} cells",
                self.bias.len(),
                self.peephole.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn projection_rank(&self) -> Option<usize> {
        self.projection.as_ref().map(Weights::rows)
    }

    /// Dimension of the layer output, which is also its recurrent input.
    pub fn recur_dim(&self) -> usize {
        self.projection_rank().unwrap_or(self.cells)
    }

    pub fn gates(&self) -> &Weights {
        &self.gates
    }

    pub fn projection(&self) -> Option<&Weights> {
        self.projection.as_ref()
    }

    pub fn param_count(&self) -> usize {
        let n = self.cells;
        4 * n * (self.input_dim + self.recur_dim()) + 4 * n + 3 * n + self.projection_rank().map_or(0, |r| r * n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer {
    pub(crate) weights: Weights,
    pub(crate) bias: Vec<f32>,
}

impl OutputLayer {
    pub fn new(weights: Weights, bias: Vec<f32>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "output bias has {} entries for {} targets",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn num_targets(&self) -> usize {
        self.weights.rows()
    }
}

/// Shape of one hidden layer: cell count and optional projection rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub cells: usize,
    pub projection: Option<usize>,
}

/// Layer stack description used to build models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub frontend: FrontendConfig,
    pub layers: Vec<LayerShape>,
    pub num_targets: usize,
}

impl Topology {
    /// Five unprojected layers of 500 cells over 42 targets.
    pub fn reference() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            layers: vec![
                LayerShape {
                    cells: 500,
                    projection: None
                };
                5
            ],
            num_targets: DEFAULT_TARGETS,
        }
    }

    /// Reference stack with projections of rank 100, 100, 100, 100, 200.
    pub fn reference_compressed() -> Self {
        let mut t = Self::reference();
        for (layer, rank) in t.layers.iter_mut().zip([100, 100, 100, 100, 200]) {
            layer.projection = Some(rank);
        }
        t
    }

    pub fn param_count(&self) -> usize {
        let mut input = self.frontend.stacked_dim();
        let mut total = 0;
        for l in &self.layers {
            let n = l.cells;
            let recur = l.projection.unwrap_or(n);
            total += 4 * n * (input + recur) + 7 * n + l.projection.map_or(0, |r| r * n);
            input = recur;
        }
        total + self.num_targets * input + self.num_targets
    }
}

/// Stack of LSTMP layers followed by an affine softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub(crate) frontend: FrontendConfig,
    pub(crate) blank: usize,
    pub(crate) layers: Vec<LstmLayer>,
    pub(crate) output: OutputLayer,
}

impl AcousticModel {
    pub fn new(frontend: FrontendConfig, layers: Vec<LstmLayer>, output: OutputLayer) -> Result<Self> {
        let model = Self {
            frontend,
            blank: 0,
            layers,
            output,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        if self.layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        let mut dim = self.layers[0].input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.input_dim != dim {
                return Err(Error::Shape(format!(
                    "layer {i} expects input {}, previous layer gives {dim}",
                    l.input_dim
                )));
            }
            dim = l.recur_dim();
        }
        if self.output.weights.cols() != dim {
            return Err(Error::Shape(format!(
                "output layer expects input {}, last layer gives {dim}",
                self.output.weights.cols()
            )));
        }
        if self.output.num_targets() < 2 {
            return Err(Error::Shape("need at least two targets".into()));
        }
        if self.blank >= self.output.num_targets() {
            return Err(Error::Shape(format!("blank index {} out of range", self.blank)));
        }
        let quantized = self.output.weights.is_quantized();
        let consistent = self.layers.iter().all(|l| {
            l.gates.is_quantized() == quantized
                && l.projection.as_ref().is_none_or(|p| p.is_quantized() == quantized)
        });
        if !consistent {
            return Err(Error::InvalidInput("model mixes float and quantized weights".into()));
        }
        Ok(())
    }

    /// Model with all weights drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(topology: &Topology, scale: f32, rng: &mut R) -> Result<Self> {
        Self::from_fn(topology, |_| rng.random_range(-scale..=scale))
    }

    pub fn zeros(topology: &Topology) -> Result<Self> {
        Self::from_fn(topology, |_| 0.0)
    }

    fn from_fn(topology: &Topology, mut f: impl FnMut(usize) -> f32) -> Result<Self> {
        let mut mat = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| f(0));
        let mut layers = Vec::with_capacity(topology.layers.len());
        let mut input = topology.frontend.stacked_dim();
        for shape in &topology.layers {
            let n = shape.cells;
            let recur = shape.projection.unwrap_or(n);
            let gates = Weights::Float(mat(4 * n, input + recur));
            let bias = mat(1, 4 * n).into_vec();
            let peephole = mat(1, 3 * n).into_vec();
            let projection = shape.projection.map(|r| Weights::Float(mat(r, n)));
            layers.push(LstmLayer::new(input, n, gates, bias, peephole, projection)?);
            input = recur;
        }
        let output = OutputLayer::new(
            Weights::Float(mat(topology.num_targets, input)),
            mat(1, topology.num_targets).into_vec(),
        )?;
        Self::new(topology.frontend, layers, output)
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    pub fn output(&self) -> &OutputLayer {
        &self.output
    }

    pub fn num_targets(&self) -> usize {
        self.output.num_targets()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn is_quantized(&self) -> bool {
        self.output.weights.is_quantized()
    }

    pub fn topology(&self) -> Topology {
        Topology {
            frontend: self.frontend,
            layers: self
                .layers
                .iter()
                .map(|l| LayerShape {
                    cells: l.cells,
                    projection: l.projection_rank(),
                })
                .collect(),
            num_targets: self.num_targets(),
        }
    }

    /// Quantizes every weight matrix to 8 bits; biases and peepholes stay real.
    pub fn quantize(&self) -> Result<AcousticModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(LstmLayer {
                    gates: l.gates.quantized()?,
                    projection: l.projection.as_ref().map(Weights::quantized).transpose()?,
                    ..l.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let output = OutputLayer {
            weights: self.output.weights.quantized()?,
            bias: self.output.bias.clone(),
        };
        Ok(AcousticModel {
            layers,
            output,
            ..self.clone()
        })
    }

    /// Float model with every quantized matrix recovered.
    pub fn dequantize(&self) -> AcousticModel {
        let layers = self
            .layers
            .iter()
            .map(|l| LstmLayer {
                gates: Weights::Float(l.gates.to_float()),
                projection: l.projection.as_ref().map(|p| Weights::Float(p.to_float())),
                ..l.clone()
            })
            .collect();
        AcousticModel {
            layers,
            output: OutputLayer {
                weights: Weights::Float(self.output.weights.to_float()),
                bias: self.output.bias.clone(),
            },
            ..self.clone()
        }
    }

    pub fn serialized_len(&self) -> usize {
        // magic, version, flag, blank, frontend, targets, layer count
        let mut len = 4 + 2 + 1 + 2 + 16 + 4 + 4;
        for l in &self.layers {
            len += 12 + l.gates.serialized_len() + 4 * (l.bias.len() + l.peephole.len());
            len += l.projection.as_ref().map_or(0, Weights::serialized_len);
        }
        len + self.output.weights.serialized_len() + 4 * self.output.bias.len()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_magic(w, MAGIC)?;
        binio::write_u16(w, VERSION)?;
        binio::write_u8(w, self.is_quantized() as u8)?;
        binio::write_u16(w, self.blank as u16)?;
        let f = &self.frontend;
        for v in [f.feature_dim, f.stack_size, f.right_context, f.skip] {
            binio::write_u32(w, v as u32)?;
        }
        binio::write_u32(w, self.num_targets() as u32)?;
        binio::write_u32(w, self.layers.len() as u32)?;
        for l in &self.layers {
            binio::write_u32(w, l.input_dim as u32)?;
            binio::write_u32(w, l.cells as u32)?;
            binio::write_u32(w, l.projection_rank().unwrap_or(0) as u32)?;
            l.gates.write_to(w)?;
            binio::write_f32s(w, &l.bias)?;
            binio::write_f32s(w, &l.peephole)?;
            if let Some(p) = &l.projection {
                p.write_to(w)?;
            }
        }
        self.output.weights.write_to(w)?;
        binio::write_f32s(w, &self.output.bias)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, MAGIC, "acoustic model")?;
        let version = binio::read_u16(r)?;
        if version != VERSION {
            return Err(Error::format(format!("acoustic model: unsupported version {version}")));
        }
        let quantized = match binio::read_u8(r)? {
            0 => false,
            1 => true,
            other => return Err(Error::format(format!("acoustic model: bad quantized flag {other}"))),
        };
        let blank = binio::read_u16(r)? as usize;
        let feature_dim = binio::read_u32(r)? as usize;
        let stack_size = binio::read_u32(r)? as usize;
        let right_context = binio::read_u32(r)? as usize;
        let skip = binio::read_u32(r)? as usize;
        let frontend = FrontendConfig {
            feature_dim,
            stack_size,
            right_context,
            skip,
        };
        let num_targets = binio::read_u32(r)? as usize;
        let num_layers = binio::read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let input_dim = binio::read_u32(r)? as usize;
            let cells = binio::read_u32(r)? as usize;
            let rank = binio::read_u32(r)? as usize;
            let gates = Weights::read_from(r, quantized)?;
            let bias = binio::read_f32s(r, 4 * cells)?;
            let peephole = binio::read_f32s(r, 3 * cells)?;
            let projection = if rank > 0 {
                Some(Weights::read_from(r, quantized)?)
            } else {
                None
            };
            layers.push(LstmLayer::new(input_dim, cells, gates, bias, peephole, projection)?);
        }
        let weights = Weights::read_from(r, quantized)?;
        if weights.rows() != num_targets {
            return Err(Error::format("acoustic model: output rows disagree with target count"));
        }
        let bias = binio::read_f32s(r, num_targets)?;
        let model = AcousticModel {
            frontend,
            blank,
            layers,
            output: OutputLayer::new(weights, bias)?,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Number of logical parameters; identical for float and quantized models.
pub fn count_parameters(model: &AcousticModel) -> usize {
    model.layers.iter().map(LstmLayer::param_count).sum::<usize>()
        + model.output.weights.rows() * model.output.weights.cols()
        + model.output.bias.len()
}
