use super::model::{AcousticModel, LstmLayer, Weights};
use super::posteriors::Posteriorgram;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quant::IntOperand;

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Applies `w` to `x`, quantizing `x` into `scratch` first when `w` is 8-bit.
fn apply(w: &Weights, x: &[f32], scratch: &mut IntOperand, out: &mut [f32]) -> Result<()> {
    match w {
        Weights::Float(m) => {
            m.matvec_into(x, out);
            Ok(())
        }
        Weights::Quantized(q) => {
            scratch.quantize_from(x)?;
            q.operand().matvec_into(scratch, out)
        }
    }
}

struct LayerState {
    cell: Vec<f32>,
    /// Layer input followed by the previous recurrent output.
    joint: Vec<f32>,
    gates: Vec<f32>,
    hidden: Vec<f32>,
    joint_q: IntOperand,
    hidden_q: IntOperand,
}

impl LayerState {
    fn new(layer: &LstmLayer) -> Self {
        let n = layer.cells();
        let joint = layer.input_dim() + layer.recur_dim();
        Self {
            cell: vec![0.0; n],
            joint: vec![0.0; joint],
            gates: vec![0.0; 4 * n],
            hidden: vec![0.0; n],
            joint_q: IntOperand::vector(joint),
            hidden_q: IntOperand::vector(n),
        }
    }

    fn output<'a>(&'a self, layer: &LstmLayer) -> &'a [f32] {
        &self.joint[layer.input_dim()..]
    }
}

/// Mutable per-utterance state; the model itself is shared read-only.
pub struct InferenceSession<'m> {
    model: &'m AcousticModel,
    states: Vec<LayerState>,
    logits: Vec<f32>,
    out_q: IntOperand,
}

impl<'m> InferenceSession<'m> {
    pub fn new(model: &'m AcousticModel) -> Self {
        let states = model.layers().iter().map(LayerState::new).collect();
        let last = model.layers().last().map_or(0, LstmLayer::recur_dim);
        Self {
            model,
            states,
            logits: vec![0.0; model.num_targets()],
            out_q: IntOperand::vector(last),
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.states {
            s.cell.fill(0.0);
            s.joint.fill(0.0);
        }
    }

    /// Advances one step on a stacked input frame, writing posteriors to `out`.
    pub fn step(&mut self, input: &[f32], out: &mut [f32]) -> Result<()> {
        let model = self.model;
        if input.len() != model.input_dim() {
            return Err(Error::Shape(format!(
                "input frame has {} dims, model expects {}",
                input.len(),
                model.input_dim()
            )));
        }
        let mut prev: &[f32] = input;
        for (layer, st) in model.layers().iter().zip(self.states.iter_mut()) {
            let n = layer.cells();
            let in_dim = layer.input_dim();
            st.joint[..in_dim].copy_from_slice(prev);
            apply(&layer.gates, &st.joint, &mut st.joint_q, &mut st.gates)?;

            let (peep_i, rest) = layer.peephole.split_at(n);
            let (peep_f, peep_o) = rest.split_at(n);
            for j in 0..n {
                let c_prev = st.cell[j];
                let zi = st.gates[j] + layer.bias[j] + peep_i[j] * c_prev;
                let zf = st.gates[n + j] + layer.bias[n + j] + peep_f[j] * c_prev;
                let zg = st.gates[2 * n + j] + layer.bias[2 * n + j];
                let c = sigmoid(zf) * c_prev + sigmoid(zi) * zg.tanh();
                let zo = st.gates[3 * n + j] + layer.bias[3 * n + j] + peep_o[j] * c;
                st.cell[j] = c;
                st.hidden[j] = sigmoid(zo) * c.tanh();
            }

            let (_, recur) = st.joint.split_at_mut(in_dim);
            match &layer.projection {
                Some(p) => apply(p, &st.hidden, &mut st.hidden_q, recur)?,
                None => recur.copy_from_slice(&st.hidden),
            }
            prev = st.output(layer);
        }

        let output = model.output();
        apply(output.weights(), prev, &mut self.out_q, &mut self.logits)?;
        let max = self
            .logits
            .iter()
            .zip(&output.bias)
            .map(|(l, b)| l + b)
            .fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for ((o, l), b) in out.iter_mut().zip(&self.logits).zip(&output.bias) {
            let e = ((l + b - max) as f64).exp();
            *o = e as f32;
            sum += e;
        }
        for o in out.iter_mut() {
            *o = (*o as f64 / sum) as f32;
        }
        Ok(())
    }
}

/// Runs the LSTM stack over stacked frames and returns one posterior row per step.
pub fn lstm_forward(model: &AcousticModel, stacked: &Matrix) -> Result<Posteriorgram> {
    if stacked.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "stacked input has {} dims, model expects {}",
            stacked.cols(),
            model.input_dim()
        )));
    }
    let targets = model.num_targets();
    let mut session = InferenceSession::new(model);
    let mut data = vec![0.0f32; stacked.rows() * targets];
    for (t, out) in data.chunks_exact_mut(targets).enumerate() {
        session.step(stacked.row(t), out)?;
    }
    Posteriorgram::new(stacked.rows(), targets, data)
}
