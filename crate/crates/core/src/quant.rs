//! Uniform linear 8-bit quantization with bias-consistent rounding.
//!
//! A value `v` is stored as the code `round(q*v) - round(q*v_min)`, where
//! `q = S / (v_max - v_min)` and `S = 255`. Products of two quantized
//! operands are formed on the offset values `V'' = code + round(q*v_min)`,
//! which are exactly `round(q*v)`, so quantization and recovery use the same
//! rounding and do not introduce a systematic bias.

use std::io::{Read, Write};

use crate::binio;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of quantization steps for 8-bit codes.
pub const SCALE: u8 = 255;

/// Header bytes of a serialized tensor block: rows, cols, v_min, q.
pub const BLOCK_HEADER_BYTES: usize = 16;

/// Round half away from zero. Used by both quantization and recovery.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Chooses `(v_min, q)` for a set of finite values.
fn range_params(values: &[f32]) -> Result<(f32, f32)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot quantize an empty tensor".into()));
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi as f64 - lo as f64;
    let q = if range > 0.0 {
        (SCALE as f64 / range) as f32
    } else {
        degenerate_scale(lo)
    };
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Numeric(format!("unusable quantization factor {q}")));
    }
    Ok((lo, q))
}

/// Factor for a constant tensor. All codes are zero, so the constant is
/// recovered as `round(q*v_min)/q`; `q = 1` does that exactly for integral
/// constants, otherwise `q*v_min` is pinned to `±S`.
fn degenerate_scale(v: f32) -> f32 {
    if v == v.trunc() && v.abs() <= 16384.0 {
        1.0
    } else {
        (SCALE as f64 / (v as f64).abs()) as f32
    }
}

#[inline]
fn encode(v: f32, q: f64, offset: f64) -> u8 {
    let c = round_half_away(q * v as f64) - offset;
    c.clamp(0.0, SCALE as f64) as u8
}

/// Recovers the real value of `code` from a tensor with the given range metadata.
#[inline]
pub fn recover_value(code: u8, v_min: f32, q: f32) -> f64 {
    let q = q as f64;
    (code as f64 + round_half_away(q * v_min as f64)) / q
}

/// 8-bit parameter block with per-tensor range metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
    v_min: f32,
    q: f32,
}

impl QuantizedTensor {
    pub fn quantize(rows: usize, cols: usize, values: &[f32]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} tensor",
                values.len()
            )));
        }
        let (v_min, q) = range_params(values)?;
        let qf = q as f64;
        let offset = round_half_away(qf * v_min as f64);
        let data = values.iter().map(|&v| encode(v, qf, offset)).collect();
        Ok(Self {
            rows,
            cols,
            data,
            v_min,
            q,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[u8] {
        &self.data
    }

    pub fn v_min(&self) -> f32 {
        self.v_min
    }

    pub fn q(&self) -> f32 {
        self.q
    }

    /// `round(q * v_min)`, the integer offset shared by all codes.
    pub fn offset(&self) -> i64 {
        round_half_away(self.q as f64 * self.v_min as f64) as i64
    }

    pub fn recover(&self, index: usize) -> f64 {
        recover_value(self.data[index], self.v_min, self.q)
    }

    pub fn dequantize(&self) -> Matrix {
        let offset = self.offset() as f64;
        let q = self.q as f64;
        let data = self
            .data
            .iter()
            .map(|&c| ((c as f64 + offset) / q) as f32)
            .collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("shape is consistent")
    }

    /// Offset-corrected integer values `V'' = code + round(q*v_min)`.
    pub fn offset_values(&self) -> Result<Vec<i16>> {
        let offset = self.offset();
        let lo = offset;
        let hi = offset + SCALE as i64;
        if lo < i16::MIN as i64 || hi > i16::MAX as i64 {
            return Err(Error::Overflow(format!(
                "offset values [{lo}, {hi}] do not fit 16-bit operands"
            )));
        }
        Ok(self.data.iter().map(|&c| (c as i64 + offset) as i16).collect())
    }

    pub fn serialized_len(&self) -> usize {
        BLOCK_HEADER_BYTES + self.data.len()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_u32(w, self.rows as u32)?;
        binio::write_u32(w, self.cols as u32)?;
        binio::write_f32(w, self.v_min)?;
        binio::write_f32(w, self.q)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let rows = binio::read_u32(r)? as usize;
        let cols = binio::read_u32(r)? as usize;
        let v_min = binio::read_f32(r)?;
        let q = binio::read_f32(r)?;
        if !(q > 0.0 && q.is_finite()) || !v_min.is_finite() {
            return Err(Error::format(format!("bad tensor range metadata q={q} v_min={v_min}")));
        }
        let data = binio::read_bytes(r, rows * cols)?;
        Ok(Self {
            rows,
            cols,
            data,
            v_min,
            q,
        })
    }
}

/// Quantizes a real matrix into an 8-bit tensor.
pub fn quantize_tensor(values: &Matrix) -> Result<QuantizedTensor> {
    QuantizedTensor::quantize(values.rows(), values.cols(), values.as_slice())
}

/// Integer operand ready for multiplication: offset values plus factor.
#[derive(Debug, Clone, PartialEq)]
pub struct IntOperand {
    rows: usize,
    cols: usize,
    values: Vec<i16>,
    q: f64,
    max_abs: i64,
}

impl IntOperand {
    pub fn from_tensor(t: &QuantizedTensor) -> Result<Self> {
        let values = t.offset_values()?;
        let max_abs = max_abs(&values);
        Ok(Self {
            rows: t.rows,
            cols: t.cols,
            values,
            q: t.q as f64,
            max_abs,
        })
    }

    /// Column-vector operand with capacity for `len` values, filled by [`Self::quantize_from`].
    pub fn vector(len: usize) -> Self {
        Self {
            rows: len,
            cols: 1,
            values: vec![0; len],
            q: 1.0,
            max_abs: 0,
        }
    }

    /// Re-quantizes `values` into this operand in place, without allocating.
    pub fn quantize_from(&mut self, values: &[f32]) -> Result<()> {
        debug_assert_eq!(values.len(), self.values.len());
        let (v_min, q) = range_params(values)?;
        let qf = q as f64;
        let offset = round_half_away(qf * v_min as f64);
        if offset.abs() + SCALE as f64 > i16::MAX as f64 {
            return Err(Error::Overflow(format!(
                "activation offset {offset} does not fit 16-bit operands"
            )));
        }
        let offset_i = offset as i64;
        for (dst, &v) in self.values.iter_mut().zip(values) {
            *dst = (encode(v, qf, offset) as i64 + offset_i) as i16;
        }
        self.q = qf;
        self.max_abs = max_abs(&self.values);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `out[r] = (Σ_k a''[r,k] * x''[k]) / (q_a * q_x)` for a column vector `x`.
    pub fn matvec_into(&self, x: &IntOperand, out: &mut [f32]) -> Result<()> {
        if x.rows != self.cols || x.cols != 1 || out.len() != self.rows {
            return Err(Error::Shape(format!(
                "{}x{} by {}x{} into {}",
                self.rows,
                self.cols,
                x.rows,
                x.cols,
                out.len()
            )));
        }
        let scale = 1.0 / (self.q * x.q);
        let xs = &x.values;
        if fits_i32(self.cols, self.max_abs, x.max_abs) {
            for (r, o) in out.iter_mut().enumerate() {
                let row = &self.values[r * self.cols..(r + 1) * self.cols];
                *o = (dot_i32(row, xs) as f64 * scale) as f32;
            }
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                let row = &self.values[r * self.cols..(r + 1) * self.cols];
                *o = (dot_i64(row, xs) as f64 * scale) as f32;
            }
        }
        Ok(())
    }
}

fn max_abs(values: &[i16]) -> i64 {
    values.iter().map(|&v| (v as i64).abs()).max().unwrap_or(0)
}

/// Whether a length-`k` dot product of operands bounded by `a` and `b` fits an i32 sum.
fn fits_i32(k: usize, a: i64, b: i64) -> bool {
    (k as i128) * (a as i128) * (b as i128) <= i32::MAX as i128
}

/// Caller guarantees the sum cannot overflow (see [`fits_i32`]).
#[inline]
fn dot_i32(a: &[i16], b: &[i16]) -> i32 {
    a.iter()
        .zip(b)
        .fold(0i32, |acc, (&x, &y)| acc.wrapping_add((x as i32).wrapping_mul(y as i32)))
}

#[inline]
fn dot_i64(a: &[i16], b: &[i16]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum()
}

/// Multiplies two quantized tensors: `c[i,j] = Σ_k a''[i,k] b''[k,j] / (q_a q_b)`.
///
/// Inner sums are accumulated in 32-bit integers when the operand bounds
/// allow it and in 64-bit integers otherwise.
pub fn quantized_matmul(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<Matrix> {
    let mut out = Matrix::zeros(a.rows, b.cols);
    quantized_matmul_into(a, b, &mut out)?;
    Ok(out)
}

pub fn quantized_matmul_into(a: &QuantizedTensor, b: &QuantizedTensor, out: &mut Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if out.rows() != a.rows || out.cols() != b.cols {
        return Err(Error::Shape(format!(
            "output is {}x{}, expected {}x{}",
            out.rows(),
            out.cols(),
            a.rows,
            b.cols
        )));
    }
    let lhs = IntOperand::from_tensor(a)?;
    let rhs = IntOperand::from_tensor(b)?;
    // Transpose b so each output element is a contiguous dot product.
    let k = a.cols;
    let mut bt = vec![0i16; b.rows * b.cols];
    for r in 0..b.rows {
        for c in 0..b.cols {
            bt[c * k + r] = rhs.values[r * b.cols + c];
        }
    }
    let scale = 1.0 / (lhs.q * rhs.q);
    let narrow = fits_i32(k, lhs.max_abs, rhs.max_abs);
    for i in 0..a.rows {
        let arow = &lhs.values[i * k..(i + 1) * k];
        for j in 0..b.cols {
            let bcol = &bt[j * k..(j + 1) * k];
            let acc = if narrow {
                dot_i32(arow, bcol) as f64
            } else {
                dot_i64(arow, bcol) as f64
            };
            out.set(i, j, (acc * scale) as f32);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn endpoints_map_to_zero_and_scale() {
        let t = QuantizedTensor::quantize(1, 2, &[0.0, 1.0]).unwrap();
        assert_eq!(t.codes(), &[0, 255]);
        assert_eq!(t.q(), 255.0);
        assert_eq!(t.v_min(), 0.0);
    }

    #[test]
    fn constant_tensor_uses_unit_factor() {
        let t = QuantizedTensor::quantize(1, 3, &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(t.codes(), &[0, 0, 0]);
        assert_eq!(t.q(), 1.0);
        assert_eq!(t.v_min(), 5.0);
        assert_eq!(t.recover(1), 5.0);
    }

    #[test]
    fn non_integral_constant_recovers() {
        let t = QuantizedTensor::quantize(1, 2, &[-0.3, -0.3]).unwrap();
        assert_eq!(t.codes(), &[0, 0]);
        assert!((t.recover(0) - (-0.3f32) as f64).abs() < 1e-7);
    }

    #[test]
    fn recover_examples() {
        assert_eq!(recover_value(0, 0.0, 255.0), 0.0);
        assert_eq!(recover_value(255, 0.0, 255.0), 1.0);
        // round(-127.5) = -128 under half-away-from-zero.
        assert_eq!(recover_value(128, -1.0, 127.5), 0.0);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            QuantizedTensor::quantize(1, 2, &[0.0, f32::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            QuantizedTensor::quantize(0, 0, &[]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn uniform_roundtrip_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vals: Vec<f32> = (0..1000).map(|_| rng.random_range(-2.0f32..3.0)).collect();
        let t = QuantizedTensor::quantize(1, vals.len(), &vals).unwrap();
        let bound = 5.0 / (2.0 * 255.0) * (1.0 + 1e-6);
        for (i, &v) in vals.iter().enumerate() {
            assert!((v as f64 - t.recover(i)).abs() <= bound);
        }
    }

    #[test]
    fn integer_values_multiply_exactly() {
        // Both tensors span [0, 255], so q = 1 and every integer is a code.
        let a = QuantizedTensor::quantize(1, 4, &[1.0, 2.0, 0.0, 255.0]).unwrap();
        let b = QuantizedTensor::quantize(4, 1, &[3.0, 4.0, 255.0, 0.0]).unwrap();
        assert_eq!((a.q(), b.q()), (1.0, 1.0));
        assert_eq!(quantized_matmul(&a, &b).unwrap().get(0, 0), 11.0);
    }

    #[test]
    fn zero_annihilates() {
        let a = QuantizedTensor::quantize(1, 1, &[0.0]).unwrap();
        let b = QuantizedTensor::quantize(1, 1, &[0.73]).unwrap();
        assert_eq!(quantized_matmul(&a, &b).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = QuantizedTensor::quantize(2, 3, &[0.0; 6]).unwrap();
        let b = QuantizedTensor::quantize(2, 2, &[0.0; 4]).unwrap();
        assert!(matches!(quantized_matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn wide_accumulation_matches_exact_sum() {
        // Long inner dimension with large offsets forces the 64-bit path.
        let k = 40_000;
        let av: Vec<f32> = (0..k).map(|i| if i % 2 == 0 { 100.0 } else { 100.0 + 255.0 / 64.0 }).collect();
        let a = QuantizedTensor::quantize(1, k, &av).unwrap();
        let b = QuantizedTensor::quantize(k, 1, &av).unwrap();
        let op = IntOperand::from_tensor(&a).unwrap();
        assert!(!fits_i32(k, op.max_abs, op.max_abs));
        let c = quantized_matmul(&a, &b).unwrap().get(0, 0) as f64;
        let exact: f64 = (0..k).map(|i| a.recover(i) * b.recover(i)).sum();
        assert!((c - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn large_offsets_are_rejected() {
        let t = QuantizedTensor::quantize(1, 2, &[1.0e6, 1.0e6 + 1.0]).unwrap();
        assert!(matches!(t.offset_values(), Err(Error::Overflow(_))));
    }

    #[test]
    fn block_layout_is_byte_packed() {
        let t = QuantizedTensor::quantize(2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), BLOCK_HEADER_BYTES + 6);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        let back = QuantizedTensor::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_step(vals in proptest::collection::vec(-1.0e3f32..1.0e3, 1..64)) {
            let t = QuantizedTensor::quantize(1, vals.len(), &vals).unwrap();
            let (lo, hi) = vals.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let range = hi as f64 - lo as f64;
            let bound = range / (2.0 * 255.0) * (1.0 + 1e-6) + (lo.abs().max(hi.abs()) as f64) * f32::EPSILON as f64;
            for (i, &v) in vals.iter().enumerate() {
                prop_assert!((v as f64 - t.recover(i)).abs() <= bound + 1e-12);
            }
        }

        #[test]
        fn codes_preserve_order(vals in proptest::collection::vec(-50.0f32..50.0, 2..64)) {
            let t = QuantizedTensor::quantize(1, vals.len(), &vals).unwrap();
            for i in 0..vals.len() {
                for j in 0..vals.len() {
                    if vals[i] <= vals[j] {
                        prop_assert!(t.codes()[i] <= t.codes()[j]);
                    }
                }
            }
        }
    }
}
