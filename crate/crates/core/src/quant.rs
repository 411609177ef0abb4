//! Post-training INT8 affine quantization of model tensors, integer-weight
//! inference kernels, and size/latency reporting.
//!
//! Per-tensor affine map: `scale = (max - min) / 255` (1 when the tensor is
//! constant), `zero_point = round(-128 - min / scale)` clamped to the i8
//! range, `q = clamp(round(w / scale + zero_point))`.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::bytesio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::learn::{model_to_bytes, Model};

#[derive(Debug, Clone)]
pub struct QuantizedTensor {
    pub data: Vec<i8>,
    pub shape: Vec<usize>,
    pub scale: f64,
    pub zero_point: i32,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Quantize a tensor of any shape; errors on non-finite entries.
pub fn quantize(values: &[f64], shape: Vec<usize>) -> Result<QuantizedTensor> {
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.iter().product(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite tensor entry".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { (max - min) / 255.0 } else { 1.0 };
    let zero_point = (-128.0 - min / scale).round().clamp(-128.0, 127.0) as i32;
    let data = values
        .iter()
        .map(|&w| (w / scale + zero_point as f64).round().clamp(-128.0, 127.0) as i8)
        .collect();
    Ok(QuantizedTensor {
        data,
        shape,
        scale,
        zero_point,
    })
}

/// `(q - zero_point) * scale`, elementwise.
pub fn dequantize(q: &QuantizedTensor) -> Vec<f64> {
    q.data
        .iter()
        .map(|&v| (v as f64 - q.zero_point as f64) * q.scale)
        .collect()
}

/// Matrix-vector product with integer weights: accumulate `sum(q_ij * x_j)`
/// and correct for the zero point once per row. Equals the float product
/// with the dequantized weights up to accumulation rounding.
pub fn quantized_matvec(qw: &QuantizedTensor, x: &[f64]) -> Result<Vec<f64>> {
    let [rows, cols] = qw.shape[..] else {
        return Err(Error::InvalidInput(format!(
            "matvec needs a rank-2 tensor, got shape {:?}",
            qw.shape
        )));
    };
    if x.len() != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            got: x.len(),
        });
    }
    let x_sum: f64 = x.iter().sum();
    let zp_correction = qw.zero_point as f64 * x_sum;
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &qw.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (q, xv) in row.iter().zip(x) {
            acc += *q as f64 * xv;
        }
        out.push(qw.scale * (acc - zp_correction));
    }
    Ok(out)
}

/// INT8 counterpart of [`Model`], same architecture and tensor order.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden: Option<usize>,
    pub w1: QuantizedTensor,
    pub b1: QuantizedTensor,
    pub w2: Option<QuantizedTensor>,
    pub b2: Option<QuantizedTensor>,
}

impl QuantizedModel {
    pub fn from_model(model: &Model) -> Result<Self> {
        let w1 = quantize(model.w1.data(), vec![model.w1.rows(), model.w1.cols()])?;
        let b1 = quantize(&model.b1, vec![model.b1.len()])?;
        let w2 = model
            .w2
            .as_ref()
            .map(|w| quantize(w.data(), vec![w.rows(), w.cols()]))
            .transpose()?;
        let b2 = model
            .b2
            .as_ref()
            .map(|b| quantize(b, vec![b.len()]))
            .transpose()?;
        Ok(QuantizedModel {
            in_dim: model.in_dim,
            out_dim: model.out_dim,
            hidden: model.hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        let mut pre = quantized_matvec(&self.w1, x)?;
        let b1 = dequantize(&self.b1);
        for (p, b) in pre.iter_mut().zip(&b1) {
            *p += b;
        }
        match (&self.w2, &self.b2) {
            (Some(w2), Some(b2)) => {
                let act: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
                let mut logits = quantized_matvec(w2, &act)?;
                let b2 = dequantize(b2);
                for (l, b) in logits.iter_mut().zip(&b2) {
                    *l += b;
                }
                Ok(logits)
            }
            _ => Ok(pre),
        }
    }

    pub fn n_parameters(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.as_ref().map_or(0, QuantizedTensor::len)
            + self.b2.as_ref().map_or(0, QuantizedTensor::len)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(b"FQKQ");
        w.u32(1);
        w.u8(u8::from(self.hidden.is_some()));
        w.u32(self.in_dim as u32);
        w.u32(self.hidden.unwrap_or(0) as u32);
        w.u32(self.out_dim as u32);
        let mut tensor = |t: &QuantizedTensor| {
            w.u8(t.shape.len() as u8);
            for &d in &t.shape {
                w.u32(d as u32);
            }
            w.f64(t.scale);
            w.i32(t.zero_point);
            w.bytes(&t.data.iter().map(|&v| v as u8).collect::<Vec<u8>>());
        };
        tensor(&self.w1);
        tensor(&self.b1);
        if let (Some(w2), Some(b2)) = (&self.w2, &self.b2) {
            tensor(w2);
            tensor(b2);
        }
        w.into_vec()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(b"FQKQ")?;
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let is_mlp = r.u8()? != 0;
        let in_dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tensor = |r: &mut ByteReader| -> Result<QuantizedTensor> {
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let scale = r.f64()?;
            let zero_point = r.i32()?;
            let n: usize = shape.iter().product();
            let data = r.raw(n)?.iter().map(|&b| b as i8).collect();
            Ok(QuantizedTensor {
                data,
                shape,
                scale,
                zero_point,
            })
        };
        let w1 = tensor(&mut r)?;
        let b1 = tensor(&mut r)?;
        let (w2, b2) = if is_mlp {
            (Some(tensor(&mut r)?), Some(tensor(&mut r)?))
        } else {
            (None, None)
        };
        Ok(QuantizedModel {
            in_dim,
            out_dim,
            hidden: is_mlp.then_some(hidden),
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SizeReport {
    pub full_bytes: usize,
    pub quantized_bytes: usize,
    pub ratio: f64,
}

/// Serialized size of the full-precision file versus its INT8 counterpart.
pub fn size_report(model: &Model) -> Result<SizeReport> {
    let full_bytes = model_to_bytes(model).len();
    let quantized_bytes = QuantizedModel::from_model(model)?.to_bytes().len();
    Ok(SizeReport {
        full_bytes,
        quantized_bytes,
        ratio: quantized_bytes as f64 / full_bytes as f64,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatencyStats {
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub n_measurements: usize,
}

/// Wall-clock per-sample forward latency over `reps` repetitions of the
/// sample set; the first 10% of repetitions (rounded down) are warm-up and
/// excluded.
pub fn bench_inference<F>(mut forward: F, samples: &[Vec<f64>], reps: usize) -> Result<LatencyStats>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let warmup = reps / 10;
    let mut measurements = Vec::with_capacity((reps - warmup) * samples.len());
    for rep in 0..reps {
        for sample in samples {
            let start = Instant::now();
            let out = forward(sample)?;
            let elapsed = start.elapsed().as_secs_f64();
            std::hint::black_box(out);
            if rep >= warmup {
                measurements.push(elapsed);
            }
        }
    }
    measurements.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = measurements.len();
    let rank = |q: f64| -> f64 {
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        measurements[idx]
    };
    Ok(LatencyStats {
        mean_s: measurements.iter().sum::<f64>() / n as f64,
        p50_s: rank(0.50),
        p95_s: rank(0.95),
        n_measurements: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_tensor_dequantizes_to_exact_zeros() {
        let q = quantize(&[0.0; 16], vec![4, 4]).unwrap();
        assert!(dequantize(&q).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roundtrip_error_is_within_half_a_quantum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..64 * 64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let q = quantize(&values, vec![64, 64]).unwrap();
        let back = dequantize(&q);
        for (orig, rec) in values.iter().zip(&back) {
            assert!(
                (orig - rec).abs() <= q.scale / 2.0 + 1e-12,
                "{orig} vs {rec} with scale {}",
                q.scale
            );
        }
    }

    #[test]
    fn quantize_dequantize_is_a_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let once = dequantize(&quantize(&values, vec![256]).unwrap());
        let twice = dequantize(&quantize(&once, vec![256]).unwrap());
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_rejects_non_finite() {
        assert!(quantize(&[f64::NAN], vec![1]).is_err());
        assert!(quantize(&[1.0, f64::INFINITY], vec![2]).is_err());
    }

    #[test]
    fn matvec_of_zero_vector_is_zero() {
        let q = quantize(&[1.0, -2.0, 0.5, 3.0], vec![2, 2]).unwrap();
        assert_eq!(quantized_matvec(&q, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn matvec_is_exact_on_representable_values() {
        // Entries on the quantization grid reproduce exactly.
        let values = vec![1.0, 0.0, 0.0, 1.0];
        let q = quantize(&values, vec![2, 2]).unwrap();
        let x = [3.0, -2.0];
        let y = quantized_matvec(&q, &x).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-9);
        assert!((y[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn matvec_matches_reference_product_with_dequantized_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = 8;
        let cols = 16;
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = quantize(&values, vec![rows, cols]).unwrap();
        let got = quantized_matvec(&q, &x).unwrap();
        let deq = dequantize(&q);
        for r in 0..rows {
            let want: f64 = (0..cols).map(|c| deq[r * cols + c] * x[c]).sum();
            assert!((got[r] - want).abs() < 1e-9, "row {r}: {} vs {want}", got[r]);
        }
        // And the quantization error against the original weights is bounded.
        let x_l1: f64 = x.iter().map(|v| v.abs()).sum();
        for r in 0..rows {
            let exact: f64 = (0..cols).map(|c| values[r * cols + c] * x[c]).sum();
            assert!((got[r] - exact).abs() <= x_l1 * q.scale / 2.0 + 1e-9);
        }
    }

    #[test]
    fn matvec_rejects_dimension_mismatch() {
        let q = quantize(&[1.0, 2.0], vec![1, 2]).unwrap();
        assert!(quantized_matvec(&q, &[1.0]).is_err());
    }

    #[test]
    fn quantized_model_file_roundtrip() {
        let model = Model::new_mlp(6, 4, 3, 5);
        let q = QuantizedModel::from_model(&model).unwrap();
        let restored = QuantizedModel::from_bytes(&q.to_bytes()).unwrap();
        let x = vec![0.3; 6];
        assert_eq!(q.forward(&x).unwrap(), restored.forward(&x).unwrap());
    }

    #[test]
    fn size_ratio_is_near_one_quarter_for_large_tensors() {
        let model = Model::new_linear(500, 200, 1); // 100k weights
        let report = size_report(&model).unwrap();
        assert!(report.ratio <= 0.30, "ratio {}", report.ratio);
        assert!(report.ratio >= 0.20, "ratio {}", report.ratio);
    }

    #[test]
    fn quantized_and_full_agree_on_argmax_for_separated_logits() {
        // A trained-looking model with decisive margins.
        let mut model = Model::new_linear(4, 2, 3);
        for t in model.tensors_mut() {
            t.fill(0.0);
        }
        model.w1.set(0, 0, -2.0);
        model.w1.set(1, 0, 2.0);
        let q = QuantizedModel::from_model(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut agree = 0;
        let n = 500;
        for _ in 0..n {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let full = model.forward(&x).unwrap();
            let quant = q.forward(&x).unwrap();
            if crate::learn::argmax(&full) == crate::learn::argmax(&quant) {
                agree += 1;
            }
        }
        assert!(agree as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn bench_single_measurement_fills_all_quantiles() {
        let model = Model::new_linear(8, 2, 0);
        let samples = vec![vec![0.1; 8]];
        let stats = bench_inference(|x| model.forward(x), &samples, 1).unwrap();
        assert_eq!(stats.n_measurements, 1);
        assert_eq!(stats.p50_s, stats.p95_s);
        assert_eq!(stats.mean_s, stats.p50_s);
    }

    #[test]
    fn bench_discards_the_first_tenth_of_reps() {
        let model = Model::new_linear(4, 2, 0);
        let samples = vec![vec![0.5; 4]; 3];
        let stats = bench_inference(|x| model.forward(x), &samples, 20).unwrap();
        // 20 reps, 2 warm-up, 18 kept x 3 samples.
        assert_eq!(stats.n_measurements, 54);
    }
}
