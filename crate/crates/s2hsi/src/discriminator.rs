//! Element-wise real/fake probability network with hand-written forward,
//! parameter gradients, and input vector-Jacobian products.
//!
//! Three layers, all with circular padding: 3x3 conv (bands -> 32),
//! leaky ReLU 0.2, 3x3 conv (32 -> 32), leaky ReLU 0.2, 1x1 conv
//! (32 -> bands), logistic sigmoid per entry.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{BandPixelMatrix, HsiCube};
use crate::error::{Error, Result};

pub const HIDDEN_CHANNELS: usize = 32;
pub const LEAKY_SLOPE: f64 = 0.2;
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// [out, in, kr, kc]
    pub weights: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayer {
    fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        ConvLayer {
            weights: Array4::zeros((out_ch, in_ch, k, k)),
            bias: Array1::zeros(out_ch),
        }
    }

    fn seeded(out_ch: usize, in_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / ((in_ch * k * k) as f64).sqrt();
        let weights =
            Array4::from_shape_fn((out_ch, in_ch, k, k), |_| rng.gen_range(-scale..scale));
        ConvLayer {
            weights,
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub bands: usize,
    pub layer1: ConvLayer,
    pub layer2: ConvLayer,
    pub layer3: ConvLayer,
}

impl DiscriminatorParams {
    pub fn zeros(bands: usize) -> Self {
        DiscriminatorParams {
            bands,
            layer1: ConvLayer::zeros(HIDDEN_CHANNELS, bands, 3),
            layer2: ConvLayer::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS, 3),
            layer3: ConvLayer::zeros(bands, HIDDEN_CHANNELS, 1),
        }
    }

    pub fn seeded(bands: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DiscriminatorParams {
            bands,
            layer1: ConvLayer::seeded(HIDDEN_CHANNELS, bands, 3, &mut rng),
            layer2: ConvLayer::seeded(HIDDEN_CHANNELS, HIDDEN_CHANNELS, 3, &mut rng),
            layer3: ConvLayer::seeded(bands, HIDDEN_CHANNELS, 1, &mut rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for layer in [&self.layer1, &self.layer2, &self.layer3] {
            if layer.weights.iter().any(|v| !v.is_finite())
                || layer.bias.iter().any(|v| !v.is_finite())
            {
                return Err(Error::Data("non-finite discriminator parameters".into()));
            }
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        [&self.layer1, &self.layer2, &self.layer3]
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in [&self.layer1, &self.layer2, &self.layer3] {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for layer in [&mut self.layer1, &mut self.layer2, &mut self.layer3] {
            for w in layer.weights.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in layer.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
    }
}

/// Stored activations for one forward pass; shapes are (channels, rows, cols).
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub input: Array3<f64>,
    pub pre1: Array3<f64>,
    pub act1: Array3<f64>,
    pub pre2: Array3<f64>,
    pub act2: Array3<f64>,
    pub pre3: Array3<f64>,
    pub probabilities: Array3<f64>,
}

fn conv_circular(x: &Array3<f64>, layer: &ConvLayer) -> Array3<f64> {
    let (in_ch, rows, cols) = x.dim();
    let out_ch = layer.weights.shape()[0];
    let k = layer.kernel_size();
    let half = (k / 2) as isize;
    debug_assert_eq!(layer.weights.shape()[1], in_ch);
    let mut y = Array3::zeros((out_ch, rows, cols));
    for o in 0..out_ch {
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                let mut acc = layer.bias[o];
                for i in 0..in_ch {
                    for kr in 0..k as isize {
                        for kc in 0..k as isize {
                            let sr = (r + kr - half).rem_euclid(rows as isize) as usize;
                            let sc = (c + kc - half).rem_euclid(cols as isize) as usize;
                            acc += layer.weights[[o, i, kr as usize, kc as usize]] * x[[i, sr, sc]];
                        }
                    }
                }
                y[[o, r as usize, c as usize]] = acc;
            }
        }
    }
    y
}

/// Gradient of a circular conv w.r.t. its input.
fn conv_circular_input_grad(dy: &Array3<f64>, layer: &ConvLayer, in_dim: (usize, usize, usize)) -> Array3<f64> {
    let (in_ch, rows, cols) = in_dim;
    let out_ch = layer.weights.shape()[0];
    let k = layer.kernel_size();
    let half = (k / 2) as isize;
    let mut dx = Array3::zeros((in_ch, rows, cols));
    for o in 0..out_ch {
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                let g = dy[[o, r as usize, c as usize]];
                if g == 0.0 {
                    continue;
                }
                for i in 0..in_ch {
                    for kr in 0..k as isize {
                        for kc in 0..k as isize {
                            let sr = (r + kr - half).rem_euclid(rows as isize) as usize;
                            let sc = (c + kc - half).rem_euclid(cols as isize) as usize;
                            dx[[i, sr, sc]] += layer.weights[[o, i, kr as usize, kc as usize]] * g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradients of a circular conv w.r.t. weights and bias.
fn conv_circular_param_grad(dy: &Array3<f64>, x: &Array3<f64>, k: usize) -> (Array4<f64>, Array1<f64>) {
    let (in_ch, rows, cols) = x.dim();
    let out_ch = dy.dim().0;
    let half = (k / 2) as isize;
    let mut dw = Array4::zeros((out_ch, in_ch, k, k));
    let mut db = Array1::zeros(out_ch);
    for o in 0..out_ch {
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                let g = dy[[o, r as usize, c as usize]];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for i in 0..in_ch {
                    for kr in 0..k as isize {
                        for kc in 0..k as isize {
                            let sr = (r + kr - half).rem_euclid(rows as isize) as usize;
                            let sc = (c + kc - half).rem_euclid(cols as isize) as usize;
                            dw[[o, i, kr as usize, kc as usize]] += g * x[[i, sr, sc]];
                        }
                    }
                }
            }
        }
    }
    (dw, db)
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matrix_to_tensor(a: &BandPixelMatrix) -> Array3<f64> {
    let (bands, _) = a.values.dim();
    Array3::from_shape_fn((bands, a.rows, a.cols), |(b, r, c)| {
        a.values[[b, r * a.cols + c]]
    })
}

fn tensor_to_matrix(t: &Array3<f64>, rows: usize, cols: usize) -> BandPixelMatrix {
    let bands = t.dim().0;
    let values = ndarray::Array2::from_shape_fn((bands, rows * cols), |(b, j)| {
        t[[b, j / cols, j % cols]]
    });
    BandPixelMatrix { values, rows, cols }
}

/// Forward pass; every probability is strictly inside (0,1).
pub fn disc_forward(
    params: &DiscriminatorParams,
    a: &BandPixelMatrix,
) -> Result<(BandPixelMatrix, ForwardTape)> {
    if a.bands() != params.bands {
        return Err(Error::ShapeMismatch(format!(
            "discriminator expects {} bands, input has {}",
            params.bands,
            a.bands()
        )));
    }
    if a.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite discriminator input".into()));
    }
    let input = matrix_to_tensor(a);
    let pre1 = conv_circular(&input, &params.layer1);
    let act1 = pre1.mapv(leaky);
    let pre2 = conv_circular(&act1, &params.layer2);
    let act2 = pre2.mapv(leaky);
    let pre3 = conv_circular(&act2, &params.layer3);
    let probabilities = pre3.mapv(sigmoid);
    let out = tensor_to_matrix(&probabilities, a.rows, a.cols);
    Ok((
        out,
        ForwardTape {
            input,
            pre1,
            act1,
            pre2,
            act2,
            pre3,
            probabilities,
        },
    ))
}

/// J^T v for the forward map (probabilities w.r.t. input), evaluated at the
/// taped point. Linear in the cotangent.
pub fn disc_vjp(
    params: &DiscriminatorParams,
    tape: &ForwardTape,
    cotangent: &BandPixelMatrix,
) -> Result<BandPixelMatrix> {
    let (bands, rows, cols) = tape.input.dim();
    if cotangent.bands() != bands || cotangent.rows != rows || cotangent.cols != cols {
        return Err(Error::ShapeMismatch("cotangent does not match tape".into()));
    }
    let v = matrix_to_tensor(cotangent);
    // through the sigmoid
    let mut dpre3 = v;
    for (d, &p) in dpre3.iter_mut().zip(tape.probabilities.iter()) {
        *d *= p * (1.0 - p);
    }
    let mut dact2 = conv_circular_input_grad(&dpre3, &params.layer3, tape.act2.dim());
    for (d, &z) in dact2.iter_mut().zip(tape.pre2.iter()) {
        *d *= leaky_grad(z);
    }
    let mut dact1 = conv_circular_input_grad(&dact2, &params.layer2, tape.act1.dim());
    for (d, &z) in dact1.iter_mut().zip(tape.pre1.iter()) {
        *d *= leaky_grad(z);
    }
    let dx = conv_circular_input_grad(&dact1, &params.layer1, tape.input.dim());
    Ok(tensor_to_matrix(&dx, rows, cols))
}

/// L_D = -(log p_r + log(1 - p_f)), probabilities clamped away from 0/1.
pub fn disc_loss(p_r: f64, p_f: f64) -> f64 {
    let p_r = p_r.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let p_f = p_f.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(p_r.ln() + (1.0 - p_f).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub layer1: ConvLayer,
    pub layer2: ConvLayer,
    pub layer3: ConvLayer,
}

impl ParamGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in [&self.layer1, &self.layer2, &self.layer3] {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }
}

fn backprop_params(
    params: &DiscriminatorParams,
    tape: &ForwardTape,
    dprob: &Array3<f64>,
    grad: &mut ParamGradient,
) {
    let mut dpre3 = dprob.clone();
    for (d, &p) in dpre3.iter_mut().zip(tape.probabilities.iter()) {
        *d *= p * (1.0 - p);
    }
    let (dw3, db3) = conv_circular_param_grad(&dpre3, &tape.act2, params.layer3.kernel_size());
    grad.layer3.weights += &dw3;
    grad.layer3.bias += &db3;

    let mut dact2 = conv_circular_input_grad(&dpre3, &params.layer3, tape.act2.dim());
    for (d, &z) in dact2.iter_mut().zip(tape.pre2.iter()) {
        *d *= leaky_grad(z);
    }
    let (dw2, db2) = conv_circular_param_grad(&dact2, &tape.act1, params.layer2.kernel_size());
    grad.layer2.weights += &dw2;
    grad.layer2.bias += &db2;

    let mut dact1 = conv_circular_input_grad(&dact2, &params.layer2, tape.act1.dim());
    for (d, &z) in dact1.iter_mut().zip(tape.pre1.iter()) {
        *d *= leaky_grad(z);
    }
    let (dw1, db1) = conv_circular_param_grad(&dact1, &tape.input, params.layer1.kernel_size());
    grad.layer1.weights += &dw1;
    grad.layer1.bias += &db1;
}

/// Mean probabilities over every entry of every patch in a batch.
fn batch_mean_prob(params: &DiscriminatorParams, batch: &[BandPixelMatrix]) -> Result<(f64, Vec<ForwardTape>)> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut tapes = Vec::with_capacity(batch.len());
    for patch in batch {
        let (p, tape) = disc_forward(params, patch)?;
        total += p.values.sum();
        count += p.values.len();
        tapes.push(tape);
    }
    Ok((total / count as f64, tapes))
}

/// Exact gradient of L_D w.r.t. all parameters, with p_r and p_f taken as
/// means over all entries of the real and fake batches.
pub fn disc_param_grad(
    params: &DiscriminatorParams,
    real_batch: &[BandPixelMatrix],
    fake_batch: &[BandPixelMatrix],
) -> Result<(ParamGradient, f64, f64, f64)> {
    if real_batch.is_empty() || fake_batch.is_empty() {
        return Err(Error::InvalidArgument("empty discriminator batch".into()));
    }
    let (p_r, real_tapes) = batch_mean_prob(params, real_batch)?;
    let (p_f, fake_tapes) = batch_mean_prob(params, fake_batch)?;
    let loss = disc_loss(p_r, p_f);

    let mut grad = ParamGradient {
        layer1: ConvLayer::zeros(HIDDEN_CHANNELS, params.bands, 3),
        layer2: ConvLayer::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS, 3),
        layer3: ConvLayer::zeros(params.bands, HIDDEN_CHANNELS, 1),
    };

    let real_entries: usize = real_tapes.iter().map(|t| t.probabilities.len()).sum();
    let fake_entries: usize = fake_tapes.iter().map(|t| t.probabilities.len()).sum();
    // dL/dp_r = -1/p_r, spread uniformly over real entries
    let dreal = -1.0 / p_r.clamp(PROB_EPS, 1.0 - PROB_EPS) / real_entries as f64;
    // dL/dp_f = 1/(1-p_f), spread uniformly over fake entries
    let dfake = 1.0 / (1.0 - p_f.clamp(PROB_EPS, 1.0 - PROB_EPS)) / fake_entries as f64;

    for tape in &real_tapes {
        let dprob = Array3::from_elem(tape.probabilities.dim(), dreal);
        backprop_params(params, tape, &dprob, &mut grad);
    }
    for tape in &fake_tapes {
        let dprob = Array3::from_elem(tape.probabilities.dim(), dfake);
        backprop_params(params, tape, &dprob, &mut grad);
    }
    Ok((grad, loss, p_r, p_f))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: usize,
    pub step_size: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 200,
            step_size: 1e-5,
            patch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub p_r: f64,
    pub p_f: f64,
}

fn sample_patch(cube: &HsiCube, size: usize, rng: &mut ChaCha8Rng) -> BandPixelMatrix {
    let size = size.min(cube.rows).min(cube.cols);
    let r0 = if cube.rows > size {
        rng.gen_range(0..cube.rows - size + 1)
    } else {
        0
    };
    let c0 = if cube.cols > size {
        rng.gen_range(0..cube.cols - size + 1)
    } else {
        0
    };
    let values = ndarray::Array2::from_shape_fn((cube.bands, size * size), |(b, j)| {
        cube.sample(b, r0 + j / size, c0 + j % size)
    });
    BandPixelMatrix {
        values,
        rows: size,
        cols: size,
    }
}

/// Adam gradient descent on L_D over seeded random patches. Deterministic
/// given the seed; returns the per-step loss trace.
pub fn train_discriminator(
    params: &DiscriminatorParams,
    real: &[HsiCube],
    fake: &[HsiCube],
    opts: &TrainOptions,
) -> Result<(DiscriminatorParams, Vec<TraceRow>)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut params = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let n = params.param_count();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = Vec::with_capacity(opts.steps);

    for step in 0..opts.steps {
        let real_patch = sample_patch(&real[rng.gen_range(0..real.len())], opts.patch_size, &mut rng);
        let fake_patch = sample_patch(&fake[rng.gen_range(0..fake.len())], opts.patch_size, &mut rng);
        let (grad, loss, p_r, p_f) =
            disc_param_grad(&params, &[real_patch], &[fake_patch])?;
        let g = grad.flatten();
        let mut flat = params.flatten();
        let t = (step + 1) as f64;
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - beta1.powf(t));
            let v_hat = v[i] / (1.0 - beta2.powf(t));
            flat[i] -= opts.step_size * m_hat / (v_hat.sqrt() + eps);
        }
        params.unflatten_into(&flat);
        trace.push(TraceRow {
            step,
            loss,
            p_r,
            p_f,
        });
    }
    params.validate()?;
    Ok((params, trace))
}

const DSC_MAGIC: &[u8; 4] = b"DSC1";

/// Parameter file: magic, band count, hidden width, then raw f64 weights in
/// layer order (weights then bias per layer).
pub fn write_params(params: &DiscriminatorParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(DSC_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(params.bands as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(HIDDEN_CHANNELS as u32).map_err(io)?;
    for v in params.flatten() {
        w.write_f64::<LittleEndian>(v).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_params(path: &Path) -> Result<DiscriminatorParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != DSC_MAGIC {
        return Err(Error::format(path, "bad magic, expected \"DSC1\""));
    }
    let bands = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let hidden = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    if hidden != HIDDEN_CHANNELS {
        return Err(Error::format(
            path,
            format!("unsupported hidden width {hidden}"),
        ));
    }
    let mut params = DiscriminatorParams::zeros(bands);
    let mut flat = vec![0f64; params.param_count()];
    r.read_f64_into::<LittleEndian>(&mut flat)
        .map_err(|_| Error::corrupt(path, "truncated parameter block"))?;
    params.unflatten_into(&flat);
    params.validate()?;
    Ok(params)
}
