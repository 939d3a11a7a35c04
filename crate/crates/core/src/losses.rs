//! GAN objective kernels on plain tensors, with analytic gradients.
//!
//! Feature stacks are supplied by the caller; nothing here knows which
//! network produced them. Reductions walk the data in row-major order so
//! results are bit-reproducible.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!("non-finite value {v}")));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn from_fn(shape: Vec<usize>, f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_per: f64,
    pub lambda_sty: f64,
    pub lambda_rec: f64,
    /// Weight of the generated-sample term of the adversarial loss.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_adv: 1.0,
            lambda_per: 0.1,
            lambda_sty: 250.0,
            lambda_rec: 1.0,
            gamma: 0.1,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_probabilities(t: &Tensor) -> Result<()> {
    if t.is_empty() {
        return Err(Error::ShapeMismatch("empty discriminator output".into()));
    }
    match t.data.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        Some(&value) => Err(Error::Domain { value }),
        None => Ok(()),
    }
}

fn mean_by(t: &Tensor, f: impl Fn(f64) -> f64) -> f64 {
    t.data.iter().map(|&v| f(v)).sum::<f64>() / t.len() as f64
}

/// `mean(log D(x)) + gamma * mean(log(1 - D(x~)))`, the quantity the
/// discriminator maximizes.
pub fn adversarial_loss(d_real: &Tensor, d_fake: &Tensor, gamma: f64) -> Result<f64> {
    check_probabilities(d_real)?;
    check_probabilities(d_fake)?;
    Ok(mean_by(d_real, f64::ln) + gamma * mean_by(d_fake, |d| (1.0 - d).ln()))
}

/// Gradients of [`adversarial_loss`] with respect to `(d_real, d_fake)`.
pub fn adversarial_grad(d_real: &Tensor, d_fake: &Tensor, gamma: f64) -> Result<(Tensor, Tensor)> {
    check_probabilities(d_real)?;
    check_probabilities(d_fake)?;
    let (nr, nf) = (d_real.len() as f64, d_fake.len() as f64);
    let g_real = Tensor {
        shape: d_real.shape.clone(),
        data: d_real.data.iter().map(|&d| 1.0 / (nr * d)).collect(),
    };
    let g_fake = Tensor {
        shape: d_fake.shape.clone(),
        data: d_fake.data.iter().map(|&d| -gamma / (nf * (1.0 - d))).collect(),
    };
    Ok((g_real, g_fake))
}

/// Non-saturating generator objective `-mean(log D(x~))`.
pub fn generator_adv_loss(d_fake: &Tensor) -> Result<f64> {
    check_probabilities(d_fake)?;
    Ok(-mean_by(d_fake, f64::ln))
}

pub fn generator_adv_grad(d_fake: &Tensor) -> Result<Tensor> {
    check_probabilities(d_fake)?;
    let n = d_fake.len() as f64;
    Ok(Tensor {
        shape: d_fake.shape.clone(),
        data: d_fake.data.iter().map(|&d| -1.0 / (n * d)).collect(),
    })
}

fn check_stacks(a: &[Tensor], b: &[Tensor]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} layers vs {}", a.len(), b.len())));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        x.same_shape(y, &format!("layer {i}"))?;
        if x.is_empty() {
            return Err(Error::ShapeMismatch(format!("layer {i} is empty")));
        }
    }
    Ok(())
}

/// Sum over layers of the size-normalized L1 feature distance.
pub fn perceptual_loss(feats_x: &[Tensor], feats_xt: &[Tensor]) -> Result<f64> {
    check_stacks(feats_x, feats_xt)?;
    Ok(feats_x
        .iter()
        .zip(feats_xt)
        .map(|(a, b)| {
            let l1: f64 = a.data.iter().zip(&b.data).map(|(p, q)| (p - q).abs()).sum();
            l1 / a.len() as f64
        })
        .sum())
}

/// Gradients of [`perceptual_loss`] with respect to both stacks.
pub fn perceptual_grad(feats_x: &[Tensor], feats_xt: &[Tensor]) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    check_stacks(feats_x, feats_xt)?;
    let mut gx = Vec::with_capacity(feats_x.len());
    let mut gxt = Vec::with_capacity(feats_x.len());
    for (a, b) in feats_x.iter().zip(feats_xt) {
        let n = a.len() as f64;
        let g: Vec<f64> = a.data.iter().zip(&b.data).map(|(p, q)| sign(p - q) / n).collect();
        gxt.push(Tensor {
            shape: a.shape.clone(),
            data: g.iter().map(|v| -v).collect(),
        });
        gx.push(Tensor {
            shape: a.shape.clone(),
            data: g,
        });
    }
    Ok((gx, gxt))
}

fn feature_dims(feat: &Tensor) -> Result<(usize, usize)> {
    match feat.shape.as_slice() {
        &[c, h, w] if c * h * w > 0 => Ok((c, h * w)),
        other => Err(Error::ShapeMismatch(format!(
            "expected a non-empty C x H x W feature map, got {other:?}"
        ))),
    }
}

/// `C x C` Gram matrix of a `C x H x W` feature map, normalized by `C*H*W`.
pub fn gram(feat: &Tensor) -> Result<Tensor> {
    let (c, hw) = feature_dims(feat)?;
    let norm = feat.len() as f64;
    let mut out = vec![0.0; c * c];
    for a in 0..c {
        let ra = &feat.data[a * hw..(a + 1) * hw];
        for b in a..c {
            let rb = &feat.data[b * hw..(b + 1) * hw];
            let v = ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>() / norm;
            out[a * c + b] = v;
            out[b * c + a] = v;
        }
    }
    Ok(Tensor {
        shape: vec![c, c],
        data: out,
    })
}

/// Vector-Jacobian product of [`gram`]: the gradient of `sum(upstream * gram(feat))`.
pub fn gram_vjp(feat: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (c, hw) = feature_dims(feat)?;
    if upstream.shape != [c, c] {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} for a {c}-channel Gram matrix",
            upstream.shape
        )));
    }
    let norm = feat.len() as f64;
    let mut out = vec![0.0; feat.len()];
    for a in 0..c {
        for b in 0..c {
            let s = (upstream.get2(a, b) + upstream.get2(b, a)) / norm;
            if s == 0.0 {
                continue;
            }
            let rb = &feat.data[b * hw..(b + 1) * hw];
            for (o, v) in out[a * hw..(a + 1) * hw].iter_mut().zip(rb) {
                *o += s * v;
            }
        }
    }
    Ok(Tensor {
        shape: feat.shape.clone(),
        data: out,
    })
}

/// Sum over layers of the L1 distance between Gram matrices.
pub fn style_loss(feats_x: &[Tensor], feats_xt: &[Tensor]) -> Result<f64> {
    check_stacks(feats_x, feats_xt)?;
    let mut total = 0.0;
    for (a, b) in feats_x.iter().zip(feats_xt) {
        let (ga, gb) = (gram(a)?, gram(b)?);
        total += ga.data.iter().zip(&gb.data).map(|(p, q)| (p - q).abs()).sum::<f64>();
    }
    Ok(total)
}

pub fn style_grad(feats_x: &[Tensor], feats_xt: &[Tensor]) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    check_stacks(feats_x, feats_xt)?;
    let mut gx = Vec::with_capacity(feats_x.len());
    let mut gxt = Vec::with_capacity(feats_x.len());
    for (a, b) in feats_x.iter().zip(feats_xt) {
        let (ga, gb) = (gram(a)?, gram(b)?);
        let s = Tensor {
            shape: ga.shape.clone(),
            data: ga.data.iter().zip(&gb.data).map(|(p, q)| sign(p - q)).collect(),
        };
        let neg = Tensor {
            shape: s.shape.clone(),
            data: s.data.iter().map(|v| -v).collect(),
        };
        gx.push(gram_vjp(a, &s)?);
        gxt.push(gram_vjp(b, &neg)?);
    }
    Ok((gx, gxt))
}

/// Index map from image elements to mask elements.
///
/// The mask either has the image's shape or matches its trailing
/// dimensions (leading singleton dims ignored) and is broadcast over the
/// leading ones, e.g. an `H x W` mask over a `C x H x W` image.
fn mask_stride(x: &Tensor, m: &Tensor) -> Result<usize> {
    let core: &[usize] = {
        let lead = m.shape.iter().take_while(|&&d| d == 1).count();
        &m.shape[lead.min(m.shape.len().saturating_sub(1))..]
    };
    let fits = m.shape == x.shape || (core.len() <= x.shape.len() && x.shape.ends_with(core));
    if !fits || m.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} does not broadcast over {:?}",
            m.shape, x.shape
        )));
    }
    Ok(m.len())
}

fn reconstruction_setup(x: &Tensor, xt: &Tensor, m: &Tensor) -> Result<(usize, f64)> {
    x.same_shape(xt, "reconstruction inputs")?;
    let stride = mask_stride(x, m)?;
    let known = (0..x.len()).filter(|&i| 1.0 - m.data[i % stride] != 0.0).count();
    if known == 0 {
        return Err(Error::AllMasked);
    }
    Ok((stride, known as f64))
}

/// Masked L1 over known pixels, averaged over the non-zero entries of
/// `1 - m` after broadcasting.
pub fn reconstruction_loss(x: &Tensor, xt: &Tensor, m: &Tensor) -> Result<f64> {
    let (stride, n) = reconstruction_setup(x, xt, m)?;
    let sum: f64 = (0..x.len())
        .map(|i| ((x.data[i] - xt.data[i]) * (1.0 - m.data[i % stride])).abs())
        .sum();
    Ok(sum / n)
}

/// Gradients of [`reconstruction_loss`] with respect to `(x, x~)`.
pub fn reconstruction_grad(x: &Tensor, xt: &Tensor, m: &Tensor) -> Result<(Tensor, Tensor)> {
    let (stride, n) = reconstruction_setup(x, xt, m)?;
    let gx: Vec<f64> = (0..x.len())
        .map(|i| {
            let keep = 1.0 - m.data[i % stride];
            sign((x.data[i] - xt.data[i]) * keep) * keep / n
        })
        .collect();
    let gxt = gx.iter().map(|v| -v).collect();
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data: gx,
        },
        Tensor {
            shape: x.shape.clone(),
            data: gxt,
        },
    ))
}

pub fn total_loss(adv: f64, per: f64, sty: f64, rec: f64, w: &LossWeights) -> f64 {
    w.lambda_adv * adv + w.lambda_per * per + w.lambda_sty * sty + w.lambda_rec * rec
}

/// Kernels that [`grad_check`] can verify.
///
/// Input layouts:
/// * `Adversarial`: `[d_real, d_fake]`
/// * `Generator`: `[d_fake]`
/// * `Perceptual`, `Style`: `[x_1..x_L, x~_1..x~_L]`
/// * `Gram`: `[feat, weights]`, checking `sum(weights * gram(feat))` in `feat`
/// * `Reconstruction`: `[x, x~, m]`, differentiated in `x` and `x~`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKernel {
    Adversarial { gamma: f64 },
    Generator,
    Perceptual,
    Style,
    Gram,
    Reconstruction,
}

impl std::str::FromStr for LossKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "adversarial" => Self::Adversarial {
                gamma: LossWeights::default().gamma,
            },
            "generator" => Self::Generator,
            "perceptual" => Self::Perceptual,
            "style" => Self::Style,
            "gram" => Self::Gram,
            "reconstruction" => Self::Reconstruction,
            other => return Err(Error::Config(format!("unknown loss kernel `{other}`"))),
        })
    }
}

fn split_stacks(inputs: &[Tensor]) -> Result<(&[Tensor], &[Tensor])> {
    if inputs.is_empty() || !inputs.len().is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "expected an even, non-zero number of feature maps, got {}",
            inputs.len()
        )));
    }
    Ok(inputs.split_at(inputs.len() / 2))
}

fn expect_inputs(inputs: &[Tensor], n: usize, kernel: &str) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{kernel} takes {n} tensors, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

impl LossKernel {
    pub fn value(&self, inputs: &[Tensor]) -> Result<f64> {
        match *self {
            Self::Adversarial { gamma } => {
                expect_inputs(inputs, 2, "adversarial")?;
                adversarial_loss(&inputs[0], &inputs[1], gamma)
            }
            Self::Generator => {
                expect_inputs(inputs, 1, "generator")?;
                generator_adv_loss(&inputs[0])
            }
            Self::Perceptual => {
                let (a, b) = split_stacks(inputs)?;
                perceptual_loss(a, b)
            }
            Self::Style => {
                let (a, b) = split_stacks(inputs)?;
                style_loss(a, b)
            }
            Self::Gram => {
                expect_inputs(inputs, 2, "gram")?;
                let g = gram(&inputs[0])?;
                g.same_shape(&inputs[1], "gram weights")?;
                Ok(g.data.iter().zip(&inputs[1].data).map(|(p, q)| p * q).sum())
            }
            Self::Reconstruction => {
                expect_inputs(inputs, 3, "reconstruction")?;
                reconstruction_loss(&inputs[0], &inputs[1], &inputs[2])
            }
        }
    }

    /// Analytic gradient per input; `None` for inputs held fixed.
    pub fn gradient(&self, inputs: &[Tensor]) -> Result<Vec<Option<Tensor>>> {
        Ok(match *self {
            Self::Adversarial { gamma } => {
                expect_inputs(inputs, 2, "adversarial")?;
                let (a, b) = adversarial_grad(&inputs[0], &inputs[1], gamma)?;
                vec![Some(a), Some(b)]
            }
            Self::Generator => {
                expect_inputs(inputs, 1, "generator")?;
                vec![Some(generator_adv_grad(&inputs[0])?)]
            }
            Self::Perceptual | Self::Style => {
                let (a, b) = split_stacks(inputs)?;
                let (ga, gb) = if *self == Self::Perceptual {
                    perceptual_grad(a, b)?
                } else {
                    style_grad(a, b)?
                };
                ga.into_iter().chain(gb).map(Some).collect()
            }
            Self::Gram => {
                expect_inputs(inputs, 2, "gram")?;
                vec![Some(gram_vjp(&inputs[0], &inputs[1])?), None]
            }
            Self::Reconstruction => {
                expect_inputs(inputs, 3, "reconstruction")?;
                let (a, b) = reconstruction_grad(&inputs[0], &inputs[1], &inputs[2])?;
                vec![Some(a), Some(b), None]
            }
        })
    }

    /// Rejects inputs within `10 * eps` of a non-differentiable point.
    pub fn check_kinks(&self, inputs: &[Tensor], eps: f64) -> Result<()> {
        let margin = 10.0 * eps;
        match *self {
            Self::Adversarial { .. } | Self::Generator => {
                for t in inputs {
                    check_probabilities(t)?;
                    if let Some(d) = t.data.iter().find(|&&d| d < margin || d > 1.0 - margin) {
                        return Err(Error::KinkDetected(format!("probability {d} near the log singularity")));
                    }
                }
                Ok(())
            }
            Self::Perceptual => {
                let (a, b) = split_stacks(inputs)?;
                check_stacks(a, b)?;
                for (x, y) in a.iter().zip(b) {
                    near_kink(margin, x.data.iter().zip(&y.data).map(|(p, q)| p - q), "feature")?;
                }
                Ok(())
            }
            Self::Style => {
                let (a, b) = split_stacks(inputs)?;
                check_stacks(a, b)?;
                for (x, y) in a.iter().zip(b) {
                    let (gx, gy) = (gram(x)?, gram(y)?);
                    near_kink(margin, gx.data.iter().zip(&gy.data).map(|(p, q)| p - q), "Gram")?;
                }
                Ok(())
            }
            Self::Gram => Ok(()),
            Self::Reconstruction => {
                expect_inputs(inputs, 3, "reconstruction")?;
                let (x, xt, m) = (&inputs[0], &inputs[1], &inputs[2]);
                let (stride, _) = reconstruction_setup(x, xt, m)?;
                near_kink(
                    margin,
                    (0..x.len())
                        .filter(|&i| 1.0 - m.data[i % stride] != 0.0)
                        .map(|i| x.data[i] - xt.data[i]),
                    "pixel",
                )
            }
        }
    }
}

fn near_kink(margin: f64, mut diffs: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    match diffs.find(|d| d.abs() < margin) {
        Some(d) => Err(Error::KinkDetected(format!("{what} difference {d:e} below {margin:e}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub value: f64,
    pub max_rel_error: f64,
    /// Number of input elements compared.
    pub checked: usize,
}

/// Floor of the relative-error denominator, so exact zeros compare as 0.
const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares analytic gradients with central differences
/// `(f(x + eps) - f(x - eps)) / (2 eps)` element by element.
pub fn grad_check(kernel: &LossKernel, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport> {
    kernel.check_kinks(inputs, eps)?;
    let value = kernel.value(inputs)?;
    let grads = kernel.gradient(inputs)?;
    let mut work = inputs.to_vec();
    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    for (t, grad) in grads.iter().enumerate() {
        let Some(grad) = grad else { continue };
        for i in 0..work[t].len() {
            let orig = work[t].data[i];
            work[t].data[i] = orig + eps;
            let plus = kernel.value(&work)?;
            work[t].data[i] = orig - eps;
            let minus = kernel.value(&work)?;
            work[t].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grad.data[i];
            let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            max_rel_error = max_rel_error.max((analytic - numeric).abs() / denom);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        value,
        max_rel_error,
        checked,
    })
}

/// Draws a random kink-free input set for `kernel`, resampling until
/// [`LossKernel::check_kinks`] accepts it at `eps`.
pub fn random_instance<R: Rng + ?Sized>(kernel: &LossKernel, eps: f64, rng: &mut R) -> Vec<Tensor> {
    let feature_map = |rng: &mut R, shape: &[usize]| Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0));
    loop {
        let inputs = match kernel {
            LossKernel::Adversarial { .. } | LossKernel::Generator => {
                let count = if matches!(kernel, LossKernel::Generator) { 1 } else { 2 };
                (0..count)
                    .map(|_| {
                        let n = rng.random_range(1..=16);
                        Tensor::from_fn(vec![n], |_| rng.random_range(0.02..0.98))
                    })
                    .collect()
            }
            LossKernel::Perceptual | LossKernel::Style => {
                let shapes: Vec<[usize; 3]> = (0..rng.random_range(1..=3))
                    .map(|_| [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)])
                    .collect();
                let mut stack: Vec<Tensor> = shapes.iter().map(|s| feature_map(rng, s)).collect();
                stack.extend(shapes.iter().map(|s| feature_map(rng, s)).collect::<Vec<_>>());
                stack
            }
            LossKernel::Gram => {
                let shape = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
                let c = shape[0];
                vec![feature_map(rng, &shape), feature_map(rng, &[c, c])]
            }
            LossKernel::Reconstruction => {
                let shape = [rng.random_range(1..=3), rng.random_range(1..=6), rng.random_range(1..=6)];
                let x = Tensor::from_fn(shape.to_vec(), |_| rng.random_range(0.0..255.0));
                let xt = Tensor::from_fn(shape.to_vec(), |_| rng.random_range(0.0..255.0));
                let m = Tensor::from_fn(vec![shape[1], shape[2]], |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
                vec![x, xt, m]
            }
        };
        if kernel.check_kinks(&inputs, eps).is_ok() {
            return inputs;
        }
    }
}
