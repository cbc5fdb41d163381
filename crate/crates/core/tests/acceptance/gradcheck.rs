//! Central finite differences against independent f64 forwards (nonlinear
//! ops) or against the op's own forward (linear ops, where the quadratic
//! probe loss makes central differences exact for any step).

use std::sync::Arc;

use lip_core::numerics::{Activation, NormKind, ResampleMode, RngStream, Tape, Tensor, Var};
use lip_core::Result;

use crate::Verdict;

const INSTANCES: usize = 20;
const TOLERANCE: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
type Reference = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

struct Case {
    inputs: Vec<Tensor>,
    build: Build,
    /// `None` marks a linear op checked against its own forward.
    reference: Option<Reference>,
}

fn random_tensor(rng: &mut RngStream, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let mut t = Tensor::zeros(shape.to_vec());
    rng.fill_uniform(t.data_mut(), lo, hi);
    t
}

/// Values bounded away from zero so kinks stay out of the difference stencil.
fn away_from_zero(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    let mut t = random_tensor(rng, shape, 0.05, 1.0);
    for v in t.data_mut() {
        if rng.bernoulli(0.5) {
            *v = -*v;
        }
    }
    t
}

fn forward_output(case: &Case, values: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = (case.build)(&mut tape, &vars)?;
    Ok(tape.value(y).clone())
}

fn probe_loss(y: &[f64], target: &[f64]) -> f64 {
    y.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Relative L2 error between the tape gradient and central differences of
/// `mean((op(x) - target)^2)` over every input element.
fn check(case: &Case, rng: &mut RngStream) -> Result<f64> {
    let y0 = forward_output(case, &case.inputs)?;
    let target: Vec<f64> = (0..y0.numel()).map(|_| f64::from(rng.uniform(-1.0, 1.0))).collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = (case.build)(&mut tape, &vars)?;
    let t = tape.constant(Tensor::new(y0.shape().to_vec(), target.iter().map(|&v| v as f32).collect())?);
    let loss = tape.mse(y, t, None)?;
    let grads = tape.backward(loss)?;

    let inputs64: Vec<Vec<f64>> = case.inputs.iter().map(|t| t.data().iter().map(|&v| f64::from(v)).collect()).collect();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; case.inputs[k].numel()]);
        for i in 0..case.inputs[k].numel() {
            let fd = match &case.reference {
                Some(reference) => {
                    let h = 1e-6;
                    let mut x = inputs64.clone();
                    x[k][i] += h;
                    let up = probe_loss(&reference(&x), &target);
                    x[k][i] -= 2.0 * h;
                    let down = probe_loss(&reference(&x), &target);
                    (up - down) / (2.0 * h)
                }
                None => {
                    let h = 0.5f32;
                    let eval = |delta: f32| -> Result<f64> {
                        let mut values = case.inputs.clone();
                        values[k].data_mut()[i] += delta;
                        let y = forward_output(case, &values)?;
                        Ok(probe_loss(&y.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>(), &target))
                    };
                    (eval(h)? - eval(-h)?) / (2.0 * f64::from(h))
                }
            };
            num += (f64::from(analytic[i]) - fd).powi(2);
            den += fd * fd;
        }
    }
    Ok(num.sqrt() / den.sqrt().max(1e-12))
}

fn conv_reference(x: &[f64], w: &[f64], b: Option<&[f64]>, dims: [usize; 4], o: usize, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let [n, c, h, wd] = dims;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for b_ in 0..n {
        for oc in 0..o {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = b.map_or(0.0, |b| b[oc]);
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w[((oc * c + ic) * k + ky) * k + kx]
                                    * x[((b_ * c + ic) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((b_ * o + oc) * ho + y) * wo + xx] = acc;
                }
            }
        }
    }
    out
}

fn norm_reference(x: &[f64], g: &[f64], b: &[f64], dims: [usize; 4], kind: NormKind) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let mut out = vec![0.0; x.len()];
    let groups: Vec<(usize, Vec<usize>)> = match kind {
        NormKind::BatchNorm => (0..c).map(|ch| (ch, (0..n).collect())).collect(),
        NormKind::ChannelNorm => (0..n).flat_map(|s| (0..c).map(move |ch| (ch, vec![s]))).collect(),
    };
    for (ch, samples) in groups {
        let idx: Vec<usize> = samples.iter().flat_map(|&s| ((s * c + ch) * plane..(s * c + ch + 1) * plane).collect::<Vec<_>>()).collect();
        let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
        let var = idx.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for &i in &idx {
            out[i] = g[ch] * (x[i] - mean) * inv + b[ch];
        }
    }
    out
}

fn conv_case(rng: &mut RngStream) -> Case {
    let n = 1 + rng.below(2);
    let c = 1 + rng.below(3);
    let o = 1 + rng.below(3);
    let k = [1, 3][rng.below(2)];
    let stride = 1 + rng.below(2);
    let pad = if k == 3 { rng.below(2) } else { 0 };
    let (h, w) = (4 + rng.below(3), 4 + rng.below(3));
    let bias = rng.bernoulli(0.5);
    let mut inputs = vec![random_tensor(rng, &[n, c, h, w], -1.0, 1.0), random_tensor(rng, &[o, c, k, k], -1.0, 1.0)];
    if bias {
        inputs.push(random_tensor(rng, &[o], -1.0, 1.0));
    }
    Case {
        inputs,
        build: Box::new(move |t, v| t.conv2d(v[0], v[1], v.get(2).copied(), stride, pad)),
        reference: Some(Box::new(move |x| conv_reference(&x[0], &x[1], x.get(2).map(Vec::as_slice), [n, c, h, w], o, k, stride, pad))),
    }
}

fn activation_case(rng: &mut RngStream, which: usize) -> Case {
    let slope = rng.uniform(0.01, 0.3);
    let kind = [Activation::LeakyRelu(slope), Activation::Relu, Activation::Sigmoid][which];
    let shape = [1, 1 + rng.below(3), 3, 3 + rng.below(3)];
    let inputs = vec![if which == 2 { random_tensor(rng, &shape, -4.0, 4.0) } else { away_from_zero(rng, &shape) }];
    let slope = f64::from(slope);
    Case {
        inputs,
        build: Box::new(move |t, v| t.activation(v[0], kind)),
        reference: Some(Box::new(move |x| {
            x[0].iter()
                .map(|&v| match which {
                    0 => if v > 0.0 { v } else { slope * v },
                    1 => v.max(0.0),
                    _ => 1.0 / (1.0 + (-v).exp()),
                })
                .collect()
        })),
    }
}

fn norm_case(rng: &mut RngStream, kind: NormKind) -> Case {
    let dims = [1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3)];
    let c = dims[1];
    Case {
        inputs: vec![random_tensor(rng, &dims, -2.0, 2.0), random_tensor(rng, &[c], 0.5, 1.5), random_tensor(rng, &[c], -0.5, 0.5)],
        build: Box::new(move |t, v| t.normalize(v[0], v[1], v[2], kind)),
        reference: Some(Box::new(move |x| norm_reference(&x[0], &x[1], &x[2], dims, kind))),
    }
}

fn resample_case(rng: &mut RngStream, mode: ResampleMode) -> Case {
    let (h, w) = (2 + rng.below(5), 2 + rng.below(5));
    let (oh, ow) = match mode {
        ResampleMode::Box => {
            let f = 1 + rng.below(2);
            return Case {
                inputs: vec![random_tensor(rng, &[1, 2, h * f, w * f], -1.0, 1.0)],
                build: Box::new(move |t, v| t.avg_pool(v[0], f)),
                reference: None,
            };
        }
        _ => (1 + rng.below(9), 1 + rng.below(9)),
    };
    let n = 1 + rng.below(2);
    Case {
        inputs: vec![random_tensor(rng, &[n, 2, h, w], -1.0, 1.0)],
        build: Box::new(move |t, v| t.resample(v[0], oh, ow, mode)),
        reference: None,
    }
}

fn structural_case(rng: &mut RngStream, which: usize) -> Case {
    let shape = [1, 1 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3)];
    match which {
        // concat
        0 => {
            let extra = 1 + rng.below(3);
            let mut other = shape;
            other[1] = extra;
            Case {
                inputs: vec![random_tensor(rng, &shape, -1.0, 1.0), random_tensor(rng, &other, -1.0, 1.0)],
                build: Box::new(|t, v| t.concat_channels(v)),
                reference: None,
            }
        }
        // add, with the second operand reused to exercise accumulation
        1 => Case {
            inputs: vec![random_tensor(rng, &shape, -1.0, 1.0), random_tensor(rng, &shape, -1.0, 1.0)],
            build: Box::new(|t, v| {
                let s = t.add(v[0], v[1])?;
                t.add(s, v[1])
            }),
            reference: Some(Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a + 2.0 * b).collect())),
        },
        // scale
        2 => {
            let f = rng.uniform(-2.0, 2.0);
            Case {
                inputs: vec![random_tensor(rng, &shape, -1.0, 1.0)],
                build: Box::new(move |t, v| t.scale(v[0], f)),
                reference: Some(Box::new(move |x| x[0].iter().map(|a| a * f64::from(f)).collect())),
            }
        }
        // sum
        3 => Case {
            inputs: vec![random_tensor(rng, &shape, -1.0, 1.0)],
            build: Box::new(|t, v| t.sum(v[0])),
            reference: Some(Box::new(|x| vec![x[0].iter().sum()])),
        },
        // mse, optionally weighted
        _ => {
            let n: usize = shape.iter().product();
            let weight: Option<Vec<f32>> = rng.bernoulli(0.5).then(|| {
                let mut w: Vec<f32> = (0..n).map(|_| if rng.bernoulli(0.6) { 1.0 } else { 0.0 }).collect();
                w[0] = 1.0;
                w
            });
            let w64: Option<Vec<f64>> = weight.as_ref().map(|w| w.iter().map(|&v| f64::from(v)).collect());
            let shared = weight.map(Arc::new);
            Case {
                inputs: vec![random_tensor(rng, &shape, -1.0, 1.0), random_tensor(rng, &shape, -1.0, 1.0)],
                build: Box::new(move |t, v| t.mse(v[0], v[1], shared.clone())),
                reference: Some(Box::new(move |x| {
                    let (mut total, mut support) = (0.0, 0.0);
                    for i in 0..x[0].len() {
                        let m = w64.as_ref().map_or(1.0, |w| w[i]);
                        total += m * (x[0][i] - x[1][i]).powi(2);
                        support += m;
                    }
                    vec![total / support]
                })),
            }
        }
    }
}

pub fn all_ops() -> Verdict {
    let mut rng = RngStream::new(2024, "gradcheck");
    type Maker = Box<dyn Fn(&mut RngStream) -> Case>;
    let ops: Vec<(&str, Maker)> = vec![
        ("conv2d", Box::new(conv_case)),
        ("leaky_relu", Box::new(|r: &mut RngStream| activation_case(r, 0))),
        ("relu", Box::new(|r: &mut RngStream| activation_case(r, 1))),
        ("sigmoid", Box::new(|r: &mut RngStream| activation_case(r, 2))),
        ("batch_norm", Box::new(|r: &mut RngStream| norm_case(r, NormKind::BatchNorm))),
        ("channel_norm", Box::new(|r: &mut RngStream| norm_case(r, NormKind::ChannelNorm))),
        ("bilinear", Box::new(|r: &mut RngStream| resample_case(r, ResampleMode::Bilinear))),
        ("nearest", Box::new(|r: &mut RngStream| resample_case(r, ResampleMode::Nearest))),
        ("lanczos", Box::new(|r: &mut RngStream| resample_case(r, ResampleMode::Lanczos))),
        ("avg_pool", Box::new(|r: &mut RngStream| resample_case(r, ResampleMode::Box))),
        ("concat", Box::new(|r: &mut RngStream| structural_case(r, 0))),
        ("add", Box::new(|r: &mut RngStream| structural_case(r, 1))),
        ("scale", Box::new(|r: &mut RngStream| structural_case(r, 2))),
        ("sum", Box::new(|r: &mut RngStream| structural_case(r, 3))),
        ("mse", Box::new(|r: &mut RngStream| structural_case(r, 4))),
    ];
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for (name, make) in &ops {
        for i in 0..INSTANCES {
            let case = make(&mut rng);
            match check(&case, &mut rng) {
                Ok(err) => {
                    if err > worst.0 {
                        worst = (err, name);
                    }
                    if !(err < TOLERANCE) {
                        failures.push(format!("{name}#{i} rel err {err:.2e}"));
                    }
                }
                Err(e) => failures.push(format!("{name}#{i}: {e}")),
            }
        }
    }
    let detail = format!(
        "{} ops x {INSTANCES} instances, worst rel err {:.2e} ({}){}",
        ops.len(),
        worst.0,
        worst.1,
        if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
    );
    Verdict::new(failures.is_empty(), detail)
}
