use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{self, ConvSpec};
use super::tensor::{Shape, Tensor};

const NORM_EPS: f64 = 1e-5;

/// Declarative description of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { name: String, conv: ConvSpec },
    ConvTranspose { name: String, conv: ConvSpec },
    InstanceNorm,
    LeakyRelu { slope: f32 },
    Tanh,
    Residual { name: String, body: Vec<LayerSpec> },
    /// Adds the input to the body's output without namespacing the body's parameters.
    Skip { body: Vec<LayerSpec> },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvTranspose { .. } => "conv_transpose",
            LayerSpec::InstanceNorm => "instance_norm",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Residual { .. } => "residual",
            LayerSpec::Skip { .. } => "skip",
        }
    }
}

/// A named, shaped parameter tensor stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
}

#[derive(Clone, Debug)]
enum Layer {
    Conv {
        conv: ConvSpec,
        transposed: bool,
        weight: usize,
        bias: usize,
    },
    InstanceNorm,
    LeakyRelu(f32),
    Tanh,
    Residual(Vec<Layer>),
}

enum Cache {
    Input(Tensor),
    Norm { normalized: Tensor, inv_std: Vec<f32> },
    Output(Tensor),
    Residual(Vec<Cache>),
}

/// Activations recorded by a training-mode forward pass.
pub struct Tape(Vec<Cache>);

/// Parameter gradients, index-aligned with [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f32>>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(net.params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    pub fn reset(&mut self) {
        for g in &mut self.0 {
            g.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Feed-forward network of convolutions, normalisations and activations
/// with residual sub-blocks.
#[derive(Clone, Debug)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: Vec<Param>,
}

impl Network {
    /// Builds the network with weights drawn from N(0, `init_std`) and zero biases.
    pub fn new<R: Rng>(specs: Vec<LayerSpec>, init_std: f32, rng: &mut R) -> Self {
        let normal = Normal::new(0.0f32, init_std).expect("finite init std");
        let mut params = Vec::new();
        let layers = build(&specs, "", &mut params, &mut |n| {
            (0..n).map(|_| normal.sample(rng)).collect()
        });
        Self {
            specs,
            layers,
            params,
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Kinds of every layer, residual bodies flattened in order.
    pub fn layer_kinds(&self) -> Vec<&'static str> {
        fn walk(specs: &[LayerSpec], out: &mut Vec<&'static str>) {
            for s in specs {
                out.push(s.kind());
                if let LayerSpec::Residual { body, .. } | LayerSpec::Skip { body } = s {
                    walk(body, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.specs, &mut out);
        out
    }

    /// Shape produced for `input`, or `None` when it cannot be processed.
    pub fn output_shape(&self, input: Shape) -> Option<Shape> {
        shape_through(&self.layers, input)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = forward_layer(layer, &self.params, cur, None);
        }
        cur
    }

    pub fn forward_with_tape(&self, x: &Tensor) -> (Tensor, Tape) {
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = forward_layer(layer, &self.params, cur, Some(&mut tape));
        }
        (cur, Tape(tape))
    }

    /// Propagates `dy` back through the recorded pass. Parameter gradients are
    /// accumulated into `grads` when given; the input gradient is returned when
    /// `need_dx` is set.
    pub fn backward(
        &self,
        tape: &Tape,
        dy: Tensor,
        mut grads: Option<&mut Gradients>,
        need_dx: bool,
    ) -> Option<Tensor> {
        backward_layers(
            &self.layers,
            &tape.0,
            &self.params,
            dy,
            grads.as_deref_mut(),
            need_dx,
        )
    }
}

fn build(
    specs: &[LayerSpec],
    prefix: &str,
    params: &mut Vec<Param>,
    sample: &mut dyn FnMut(usize) -> Vec<f32>,
) -> Vec<Layer> {
    specs
        .iter()
        .map(|spec| match spec {
            LayerSpec::Conv { name, conv } | LayerSpec::ConvTranspose { name, conv } => {
                let transposed = matches!(spec, LayerSpec::ConvTranspose { .. });
                let full = format!("{prefix}{name}");
                params.push(Param {
                    name: format!("{full}.weight"),
                    shape: conv.weight_shape(transposed),
                    value: sample(conv.weight_len()),
                });
                params.push(Param {
                    name: format!("{full}.bias"),
                    shape: vec![conv.out_channels],
                    value: vec![0.0; conv.out_channels],
                });
                Layer::Conv {
                    conv: *conv,
                    transposed,
                    weight: params.len() - 2,
                    bias: params.len() - 1,
                }
            }
            LayerSpec::InstanceNorm => Layer::InstanceNorm,
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(*slope),
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Residual { name, body } => {
                Layer::Residual(build(body, &format!("{prefix}{name}."), params, sample))
            }
            LayerSpec::Skip { body } => Layer::Residual(build(body, prefix, params, sample)),
        })
        .collect()
}

fn shape_through(layers: &[Layer], mut shape: Shape) -> Option<Shape> {
    for layer in layers {
        shape = match layer {
            Layer::Conv {
                conv, transposed, ..
            } => conv.output_shape(shape, *transposed)?,
            Layer::Residual(body) => {
                let inner = shape_through(body, shape)?;
                if inner != shape {
                    return None;
                }
                shape
            }
            _ => shape,
        };
    }
    Some(shape)
}

fn forward_layer(layer: &Layer, params: &[Param], x: Tensor, tape: Option<&mut Vec<Cache>>) -> Tensor {
    match layer {
        Layer::Conv {
            conv,
            transposed,
            weight,
            bias,
        } => {
            let (w, b) = (&params[*weight].value, &params[*bias].value);
            let y = if *transposed {
                conv::conv_transpose2d(&x, conv, w, b)
            } else {
                conv::conv2d(&x, conv, w, b)
            };
            if let Some(t) = tape {
                t.push(Cache::Input(x));
            }
            y
        }
        Layer::InstanceNorm => {
            let (y, inv_std) = instance_norm(x);
            if let Some(t) = tape {
                t.push(Cache::Norm {
                    normalized: y.clone(),
                    inv_std,
                });
            }
            y
        }
        Layer::LeakyRelu(slope) => {
            let y = x.map(|v| if v > 0.0 { v } else { v * slope });
            if let Some(t) = tape {
                t.push(Cache::Input(x));
            }
            y
        }
        Layer::Tanh => {
            let y = x.map(f32::tanh);
            if let Some(t) = tape {
                t.push(Cache::Output(y.clone()));
            }
            y
        }
        Layer::Residual(body) => {
            let mut inner_tape = tape.is_some().then(Vec::new);
            let mut cur = x.clone();
            for l in body {
                cur = forward_layer(l, params, cur, inner_tape.as_mut());
            }
            cur.add_assign(&x);
            if let (Some(t), Some(inner)) = (tape, inner_tape) {
                t.push(Cache::Residual(inner));
            }
            cur
        }
    }
}

fn instance_norm(mut x: Tensor) -> (Tensor, Vec<f32>) {
    let plane = x.shape().plane();
    let mut inv_stds = Vec::with_capacity(x.shape().n * x.shape().c);
    for ch in x.data_mut().chunks_mut(plane) {
        let n = ch.len() as f64;
        let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = ch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + NORM_EPS).sqrt();
        for v in ch.iter_mut() {
            *v = ((*v as f64 - mean) * inv_std) as f32;
        }
        inv_stds.push(inv_std as f32);
    }
    (x, inv_stds)
}

fn backward_layers(
    layers: &[Layer],
    caches: &[Cache],
    params: &[Param],
    mut dy: Tensor,
    mut grads: Option<&mut Gradients>,
    need_dx: bool,
) -> Option<Tensor> {
    debug_assert_eq!(layers.len(), caches.len());
    for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        let want_dx = need_dx || i > 0;
        let next = match (layer, cache) {
            (
                Layer::Conv {
                    conv,
                    transposed,
                    weight,
                    bias,
                },
                Cache::Input(x),
            ) => {
                let w = &params[*weight].value;
                let pair = grads.as_deref_mut().map(|g| {
                    let (lo, hi) = g.0.split_at_mut(*bias);
                    (lo[*weight].as_mut_slice(), hi[0].as_mut_slice())
                });
                if *transposed {
                    conv::conv_transpose2d_backward(x, &dy, conv, w, pair, want_dx)
                } else {
                    conv::conv2d_backward(x, &dy, conv, w, pair, want_dx)
                }
            }
            (Layer::InstanceNorm, Cache::Norm { normalized, inv_std }) => {
                let plane = dy.shape().plane();
                let n = plane as f64;
                for ((g, y), s) in dy
                    .data_mut()
                    .chunks_mut(plane)
                    .zip(normalized.data().chunks(plane))
                    .zip(inv_std)
                {
                    let mean_g = g.iter().map(|&v| v as f64).sum::<f64>() / n;
                    let mean_gy = g
                        .iter()
                        .zip(y)
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum::<f64>()
                        / n;
                    for (gv, &yv) in g.iter_mut().zip(y) {
                        *gv = (*s as f64 * (*gv as f64 - mean_g - yv as f64 * mean_gy)) as f32;
                    }
                }
                Some(dy)
            }
            (Layer::LeakyRelu(slope), Cache::Input(x)) => {
                for (g, &v) in dy.data_mut().iter_mut().zip(x.data()) {
                    if v <= 0.0 {
                        *g *= slope;
                    }
                }
                Some(dy)
            }
            (Layer::Tanh, Cache::Output(y)) => {
                for (g, &v) in dy.data_mut().iter_mut().zip(y.data()) {
                    *g *= 1.0 - v * v;
                }
                Some(dy)
            }
            (Layer::Residual(body), Cache::Residual(inner)) => {
                let mut through = backward_layers(body, inner, params, dy.clone(), grads.as_deref_mut(), true)
                    .expect("residual body always yields an input gradient");
                through.add_assign(&dy);
                Some(through)
            }
            _ => unreachable!("tape does not match network layout"),
        };
        match next {
            Some(t) => dy = t,
            None => return None,
        }
    }
    need_dx.then_some(dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> Network {
        let conv = |name: &str, i, o| LayerSpec::Conv {
            name: name.into(),
            conv: ConvSpec { in_channels: i, out_channels: o, kernel: 3, stride: 1, pad: 1 },
        };
        let specs = vec![
            conv("stem", 2, 3),
            LayerSpec::InstanceNorm,
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Residual {
                name: "res".into(),
                body: vec![conv("a", 3, 3), LayerSpec::InstanceNorm, LayerSpec::LeakyRelu { slope: 0.2 }],
            },
            LayerSpec::ConvTranspose {
                name: "up".into(),
                conv: ConvSpec { in_channels: 3, out_channels: 2, kernel: 4, stride: 2, pad: 1 },
            },
            LayerSpec::Tanh,
        ];
        Network::new(specs, 0.5, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn param_names_follow_layer_nesting() {
        let net = small_net(0);
        let names: Vec<_> = net.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["stem.weight", "stem.bias", "res.a.weight", "res.a.bias", "up.weight", "up.bias"]
        );
        assert_eq!(net.params()[4].shape, vec![3, 2, 4, 4]);
        assert_eq!(net.output_shape(Shape::new(1, 2, 5, 6)), Some(Shape::new(1, 2, 10, 12)));
        assert_eq!(net.output_shape(Shape::new(1, 3, 5, 6)), None);
    }

    #[test]
    fn tape_forward_equals_plain_forward() {
        let net = small_net(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Shape::new(2, 2, 5, 4);
        let x = Tensor::from_vec(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (y, _) = net.forward_with_tape(&x);
        assert_eq!(y, net.forward(&x));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut net = small_net(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = Shape::new(1, 2, 4, 5);
        let x = Tensor::from_vec(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let probe = {
            let y = net.forward(&x);
            Tensor::from_vec(y.shape(), (0..y.shape().len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let objective = |net: &Network| -> f64 {
            net.forward(&x).data().iter().zip(probe.data()).map(|(a, b)| (a * b) as f64).sum()
        };
        let (_, tape) = net.forward_with_tape(&x);
        let mut grads = Gradients::zeros_like(&net);
        let dx = net.backward(&tape, probe.clone(), Some(&mut grads), true).unwrap();

        let eps = 1e-2f32;
        for pi in 0..net.params().len() {
            for j in 0..net.params()[pi].value.len() {
                let orig = net.params()[pi].value[j];
                net.params_mut()[pi].value[j] = orig + eps;
                let up = objective(&net);
                net.params_mut()[pi].value[j] = orig - eps;
                let down = objective(&net);
                net.params_mut()[pi].value[j] = orig;
                let fd = (up - down) / (2.0 * eps as f64);
                let an = grads.0[pi][j] as f64;
                assert!((fd - an).abs() < 2e-3 + 1e-2 * an.abs(), "{} [{j}]: fd {fd} vs {an}", net.params()[pi].name);
            }
        }
        let mut xp = x.clone();
        for j in 0..x.data().len() {
            let orig = xp.data()[j];
            xp.data_mut()[j] = orig + eps;
            let up: f64 = net.forward(&xp).data().iter().zip(probe.data()).map(|(a, b)| (a * b) as f64).sum();
            xp.data_mut()[j] = orig - eps;
            let down: f64 = net.forward(&xp).data().iter().zip(probe.data()).map(|(a, b)| (a * b) as f64).sum();
            xp.data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * eps as f64);
            let an = dx.data()[j] as f64;
            assert!((fd - an).abs() < 2e-3 + 1e-2 * an.abs(), "dx[{j}]: fd {fd} vs {an}");
        }
    }
}
