//! A small scalar-output multilayer perceptron: tanh hidden layers, identity
//! output, squared-error backpropagation and plain gradient descent.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tabular::agent_rng;

/// Layer widths `[n0, n1, ..., nL]` with `nL = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("a network needs at least an input and an output layer".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::Config("the output layer must have exactly one unit".into()));
        }
        Ok(Self { sizes })
    }

    /// `input -> hidden x n_hidden -> 1`.
    pub fn uniform(input: usize, n_hidden: usize, units: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(units, n_hidden));
        sizes.push(1);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Affine map `outputs x inputs`, weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Loss gradients, shaped like the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|&g| g == 0.0)
    }
}

/// Pre-activations and activations of every layer from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry holds the output.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases 0.
    pub fn init(spec: &LayerSpec, seed: u64) -> Self {
        Self::init_with_rng(spec, &mut agent_rng(seed))
    }

    pub fn init_with_rng<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut layer = Dense::zeros(fan_in, fan_out);
                for w in &mut layer.weights {
                    *w = rng.gen_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            layers: spec
                .sizes
                .windows(2)
                .map(|p| Dense::zeros(p[0], p[1]))
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Usage("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs || l.inputs == 0 {
                return Err(Error::Usage(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Usage(format!("layer {i} does not chain onto layer {}", i - 1)));
            }
        }
        if layers.last().unwrap().outputs != 1 {
            return Err(Error::Usage("output layer must have one unit".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn spec(&self) -> LayerSpec {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        LayerSpec { sizes }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn n_params(&self) -> usize {
        self.params().count()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Usage(format!(
                "network expects {} inputs, got {}",
                self.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Output value only.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if i < last {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(a[0])
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut activations = vec![x.to_vec()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(activations.last().unwrap());
            let a = if i < last {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        let out = activations.last().unwrap()[0];
        Ok((
            out,
            ForwardCache {
                activations,
                pre_activations,
            },
        ))
    }

    /// Gradients of `(output - target)^2`.
    pub fn backward(&self, cache: &ForwardCache, target: f64) -> Gradients {
        let n = self.layers.len();
        let out = cache.activations[n][0];
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect();
        // dL/dz for the current layer
        let mut delta = vec![2.0 * (out - target)];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            let g = &mut grads[l];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                for (i, a) in input.iter().enumerate() {
                    g.weights[o * layer.inputs + i] = d * a;
                }
            }
            if l > 0 {
                // previous layer is a tanh layer: d tanh(z) = 1 - tanh(z)^2
                delta = (0..layer.inputs)
                    .map(|i| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(o, d)| layer.weights[o * layer.inputs + i] * d)
                            .sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
        Gradients { layers: grads }
    }

    pub fn loss(&self, x: &[f64], target: f64) -> Result<f64> {
        let out = self.predict(x)?;
        Ok((out - target).powi(2))
    }

    /// `p <- p - lr * g` for every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        let shapes_match = grads.layers.len() == self.layers.len()
            && grads
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(g, l)| g.inputs == l.inputs && g.outputs == l.outputs);
        if !shapes_match {
            return Err(Error::Usage("gradient shapes do not match the network".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, d) in layer.params_mut().zip(g.params()) {
                *p -= lr * d;
            }
        }
        Ok(())
    }

    /// Weight `k` of layer `l` in row-major order, biases after the weights.
    fn param_mut(&mut self, l: usize, k: usize) -> &mut f64 {
        let layer = &mut self.layers[l];
        let n_w = layer.weights.len();
        if k < n_w {
            &mut layer.weights[k]
        } else {
            &mut layer.bias[k - n_w]
        }
    }

    /// Central-difference estimate of the squared-error gradient. Test oracle.
    pub fn finite_diff(&self, x: &[f64], target: f64, step: f64) -> Result<Gradients> {
        if !(step > 0.0) {
            return Err(Error::Usage("finite-difference step must be positive".into()));
        }
        self.check_input(x)?;
        let mut probe = self.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let mut g = Dense::zeros(self.layers[l].inputs, self.layers[l].outputs);
            let n_w = g.weights.len();
            for k in 0..n_w + g.bias.len() {
                let orig = *probe.param_mut(l, k);
                *probe.param_mut(l, k) = orig + step;
                let up = probe.loss(x, target)?;
                *probe.param_mut(l, k) = orig - step;
                let down = probe.loss(x, target)?;
                *probe.param_mut(l, k) = orig;
                *g.params_mut().nth(k).unwrap() = (up - down) / (2.0 * step);
            }
            layers.push(g);
        }
        Ok(Gradients { layers })
    }

    /// Text form: a `layers` line with the widths, then per layer a
    /// `weights <out> <in>` header followed by one row per output unit and a
    /// `bias` line. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sizes = self.spec().sizes;
        let _ = writeln!(
            out,
            "layers {}",
            sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
        );
        for layer in &self.layers {
            let _ = writeln!(out, "weights {} {}", layer.outputs, layer.inputs);
            for row in layer.weights.chunks_exact(layer.inputs) {
                let _ = writeln!(out, "{}", join_floats(row));
            }
            let _ = writeln!(out, "bias {}", join_floats(&layer.bias));
        }
        out
    }

    /// Parses [`Mlp::to_text`] output from a line iterator, consuming exactly
    /// the lines of one network.
    pub fn from_lines<I, S>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, S)>,
        S: AsRef<str>,
    {
        let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or_else(|| Error::Parse {
                row: 0,
                msg: format!("unexpected end of file, expected {expect}"),
            })?;
            Ok((no + 1, line.as_ref().split_whitespace().map(str::to_string).collect()))
        };
        let bad = |row: usize, msg: String| Error::Parse { row: row as u64, msg };
        let floats = |row: usize, toks: &[String]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|_| bad(row, format!("bad number {t:?}"))))
                .collect()
        };
        let (row, toks) = next("layers")?;
        if toks.first().map(String::as_str) != Some("layers") {
            return Err(bad(row, "expected a layers line".into()));
        }
        let sizes: Vec<usize> = toks[1..]
            .iter()
            .map(|t| t.parse().map_err(|_| bad(row, format!("bad layer size {t:?}"))))
            .collect::<Result<_>>()?;
        let spec = LayerSpec::new(sizes).map_err(|e| bad(row, e.to_string()))?;
        let mut layers = Vec::new();
        for pair in spec.sizes.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let (row, toks) = next("weights")?;
            if toks != ["weights".to_string(), outputs.to_string(), inputs.to_string()] {
                return Err(bad(row, format!("expected `weights {outputs} {inputs}`")));
            }
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let (row, toks) = next("weight row")?;
                if toks.len() != inputs {
                    return Err(bad(row, format!("expected {inputs} weights")));
                }
                weights.extend(floats(row, &toks)?);
            }
            let (row, toks) = next("bias")?;
            if toks.first().map(String::as_str) != Some("bias") || toks.len() != outputs + 1 {
                return Err(bad(row, format!("expected `bias` with {outputs} values")));
            }
            let bias = floats(row, &toks[1..])?;
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Mlp::from_layers(layers)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        Self::from_lines(&mut lines)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        Self::from_text(&lines.join("\n"))
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}
