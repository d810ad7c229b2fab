use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Network layout. A `Mlp` with no hidden layers is multinomial logistic
/// regression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// conv -> relu -> pool -> conv -> relu -> pool -> dense -> relu -> dense
    Cnn {
        channels: usize,
        height: usize,
        width: usize,
        conv_channels: [usize; 2],
        kernel: usize,
        dense_hidden: usize,
        classes: usize,
    },
}

impl Architecture {
    pub fn logistic(input_dim: usize, classes: usize) -> Self {
        Architecture::Mlp {
            input_dim,
            hidden: Vec::new(),
            classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Self {
        Architecture::Mlp {
            input_dim,
            hidden: hidden.to_vec(),
            classes,
        }
    }

    /// Two hidden ReLU layers of width 64.
    pub fn default_mlp(input_dim: usize, classes: usize) -> Self {
        Self::mlp(input_dim, &[64, 64], classes)
    }

    /// Four hidden ReLU layers of width 128.
    pub fn deeper_mlp(input_dim: usize, classes: usize) -> Self {
        Self::mlp(input_dim, &[128, 128, 128, 128], classes)
    }

    pub fn small_cnn(channels: usize, height: usize, width: usize, classes: usize) -> Self {
        Architecture::Cnn {
            channels,
            height,
            width,
            conv_channels: [4, 8],
            kernel: 3,
            dense_hidden: 32,
            classes,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Mlp { classes, .. } | Architecture::Cnn { classes, .. } => *classes,
        }
    }

    /// Flat feature length of one input sample.
    pub fn input_len(&self) -> usize {
        match self {
            Architecture::Mlp { input_dim, .. } => *input_dim,
            Architecture::Cnn {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
        }
    }

    fn cnn_flat_len(&self) -> Result<usize> {
        let Architecture::Cnn {
            height,
            width,
            conv_channels,
            kernel,
            ..
        } = self
        else {
            unreachable!()
        };
        let stage = |s: usize| -> Option<usize> {
            let c = s.checked_sub(kernel - 1)?;
            (c / 2 > 0).then_some(c / 2)
        };
        let h = stage(*height).and_then(stage);
        let w = stage(*width).and_then(stage);
        match (h, w) {
            (Some(h), Some(w)) => Ok(conv_channels[1] * h * w),
            _ => Err(Error::config(
                "model",
                format!("input {height}x{width} too small for kernel {kernel} with two pooling stages"),
            )),
        }
    }

    /// Shapes of every parameter tensor, in forward order.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        match self {
            Architecture::Mlp {
                input_dim,
                hidden,
                classes,
            } => {
                if *input_dim == 0 || *classes == 0 || hidden.contains(&0) {
                    return Err(Error::config("model", "layer widths must be positive"));
                }
                let mut widths = vec![*input_dim];
                widths.extend(hidden);
                widths.push(*classes);
                Ok(widths
                    .windows(2)
                    .flat_map(|w| [vec![w[0], w[1]], vec![w[1]]])
                    .collect())
            }
            Architecture::Cnn {
                channels,
                conv_channels,
                kernel,
                dense_hidden,
                classes,
                ..
            } => {
                if *channels == 0 || *kernel == 0 || *dense_hidden == 0 || *classes == 0 || conv_channels.contains(&0) {
                    return Err(Error::config("model", "layer sizes must be positive"));
                }
                let flat = self.cnn_flat_len()?;
                let [c1, c2] = *conv_channels;
                Ok(vec![
                    vec![c1, *channels, *kernel, *kernel],
                    vec![c1],
                    vec![c2, c1, *kernel, *kernel],
                    vec![c2],
                    vec![flat, *dense_hidden],
                    vec![*dense_hidden],
                    vec![*dense_hidden, *classes],
                    vec![*classes],
                ])
            }
        }
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

/// Differentiable classifier: an architecture plus its parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskModel {
    arch: Architecture,
    params: Vec<Tensor>,
}

impl TaskModel {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights
    /// and biases alike.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let mut rng = stream(seed, "init", 0);
        let mut params = Vec::with_capacity(shapes.len());
        for pair in shapes.chunks(2) {
            let w = &pair[0];
            let fan_in: usize = if w.len() == 4 { w[1] * w[2] * w[3] } else { w[0] };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for shape in pair {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                params.push(Tensor::from_parts(shape.clone(), data));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn from_flat(arch: Architecture, flat: &[f64]) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if total != flat.len() {
            return Err(Error::Dimension {
                expected: total,
                got: flat.len(),
            });
        }
        let mut offset = 0;
        let params = shapes
            .into_iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let t = Tensor::from_parts(shape, flat[offset..offset + n].to_vec());
                offset += n;
                t
            })
            .collect();
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.arch.classes()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Parameter range of the final dense layer inside the flat vector.
    pub fn last_layer_range(&self) -> std::ops::Range<usize> {
        let n = self.param_count();
        let k = self.params[self.params.len() - 2].numel() + self.params[self.params.len() - 1].numel();
        n - k..n
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.params {
            out.extend_from_slice(p.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.numel();
            p.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Records parameters on `tape` as gradient-requiring leaves.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Records parameters as constants (no gradient).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    /// Binds only the final dense layer as gradient leaves; earlier layers
    /// are constants, so backward stops at the last hidden activation.
    pub fn bind_last_layer(&self, tape: &mut Tape) -> Vec<Var> {
        let split = self.params.len() - 2;
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| if i < split { tape.constant(p.clone()) } else { tape.param(p.clone()) })
            .collect()
    }

    /// Logits `[batch, classes]` for `batch` flat samples in `x`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &[f64], batch: usize) -> Result<Var> {
        let len = self.input_len();
        if batch == 0 || x.len() != batch * len {
            return Err(Error::Shape {
                op: "forward",
                shapes: vec![vec![x.len()], vec![batch, len]],
            });
        }
        match &self.arch {
            Architecture::Mlp { .. } => {
                let mut h = tape.constant(Tensor::from_parts(vec![batch, len], x.to_vec()));
                let layers = params.len() / 2;
                for l in 0..layers {
                    let z = tape.matmul(h, params[2 * l])?;
                    h = tape.add_row(z, params[2 * l + 1])?;
                    if l + 1 < layers {
                        h = tape.relu(h);
                    }
                }
                Ok(h)
            }
            Architecture::Cnn {
                channels,
                height,
                width,
                ..
            } => {
                let input = tape.constant(Tensor::from_parts(vec![batch, *channels, *height, *width], x.to_vec()));
                let c1 = tape.conv2d(input, params[0], params[1])?;
                let r1 = tape.relu(c1);
                let p1 = tape.max_pool2(r1)?;
                let c2 = tape.conv2d(p1, params[2], params[3])?;
                let r2 = tape.relu(c2);
                let p2 = tape.max_pool2(r2)?;
                let flat_len = tape.value(p2).numel() / batch;
                let flat = tape.reshape(p2, vec![batch, flat_len])?;
                let d1 = tape.matmul(flat, params[4])?;
                let d1 = tape.add_row(d1, params[5])?;
                let h = tape.relu(d1);
                let d2 = tape.matmul(h, params[6])?;
                tape.add_row(d2, params[7])
            }
        }
    }

    /// Logits without recording gradients.
    pub fn logits(&self, x: &[f64], batch: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &params, x, batch)?;
        Ok(tape.value(out).clone())
    }
}
