use std::ops::Range;

use crate::error::{Error, Result};

/// One layer of a feed-forward network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Valid (unpadded) 2-d convolution over a `(C, H, W)` input.
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling with stride equal to `kernel`.
    MaxPool {
        kernel: usize,
    },
    /// Fully connected layer over a flat input.
    Dense {
        out_dim: usize,
    },
    Relu,
    Flatten,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }
}

/// Location of one parametric layer's weights and biases inside the flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Validated layer graph. Construction computes every intermediate shape and
/// the canonical parameter layout, so a `ModelSpec` value is always
/// chain-compatible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    num_classes: usize,
    // shapes[0] is the input shape, shapes[i + 1] the output of layer i
    shapes: Vec<Vec<usize>>,
    slots: Vec<Option<ParamSlot>>,
    param_count: usize,
    tap: usize,
}

impl ModelSpec {
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>, num_classes: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidSpec {
                layer: 0,
                reason: format!("input shape {input_shape:?} must be nonempty and positive"),
            });
        }
        if num_classes == 0 {
            return Err(Error::InvalidSpec {
                layer: layers.len().saturating_sub(1),
                reason: "num_classes must be positive".into(),
            });
        }
        let Some(Layer::Dense { out_dim }) = layers.last() else {
            return Err(Error::InvalidSpec {
                layer: layers.len().saturating_sub(1),
                reason: "final layer must be Dense(num_classes)".into(),
            });
        };
        if *out_dim != num_classes {
            return Err(Error::InvalidSpec {
                layer: layers.len() - 1,
                reason: format!("final Dense has {out_dim} outputs, expected {num_classes}"),
            });
        }

        let mut shapes = vec![input_shape.clone()];
        let mut slots = Vec::with_capacity(layers.len());
        let mut offset = 0usize;
        for (idx, layer) in layers.iter().enumerate() {
            let input = shapes.last().expect("shapes starts nonempty");
            let bad = |reason: String| Error::InvalidSpec { layer: idx, reason };
            let (out, slot) = match *layer {
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let [c, h, w] = input[..] else {
                        return Err(bad(format!("conv2d needs a (C,H,W) input, got {input:?}")));
                    };
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("conv2d sizes must be positive".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(bad(format!("kernel {kernel} exceeds input {h}x{w}")));
                    }
                    let oh = (h - kernel) / stride + 1;
                    let ow = (w - kernel) / stride + 1;
                    let nw = out_channels * c * kernel * kernel;
                    let slot = ParamSlot {
                        weights: offset..offset + nw,
                        bias: offset + nw..offset + nw + out_channels,
                        fan_in: c * kernel * kernel,
                        fan_out: out_channels * kernel * kernel,
                    };
                    offset += nw + out_channels;
                    (vec![out_channels, oh, ow], Some(slot))
                }
                Layer::MaxPool { kernel } => {
                    let [c, h, w] = input[..] else {
                        return Err(bad(format!("maxpool needs a (C,H,W) input, got {input:?}")));
                    };
                    if kernel == 0 || kernel > h || kernel > w {
                        return Err(bad(format!("pool kernel {kernel} invalid for {h}x{w}")));
                    }
                    (vec![c, h / kernel, w / kernel], None)
                }
                Layer::Dense { out_dim } => {
                    let [fan_in] = input[..] else {
                        return Err(bad(format!("dense needs a flat input, got {input:?}")));
                    };
                    if out_dim == 0 {
                        return Err(bad("dense out_dim must be positive".into()));
                    }
                    let nw = out_dim * fan_in;
                    let slot = ParamSlot {
                        weights: offset..offset + nw,
                        bias: offset + nw..offset + nw + out_dim,
                        fan_in,
                        fan_out: out_dim,
                    };
                    offset += nw + out_dim;
                    (vec![out_dim], Some(slot))
                }
                Layer::Relu => (input.clone(), None),
                Layer::Flatten => (vec![input.iter().product()], None),
            };
            shapes.push(out);
            slots.push(slot);
        }

        let last = layers.len() - 1;
        let Some(hidden) = layers[..last]
            .iter()
            .rposition(|l| matches!(l, Layer::Dense { .. }))
        else {
            return Err(Error::InvalidSpec {
                layer: last,
                reason: "at least one hidden Dense layer is required".into(),
            });
        };
        // post-activation tap when the hidden dense feeds a ReLU
        let tap = if layers.get(hidden + 1) == Some(&Layer::Relu) {
            hidden + 1
        } else {
            hidden
        };

        Ok(Self {
            layers,
            input_shape,
            num_classes,
            shapes,
            slots,
            param_count: offset,
            tap,
        })
    }

    /// Conv(6,5x5)-ReLU-MaxPool(2)-Conv(16,5x5)-ReLU-MaxPool(2)-Flatten-
    /// Dense(120)-ReLU-Dense(84)-ReLU-Dense(classes).
    pub fn lenet(input_shape: [usize; 3], num_classes: usize) -> Result<Self> {
        use Layer::*;
        Self::new(
            vec![
                Conv2d {
                    out_channels: 6,
                    kernel: 5,
                    stride: 1,
                },
                Relu,
                MaxPool { kernel: 2 },
                Conv2d {
                    out_channels: 16,
                    kernel: 5,
                    stride: 1,
                },
                Relu,
                MaxPool { kernel: 2 },
                Flatten,
                Dense { out_dim: 120 },
                Relu,
                Dense { out_dim: 84 },
                Relu,
                Dense {
                    out_dim: num_classes,
                },
            ],
            input_shape.to_vec(),
            num_classes,
        )
    }

    /// Dense(64)-ReLU-Dense(32)-ReLU-Dense(classes), flattening any input.
    pub fn mlp_small(input_shape: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::mlp(input_shape, &[64, 32], num_classes)
    }

    pub fn mlp(input_shape: Vec<usize>, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::new();
        if input_shape.len() != 1 {
            layers.push(Layer::Flatten);
        }
        for &h in hidden {
            layers.push(Layer::Dense { out_dim: h });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense {
            out_dim: num_classes,
        });
        Self::new(layers, input_shape, num_classes)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Output shape of layer `i` (per sample).
    pub fn output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    pub fn input_shape_of(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn slot(&self, i: usize) -> Option<&ParamSlot> {
        self.slots[i].as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Index of the layer whose output is the representation Z.
    pub fn tap_layer(&self) -> usize {
        self.tap
    }

    pub fn representation_dim(&self) -> usize {
        self.shapes[self.tap + 1].iter().product()
    }

    /// First layer index at which two specs differ, if any.
    pub fn first_difference(&self, other: &ModelSpec) -> Option<usize> {
        if self.input_shape != other.input_shape {
            return Some(0);
        }
        let n = self.layers.len().max(other.layers.len());
        (0..n)
            .find(|&i| self.layers.get(i) != other.layers.get(i))
            .or_else(|| (self.num_classes != other.num_classes).then_some(n.saturating_sub(1)))
    }
}
