use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// Only valid on the final layer; its gradient is fused into the loss.
    Softmax,
}

/// One entry of the layer stack. Every convolution is valid-padded, stride 1,
/// and followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        name: String,
        filters: usize,
        kernel: usize,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    Dense {
        name: String,
        units: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    fn conv(name: &str, filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            name: name.into(),
            filters,
            kernel,
        }
    }

    fn dense(name: &str, units: usize, activation: Activation) -> Self {
        LayerSpec::Dense {
            name: name.into(),
            units,
            activation,
        }
    }
}

impl Hash for LayerSpec {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            LayerSpec::Conv {
                name,
                filters,
                kernel,
            } => (0u8, name, filters, kernel).hash(state),
            LayerSpec::MaxPool { size } => (1u8, size).hash(state),
            LayerSpec::Flatten => 2u8.hash(state),
            LayerSpec::Dense {
                name,
                units,
                activation,
            } => (3u8, name, units, activation).hash(state),
            LayerSpec::Dropout { rate } => (4u8, rate.to_bits()).hash(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Hash)]
pub struct ModelSpec {
    /// `[H, W, C]`
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// The reference network and the reduced verification variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    #[serde(rename = "lightpneumonet")]
    LightPneumoNet,
    Reduced,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::LightPneumoNet, Architecture::Reduced];

    pub fn spec(self) -> ModelSpec {
        match self {
            Architecture::LightPneumoNet => build_lightpneumonet(),
            Architecture::Reduced => build_reduced(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::LightPneumoNet => "lightpneumonet",
            Architecture::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Four blocks of (conv, conv, max-pool) with 16/32/64/128 filters, then a
/// 128-unit dense layer, dropout 0.2 and a 2-way softmax. Input 224×224×1.
pub fn build_lightpneumonet() -> ModelSpec {
    use Activation::*;
    ModelSpec {
        input: [224, 224, 1],
        layers: vec![
            LayerSpec::conv("conv1_1", 16, 5),
            LayerSpec::conv("conv1_2", 16, 5),
            LayerSpec::MaxPool { size: 3 },
            LayerSpec::conv("conv2_1", 32, 5),
            LayerSpec::conv("conv2_2", 32, 5),
            LayerSpec::MaxPool { size: 3 },
            LayerSpec::conv("conv3_1", 64, 3),
            LayerSpec::conv("conv3_2", 64, 3),
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv("conv4_1", 128, 3),
            LayerSpec::conv("conv4_2", 128, 3),
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::dense("dense1", 128, Relu),
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::dense("dense2", 2, Softmax),
        ],
    }
}

/// Same sixteen layer types and parameter names on a 20×20×1 input with
/// narrow layers; used for gradient checks and fast tests.
pub fn build_reduced() -> ModelSpec {
    use Activation::*;
    ModelSpec {
        input: [20, 20, 1],
        layers: vec![
            LayerSpec::conv("conv1_1", 4, 3),
            LayerSpec::conv("conv1_2", 4, 3),
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv("conv2_1", 8, 3),
            LayerSpec::conv("conv2_2", 8, 3),
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv("conv3_1", 8, 1),
            LayerSpec::conv("conv3_2", 8, 1),
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv("conv4_1", 8, 1),
            LayerSpec::conv("conv4_2", 8, 1),
            LayerSpec::MaxPool { size: 1 },
            LayerSpec::Flatten,
            LayerSpec::dense("dense1", 8, Relu),
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::dense("dense2", 2, Softmax),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    pub kind: &'static str,
    pub output: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    pub input: Vec<usize>,
    pub entries: Vec<TraceEntry>,
}

impl ShapeTrace {
    pub fn output(&self) -> &[usize] {
        self.entries
            .last()
            .map(|e| e.output.as_slice())
            .unwrap_or(&self.input)
    }

    pub fn flatten_len(&self) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.kind == "Flatten")
            .map(|e| e.output[0])
    }
}

/// Propagates the input shape through the stack:
/// conv `out = in − k + 1`, pool `out = ⌊(in − p)/p⌋ + 1`.
pub fn shape_trace(spec: &ModelSpec) -> Result<ShapeTrace> {
    if spec.input.contains(&0) {
        return Err(Error::Architecture(format!(
            "input shape {:?} has a zero dimension",
            spec.input
        )));
    }
    let mut shape = spec.input.to_vec();
    let mut entries = Vec::with_capacity(spec.layers.len());
    let mut pools = 0;
    let mut drops = 0;
    let last = spec.layers.len().saturating_sub(1);
    for (idx, layer) in spec.layers.iter().enumerate() {
        let entry = match layer {
            LayerSpec::Conv {
                name,
                filters,
                kernel,
            } => {
                let [h, w, c] = spatial(&shape, name)?;
                if *kernel == 0 || *filters == 0 {
                    return Err(Error::Architecture(format!("{name}: zero-sized conv")));
                }
                if h < *kernel || w < *kernel {
                    return Err(Error::Architecture(format!(
                        "{name}: input {h}x{w} smaller than kernel {kernel}x{kernel}"
                    )));
                }
                shape = vec![h - kernel + 1, w - kernel + 1, *filters];
                TraceEntry {
                    name: name.clone(),
                    kind: "Conv2D",
                    output: shape.clone(),
                    params: (kernel * kernel * c + 1) * filters,
                }
            }
            LayerSpec::MaxPool { size } => {
                pools += 1;
                let name = format!("pool{pools}");
                let [h, w, c] = spatial(&shape, &name)?;
                if *size == 0 || h < *size || w < *size {
                    return Err(Error::Architecture(format!(
                        "{name}: input {h}x{w} smaller than pool {size}x{size}"
                    )));
                }
                shape = vec![(h - size) / size + 1, (w - size) / size + 1, c];
                TraceEntry {
                    name,
                    kind: "MaxPool2D",
                    output: shape.clone(),
                    params: 0,
                }
            }
            LayerSpec::Flatten => {
                shape = vec![shape.iter().product()];
                TraceEntry {
                    name: "flatten".into(),
                    kind: "Flatten",
                    output: shape.clone(),
                    params: 0,
                }
            }
            LayerSpec::Dense {
                name,
                units,
                activation,
            } => {
                if shape.len() != 1 {
                    return Err(Error::Architecture(format!(
                        "{name}: dense layer needs a flat input, got {shape:?}"
                    )));
                }
                if *activation == Activation::Softmax && idx != last {
                    return Err(Error::Architecture(format!(
                        "{name}: softmax is only allowed on the final layer"
                    )));
                }
                let n_in = shape[0];
                shape = vec![*units];
                TraceEntry {
                    name: name.clone(),
                    kind: "Dense",
                    output: shape.clone(),
                    params: (n_in + 1) * units,
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::Architecture(format!(
                        "dropout rate {rate} outside [0,1)"
                    )));
                }
                drops += 1;
                TraceEntry {
                    name: if drops == 1 {
                        "dropout".into()
                    } else {
                        format!("dropout{drops}")
                    },
                    kind: "Dropout",
                    output: shape.clone(),
                    params: 0,
                }
            }
        };
        entries.push(entry);
    }
    Ok(ShapeTrace {
        input: spec.input.to_vec(),
        entries,
    })
}

fn spatial(shape: &[usize], name: &str) -> Result<[usize; 3]> {
    match *shape {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(Error::Architecture(format!(
            "{name}: needs an [H,W,C] input, got {shape:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    /// Storage at 32-bit precision.
    pub fn bytes_f32(&self) -> usize {
        self.total * 4
    }

    pub fn mib_f32(&self) -> f64 {
        self.bytes_f32() as f64 / (1024.0 * 1024.0)
    }
}

/// conv `(kh·kw·cin + 1)·cout`, dense `(n_in + 1)·n_out`.
pub fn count_params(spec: &ModelSpec) -> Result<ParamCount> {
    let trace = shape_trace(spec)?;
    let per_layer: Vec<(String, usize)> = trace
        .entries
        .into_iter()
        .filter(|e| e.params > 0)
        .map(|e| (e.name, e.params))
        .collect();
    let total = per_layer.iter().map(|(_, n)| n).sum();
    Ok(ParamCount { per_layer, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stack_layout() {
        let spec = build_lightpneumonet();
        assert_eq!(spec.layers.len(), 16);
        let convs = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
            .count();
        let pools = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::MaxPool { .. }))
            .count();
        let dense = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense { .. }))
            .count();
        assert_eq!((convs, pools, dense), (8, 4, 2));
        assert_eq!(spec.layers[0], LayerSpec::conv("conv1_1", 16, 5));
        assert_eq!(spec.layers[14], LayerSpec::Dropout { rate: 0.2 });
        assert_eq!(spec.input, [224, 224, 1]);
    }

    #[test]
    fn spatial_chain() {
        let trace = shape_trace(&build_lightpneumonet()).unwrap();
        let spatial: Vec<usize> = trace
            .entries
            .iter()
            .filter(|e| e.output.len() == 3)
            .map(|e| e.output[0])
            .collect();
        assert_eq!(spatial, [220, 216, 72, 68, 64, 21, 19, 17, 8, 6, 4, 2]);
        assert_eq!(trace.flatten_len(), Some(512));
        assert_eq!(trace.output(), &[2]);
        assert_eq!(
            trace
                .entries
                .iter()
                .find(|e| e.name == "dense1")
                .unwrap()
                .output,
            vec![128]
        );
    }

    #[test]
    fn too_small_input_is_architecture_error() {
        let mut spec = build_lightpneumonet();
        spec.input = [4, 4, 1];
        assert!(matches!(shape_trace(&spec), Err(Error::Architecture(_))));

        let single = ModelSpec {
            input: [224, 224, 1],
            layers: vec![LayerSpec::conv("c", 16, 5)],
        };
        assert_eq!(shape_trace(&single).unwrap().output(), &[220, 220, 16]);
    }

    #[test]
    fn parameter_totals() {
        let counts = count_params(&build_lightpneumonet()).unwrap();
        assert_eq!(counts.total, 388_082);
        assert_eq!(counts.per_layer[0], ("conv1_1".to_string(), 416));
        assert_eq!(counts.per_layer[9], ("dense2".to_string(), 258));
        assert_eq!(counts.bytes_f32(), 1_552_328);
        assert_eq!(format!("{:.2}", counts.mib_f32()), "1.48");
    }

    #[test]
    fn reduced_variant_is_valid() {
        let trace = shape_trace(&build_reduced()).unwrap();
        assert_eq!(trace.output(), &[2]);
        let counts = count_params(&build_reduced()).unwrap();
        assert_eq!(counts.per_layer.len(), 10);
        let names: Vec<&str> = counts.per_layer.iter().map(|(n, _)| n.as_str()).collect();
        let reference = count_params(&build_lightpneumonet()).unwrap();
        let ref_names: Vec<&str> = reference
            .per_layer
            .iter()
            .map(|(n, _)| n.as_str())
            .collect();
        assert_eq!(names, ref_names);
    }
}
