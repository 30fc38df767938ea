use std::sync::atomic::{AtomicU64, Ordering};

use crate::net::spec::NetSpec;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Tensors: weight `[out, in, k, k]`, plus bias `[out]` when present.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    },
    /// Tensors: scale `[channels]`, shift `[channels]`.
    Norm { channels: usize },
}

impl LayerKind {
    pub fn tag(&self) -> u8 {
        match self {
            LayerKind::Conv { .. } => 0,
            LayerKind::Norm { .. } => 1,
        }
    }
}

/// One weight array with its Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let n = value.len();
        Self {
            shape,
            value,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub kind: LayerKind,
    pub tensors: Vec<ParamTensor>,
}

/// Network weights plus optimizer state.
///
/// Every mutation stamps a new version; tapes remember the version they were
/// recorded against so a stale tape is detected at backward time.
#[derive(Debug, Clone)]
pub struct ParamStore {
    spec: NetSpec,
    layers: Vec<LayerParams>,
    step_count: u64,
    version: u64,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.layers == other.layers
            && self.step_count == other.step_count
    }
}

impl ParamStore {
    pub(crate) fn from_parts(spec: NetSpec, layers: Vec<LayerParams>, step_count: u64) -> Self {
        Self {
            spec,
            layers,
            step_count,
            version: fresh_version(),
        }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_weights(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.tensors.iter().map(|t| t.len()))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.tensors).all(|t| {
            t.value
                .iter()
                .chain(&t.adam_m)
                .chain(&t.adam_v)
                .all(|v| v.is_finite())
        })
    }

    /// Values of one tensor.
    pub fn tensor(&self, layer: usize, tensor: usize) -> &[f64] {
        &self.layers[layer].tensors[tensor].value
    }

    /// Mutable values of one tensor; invalidates outstanding tapes.
    pub fn tensor_mut(&mut self, layer: usize, tensor: usize) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.layers[layer].tensors[tensor].value
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step_count += 1;
        self.step_count
    }

    /// Iterates `(layer, tensor)` coordinates in storage order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| (0..layer.tensors.len()).map(move |t| (l, t)))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| l.tensors.iter().map(|t| vec![0.0; t.len()]).collect())
                .collect(),
        }
    }

    /// All weight values in storage order.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.tensors.iter().flat_map(|t| t.value.iter().copied()))
            .collect()
    }
}

/// Gradients laid out like the [`ParamStore`] they belong to:
/// `layers[layer][tensor][element]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, layer: usize, tensor: usize) -> &[f64] {
        &self.layers[layer][tensor]
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .flatten()
            .all(|v| v.is_finite())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|t| t.iter().map(|v| v * k).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matches_layout(&self, params: &ParamStore) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, l)| {
                g.len() == l.tensors.len()
                    && g.iter()
                        .zip(&l.tensors)
                        .all(|(gt, pt)| gt.len() == pt.len())
            })
    }
}
