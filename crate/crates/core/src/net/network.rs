//! Encoder-decoder with skip connections.
//!
//! Level `i` (0 = full resolution) sees an input with `in_i` channels
//! (`in_0 = input_channels`, `in_i = channels[i-1]`) and contributes eleven
//! parameter layers, stored in this order:
//!
//! | role | layer                                   |
//! |------|-----------------------------------------|
//! | 0    | skip 1x1 conv, `in_i -> skip_i`         |
//! | 1    | skip norm                               |
//! | 2    | down kxk conv stride 2, `in_i -> c_i`   |
//! | 3    | down norm                               |
//! | 4    | down kxk conv stride 1, `c_i -> c_i`    |
//! | 5    | down norm                               |
//! | 6    | up norm over `skip_i + deeper_i` inputs |
//! | 7    | up kxk conv, `skip_i + deeper_i -> c_i` |
//! | 8    | up norm                                 |
//! | 9    | up 1x1 conv, `c_i -> c_i`               |
//! | 10   | up norm                                 |
//!
//! where `deeper_i` is `c_{i+1}` below the deepest level and `c_i` at it.
//! After the last level comes the head, a biased 1x1 conv `c_0 -> output`
//! followed by the logistic function. Every other conv feeds a
//! normalization, so those convs carry no bias. Each norm except role 6 is
//! followed by a leaky rectifier.
//!
//! The decoder at level `i` upsamples the deeper result 2x (bilinear), stacks
//! the skip branch in front of it along channels, and runs roles 6 to 10.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::net::layers::{self, ConvCache, ConvGeometry, NormCache};
use crate::net::params::{Gradients, LayerKind, LayerParams, ParamStore, ParamTensor};
use crate::net::spec::NetSpec;

pub const LAYERS_PER_LEVEL: usize = 11;

const ROLE_NAMES: [&str; LAYERS_PER_LEVEL] = [
    "skip.conv",
    "skip.norm",
    "down.conv",
    "down.norm",
    "down.conv2",
    "down.norm2",
    "up.norm_in",
    "up.conv",
    "up.norm",
    "up.proj",
    "up.proj_norm",
];

fn level_input_channels(spec: &NetSpec, level: usize) -> usize {
    if level == 0 {
        spec.input_channels
    } else {
        spec.channels[level - 1]
    }
}

fn deeper_channels(spec: &NetSpec, level: usize) -> usize {
    spec.channels
        .get(level + 1)
        .copied()
        .unwrap_or(spec.channels[level])
}

/// Layer names and kinds in storage order.
pub fn layer_schema(spec: &NetSpec) -> Vec<(String, LayerKind)> {
    let k = spec.kernel_size;
    let conv = |in_channels, out_channels, kernel, stride| LayerKind::Conv {
        in_channels,
        out_channels,
        kernel,
        stride,
        bias: false,
    };
    let norm = |channels| LayerKind::Norm { channels };
    let mut out = Vec::new();
    for i in 0..spec.depth() {
        let (cin, c, s) = (
            level_input_channels(spec, i),
            spec.channels[i],
            spec.skip_channels[i],
        );
        let cat = s + deeper_channels(spec, i);
        let kinds = [
            conv(cin, s, 1, 1),
            norm(s),
            conv(cin, c, k, 2),
            norm(c),
            conv(c, c, k, 1),
            norm(c),
            norm(cat),
            conv(cat, c, k, 1),
            norm(c),
            conv(c, c, 1, 1),
            norm(c),
        ];
        for (role, kind) in kinds.into_iter().enumerate() {
            out.push((format!("level{i}.{}", ROLE_NAMES[role]), kind));
        }
    }
    out.push((
        "head.conv".to_string(),
        LayerKind::Conv {
            in_channels: spec.channels[0],
            out_channels: spec.output_channels,
            kernel: 1,
            stride: 1,
            bias: true,
        },
    ));
    out
}

/// Tensor shapes a layer of the given kind owns.
pub fn tensor_shapes(kind: &LayerKind) -> Vec<Vec<usize>> {
    match *kind {
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            bias,
            ..
        } => {
            let mut v = vec![vec![out_channels, in_channels, kernel, kernel]];
            if bias {
                v.push(vec![out_channels]);
            }
            v
        }
        LayerKind::Norm { channels } => vec![vec![channels], vec![channels]],
    }
}

/// Fresh network: conv weights uniform in `+-1/sqrt(fan_in)`, norms at unit
/// scale and zero shift, Adam moments zero.
pub fn build_network(spec: &NetSpec, seed: u64) -> Result<ParamStore> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_schema(spec)
        .into_iter()
        .map(|(name, kind)| {
            let tensors = match kind {
                LayerKind::Conv {
                    in_channels,
                    kernel,
                    ..
                } => {
                    let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
                    tensor_shapes(&kind)
                        .into_iter()
                        .map(|shape| {
                            let n = shape.iter().product();
                            let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                            ParamTensor::new(shape, value)
                        })
                        .collect()
                }
                LayerKind::Norm { channels } => vec![
                    ParamTensor::new(vec![channels], vec![1.0; channels]),
                    ParamTensor::new(vec![channels], vec![0.0; channels]),
                ],
            };
            LayerParams {
                name,
                kind,
                tensors,
            }
        })
        .collect();
    Ok(ParamStore::from_parts(spec.clone(), layers, 0))
}

/// Fixed random network input, uniform in `[0, 0.1]`.
pub fn make_input(height: usize, width: usize, channels: usize, seed: u64) -> Result<ImageTensor> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Shape("input dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..height * width * channels)
        .map(|_| rng.gen_range(0.0..=0.1))
        .collect();
    ImageTensor::new(height, width, channels, data)
}

/// Values recorded by a forward pass for reverse-mode differentiation.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    levels: Vec<LevelTape>,
    head: ConvCache,
    head_in: ImageTensor,
    output: ImageTensor,
}

impl Tape {
    pub fn output(&self) -> &ImageTensor {
        &self.output
    }
}

/// conv -> norm -> leaky rectifier.
#[derive(Debug, Clone)]
struct BlockTape {
    conv: ConvCache,
    conv_in: Option<ImageTensor>,
    norm: NormCache,
    act_out: ImageTensor,
}

#[derive(Debug, Clone)]
struct LevelTape {
    skip: BlockTape,
    down: BlockTape,
    down2: BlockTape,
    skip_channels: usize,
    up_norm: NormCache,
    up: BlockTape,
    proj: BlockTape,
}

fn conv_geometry(kind: &LayerKind) -> ConvGeometry {
    match *kind {
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            ..
        } => ConvGeometry {
            in_channels,
            out_channels,
            kernel,
            stride,
        },
        LayerKind::Norm { .. } => unreachable!("not a conv layer"),
    }
}

struct Net<'a> {
    params: &'a ParamStore,
    slope: f64,
}

impl Net<'_> {
    fn block(
        &self,
        conv_layer: usize,
        input: &ImageTensor,
        record: bool,
    ) -> (ImageTensor, Option<BlockTape>) {
        let layers = self.params.layers();
        let g = conv_geometry(&layers[conv_layer].kind);
        let (c, conv_cache) =
            layers::conv_forward(input, g, &layers[conv_layer].tensors[0].value, None, record);
        let norm = &layers[conv_layer + 1];
        let (n, norm_cache) =
            layers::norm_forward(&c, &norm.tensors[0].value, &norm.tensors[1].value, record);
        let out = layers::leaky_relu_forward(&n, self.slope);
        let tape = record.then(|| BlockTape {
            conv: conv_cache.unwrap(),
            conv_in: (g.kernel == 1 && g.stride == 1).then(|| input.clone()),
            norm: norm_cache.unwrap(),
            act_out: out.clone(),
        });
        (out, tape)
    }

    fn block_backward(
        &self,
        conv_layer: usize,
        tape: &BlockTape,
        grad_out: &ImageTensor,
        grads: &mut Gradients,
    ) -> ImageTensor {
        let layers = self.params.layers();
        let g = layers::leaky_relu_backward(&tape.act_out, self.slope, grad_out);
        let ng = layers::norm_backward(&tape.norm, &layers[conv_layer + 1].tensors[0].value, &g);
        grads.layers[conv_layer + 1][0] = ng.scale;
        grads.layers[conv_layer + 1][1] = ng.shift;
        let cg = layers::conv_backward(
            &tape.conv,
            tape.conv_in.as_ref(),
            &layers[conv_layer].tensors[0].value,
            false,
            &ng.input,
        );
        grads.layers[conv_layer][0] = cg.weight;
        cg.input
    }
}

/// Runs the network on `x`. With `record` set, also returns the tape needed
/// by [`backward`].
pub fn forward(
    params: &ParamStore,
    x: &ImageTensor,
    record: bool,
) -> Result<(ImageTensor, Option<Tape>)> {
    let spec = params.spec();
    let (h, w, c) = x.shape();
    if c != spec.input_channels {
        return Err(Error::Shape(format!(
            "network expects {} input channels, got {c}",
            spec.input_channels
        )));
    }
    let align = spec.alignment();
    if h % align != 0 || w % align != 0 {
        return Err(Error::Shape(format!(
            "input {h}x{w} is not a multiple of {align} in both dimensions"
        )));
    }
    let net = Net {
        params,
        slope: spec.leaky_slope,
    };
    let layers = params.layers();
    let depth = spec.depth();

    let mut skips = Vec::with_capacity(depth);
    let mut enc_tapes = Vec::with_capacity(depth);
    let mut cur = x.clone();
    for i in 0..depth {
        let base = i * LAYERS_PER_LEVEL;
        let (skip, skip_t) = net.block(base, &cur, record);
        let (d, down_t) = net.block(base + 2, &cur, record);
        let (d, down2_t) = net.block(base + 4, &d, record);
        skips.push(skip);
        enc_tapes.push((skip_t, down_t, down2_t));
        cur = d;
    }

    let mut dec_tapes: Vec<Option<(NormCache, BlockTape, BlockTape)>> = Vec::with_capacity(depth);
    for i in (0..depth).rev() {
        let base = i * LAYERS_PER_LEVEL;
        let up = layers::upsample2x_forward(&cur);
        let cat = layers::concat_channels(&skips[i], &up);
        let norm = &layers[base + 6];
        let (z, norm_t) =
            layers::norm_forward(&cat, &norm.tensors[0].value, &norm.tensors[1].value, record);
        let (z, up_t) = net.block(base + 7, &z, record);
        let (z, proj_t) = net.block(base + 9, &z, record);
        dec_tapes.push(record.then(|| (norm_t.unwrap(), up_t.unwrap(), proj_t.unwrap())));
        cur = z;
    }

    let head = &layers[depth * LAYERS_PER_LEVEL];
    let g = conv_geometry(&head.kind);
    let (logits, head_cache) = layers::conv_forward(
        &cur,
        g,
        &head.tensors[0].value,
        Some(&head.tensors[1].value),
        record,
    );
    let output = layers::sigmoid_forward(&logits);

    let tape = if record {
        dec_tapes.reverse();
        let levels = enc_tapes
            .into_iter()
            .zip(dec_tapes)
            .enumerate()
            .map(|(i, ((s, d, d2), dec))| {
                let (up_norm, up, proj) = dec.unwrap();
                LevelTape {
                    skip: s.unwrap(),
                    down: d.unwrap(),
                    down2: d2.unwrap(),
                    skip_channels: spec.skip_channels[i],
                    up_norm,
                    up,
                    proj,
                }
            })
            .collect();
        Some(Tape {
            version: params.version(),
            levels,
            head: head_cache.unwrap(),
            head_in: cur,
            output: output.clone(),
        })
    } else {
        None
    };
    Ok((output, tape))
}

/// Exact gradients of a scalar loss whose derivative with respect to the
/// network output is `grad_output`.
pub fn backward(params: &ParamStore, tape: &Tape, grad_output: &ImageTensor) -> Result<Gradients> {
    if tape.version != params.version() {
        return Err(Error::StaleTape);
    }
    tape.output
        .ensure_same_shape(grad_output, "output gradient")?;
    let spec = params.spec();
    let net = Net {
        params,
        slope: spec.leaky_slope,
    };
    let layers = params.layers();
    let depth = spec.depth();
    let mut grads = params.zero_gradients();

    let g = layers::sigmoid_backward(&tape.output, grad_output);
    let head_idx = depth * LAYERS_PER_LEVEL;
    let hg = layers::conv_backward(
        &tape.head,
        Some(&tape.head_in),
        &layers[head_idx].tensors[0].value,
        true,
        &g,
    );
    grads.layers[head_idx][0] = hg.weight;
    grads.layers[head_idx][1] = hg.bias.expect("head has a bias");

    let mut grad = hg.input;
    let mut skip_grads = Vec::with_capacity(depth);
    for (i, lt) in tape.levels.iter().enumerate() {
        let base = i * LAYERS_PER_LEVEL;
        let g = net.block_backward(base + 9, &lt.proj, &grad, &mut grads);
        let g = net.block_backward(base + 7, &lt.up, &g, &mut grads);
        let ng = layers::norm_backward(&lt.up_norm, &layers[base + 6].tensors[0].value, &g);
        grads.layers[base + 6][0] = ng.scale;
        grads.layers[base + 6][1] = ng.shift;
        let (g_skip, g_up) = layers::split_channels(&ng.input, lt.skip_channels);
        skip_grads.push(g_skip);
        grad = layers::upsample2x_backward(&g_up);
    }

    for i in (0..depth).rev() {
        let base = i * LAYERS_PER_LEVEL;
        let lt = &tape.levels[i];
        let g = net.block_backward(base + 4, &lt.down2, &grad, &mut grads);
        let mut g_in = net.block_backward(base + 2, &lt.down, &g, &mut grads);
        let g_skip = net.block_backward(base, &lt.skip, &skip_grads[i], &mut grads);
        g_in.data_mut()
            .iter_mut()
            .zip(g_skip.data())
            .for_each(|(a, b)| *a += b);
        grad = g_in;
    }
    Ok(grads)
}
