use super::tensor::Tensor;

/// Variance regularizer for both normalization layers.
pub const NORM_EPS: f64 = 1e-5;

/// Largest `f64` below one; keeps saturated Tanh outputs strictly inside (-1, 1).
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// One layer of a sequential network.
///
/// `Dense` flattens whatever it receives, so a convolution stack can feed it directly.
/// Convolutions take `[channels, height, width]` inputs and use valid padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    InstanceNorm { channels: usize },
    LayerNorm { width: usize },
    Elu,
    Tanh,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride }
    }

    /// Tag byte used by the parameter file format.
    pub fn tag(&self) -> u8 {
        match self {
            LayerSpec::Dense { .. } => 1,
            LayerSpec::Conv2d { .. } => 2,
            LayerSpec::InstanceNorm { .. } => 3,
            LayerSpec::LayerNorm { .. } => 4,
            LayerSpec::Elu => 5,
            LayerSpec::Tanh => 6,
        }
    }

    /// Dimension parameters in file order.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![inputs, outputs],
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                vec![in_channels, out_channels, kernel, stride]
            }
            LayerSpec::InstanceNorm { channels } => vec![channels],
            LayerSpec::LayerNorm { width } => vec![width],
            LayerSpec::Elu | LayerSpec::Tanh => vec![],
        }
    }

    pub fn dim_count(tag: u8) -> Option<usize> {
        match tag {
            1 => Some(2),
            2 => Some(4),
            3 | 4 => Some(1),
            5 | 6 => Some(0),
            _ => None,
        }
    }

    pub fn from_tag(tag: u8, dims: &[usize]) -> Option<Self> {
        let spec = match (tag, dims) {
            (1, &[inputs, outputs]) => LayerSpec::Dense { inputs, outputs },
            (2, &[in_channels, out_channels, kernel, stride]) => {
                LayerSpec::Conv2d { in_channels, out_channels, kernel, stride }
            }
            (3, &[channels]) => LayerSpec::InstanceNorm { channels },
            (4, &[width]) => LayerSpec::LayerNorm { width },
            (5, &[]) => LayerSpec::Elu,
            (6, &[]) => LayerSpec::Tanh,
            _ => return None,
        };
        spec.dims().iter().all(|&d| d > 0).then_some(spec)
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Shapes of the trainable tensors, weight/scale first.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]]
            }
            LayerSpec::InstanceNorm { channels } => vec![vec![channels], vec![channels]],
            LayerSpec::LayerNorm { width } => vec![vec![width], vec![width]],
            LayerSpec::Elu | LayerSpec::Tanh => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Output shape for a given input shape, or a description of the incompatibility.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        if self.dims().contains(&0) {
            return Err(format!("{self:?} has a zero dimension"));
        }
        let numel: usize = input.iter().product();
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if numel != inputs {
                    return Err(format!("dense expects {inputs} inputs, got shape {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                let &[c, h, w] = input else {
                    return Err(format!("conv expects [c, h, w], got {input:?}"));
                };
                if c != in_channels {
                    return Err(format!("conv expects {in_channels} channels, got {c}"));
                }
                if h < kernel || w < kernel {
                    return Err(format!("conv kernel {kernel} larger than {h}x{w} image"));
                }
                Ok(vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::InstanceNorm { channels } => {
                if input.len() < 2 || input[0] != channels {
                    return Err(format!("instance norm over {channels} channels, got {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::LayerNorm { width } => {
                if numel != width {
                    return Err(format!("layer norm over {width} features, got {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Elu | LayerSpec::Tanh => Ok(input.to_vec()),
        }
    }
}

/// Per-layer values kept from the forward pass.
#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    Dense { input: Tensor },
    Conv { input: Tensor },
    /// Normalized values and per-group inverse standard deviation.
    Norm { normalized: Vec<f64>, inv_std: Vec<f64> },
    Elu { output: Vec<f64> },
    Tanh { output: Vec<f64> },
}

pub(crate) fn forward_layer(
    spec: &LayerSpec,
    params: &[Tensor],
    input: &Tensor,
    out_shape: &[usize],
) -> (Tensor, LayerCache) {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            let w = params[0].data();
            let b = params[1].data();
            let x = input.data();
            let y: Vec<f64> = (0..outputs)
                .map(|o| b[o] + dot(&w[o * inputs..(o + 1) * inputs], x))
                .collect();
            (Tensor::from_parts(out_shape.to_vec(), y), LayerCache::Dense { input: input.clone() })
        }
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
            let y = conv_forward(input, &params[0], &params[1], in_channels, out_channels, kernel, stride, out_shape);
            (Tensor::from_parts(out_shape.to_vec(), y), LayerCache::Conv { input: input.clone() })
        }
        LayerSpec::InstanceNorm { channels } => {
            let group = input.len() / channels;
            norm_forward(input, &params[0], &params[1], channels, group)
        }
        LayerSpec::LayerNorm { width } => norm_forward(input, &params[0], &params[1], 1, width),
        LayerSpec::Elu => {
            let y: Vec<f64> = input.data().iter().map(|&x| if x > 0.0 { x } else { x.exp_m1() }).collect();
            (Tensor::from_parts(out_shape.to_vec(), y.clone()), LayerCache::Elu { output: y })
        }
        LayerSpec::Tanh => {
            let y: Vec<f64> = input.data().iter().map(|x| x.tanh().clamp(-BELOW_ONE, BELOW_ONE)).collect();
            (Tensor::from_parts(out_shape.to_vec(), y.clone()), LayerCache::Tanh { output: y })
        }
    }
}

/// Returns parameter gradients and, when requested, the input gradient.
pub(crate) fn backward_layer(
    spec: &LayerSpec,
    params: &[Tensor],
    cache: &LayerCache,
    grad: &[f64],
    in_shape: &[usize],
    need_input: bool,
) -> Option<(Vec<Tensor>, Option<Vec<f64>>)> {
    let result = match (*spec, cache) {
        (LayerSpec::Dense { inputs, outputs }, LayerCache::Dense { input }) => {
            let x = input.data();
            let w = params[0].data();
            let mut dw = vec![0.0; inputs * outputs];
            for o in 0..outputs {
                let g = grad[o];
                if g != 0.0 {
                    for (d, &xi) in dw[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
                        *d = g * xi;
                    }
                }
            }
            let dx = need_input.then(|| {
                let mut dx = vec![0.0; inputs];
                for o in 0..outputs {
                    let g = grad[o];
                    if g != 0.0 {
                        axpy(g, &w[o * inputs..(o + 1) * inputs], &mut dx);
                    }
                }
                dx
            });
            let grads = vec![
                Tensor::from_parts(vec![outputs, inputs], dw),
                Tensor::from_parts(vec![outputs], grad.to_vec()),
            ];
            (grads, dx)
        }
        (LayerSpec::Conv2d { in_channels, out_channels, kernel, stride }, LayerCache::Conv { input }) => {
            conv_backward(input, &params[0], grad, in_channels, out_channels, kernel, stride, need_input)
        }
        (LayerSpec::InstanceNorm { channels }, LayerCache::Norm { normalized, inv_std }) => {
            let group = normalized.len() / channels;
            norm_backward(&params[0], normalized, inv_std, grad, channels, group, need_input)
        }
        (LayerSpec::LayerNorm { width }, LayerCache::Norm { normalized, inv_std }) => {
            norm_backward(&params[0], normalized, inv_std, grad, 1, width, need_input)
        }
        (LayerSpec::Elu, LayerCache::Elu { output }) => {
            let dx = output
                .iter()
                .zip(grad)
                .map(|(&y, &g)| if y > 0.0 { g } else { g * (y + 1.0) })
                .collect();
            (vec![], Some(dx))
        }
        (LayerSpec::Tanh, LayerCache::Tanh { output }) => {
            let dx = output.iter().zip(grad).map(|(&y, &g)| g * (1.0 - y * y)).collect();
            (vec![], Some(dx))
        }
        _ => return None,
    };
    debug_assert!(result.1.as_ref().is_none_or(|dx| dx.len() == in_shape.iter().product::<usize>()));
    Some(result)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// At most one nonzero in eight.
fn is_sparse(x: &[f64]) -> bool {
    x.iter().filter(|v| **v != 0.0).count() * 8 <= x.len()
}

/// Calls `f(value, channel, ky, kx, output_pixel)` for every kernel tap that touches a
/// nonzero input value.
#[allow(clippy::too_many_arguments)]
fn for_each_tap(
    x: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    mut f: impl FnMut(f64, usize, usize, usize, usize),
) {
    for c in 0..in_c {
        for iy in 0..h {
            for ix in 0..w {
                let xv = x[(c * h + iy) * w + ix];
                if xv == 0.0 {
                    continue;
                }
                for ky in 0..k.min(iy + 1) {
                    let dy = iy - ky;
                    if dy % stride != 0 || dy / stride >= oh {
                        continue;
                    }
                    for kx in 0..k.min(ix + 1) {
                        let dx = ix - kx;
                        if dx % stride != 0 || dx / stride >= ow {
                            continue;
                        }
                        f(xv, c, ky, kx, (dy / stride) * ow + dx / stride);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    out_shape: &[usize],
) -> Vec<f64> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let x = input.data();
    let wt = weight.data();
    let mut y = vec![0.0; out_c * oh * ow];
    if is_sparse(x) {
        for o in 0..out_c {
            y[o * oh * ow..(o + 1) * oh * ow].fill(bias.data()[o]);
        }
        for_each_tap(x, in_c, h, w, k, stride, oh, ow, |xv, c, ky, kx, out_idx| {
            for o in 0..out_c {
                y[o * oh * ow + out_idx] += wt[((o * in_c + c) * k + ky) * k + kx] * xv;
            }
        });
        return y;
    }
    for o in 0..out_c {
        let plane = &mut y[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias.data()[o]);
        for c in 0..in_c {
            let xin = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wt[((o * in_c + c) * k + ky) * k + kx];
                    for oy in 0..oh {
                        let row = &xin[(oy * stride + ky) * w..];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            axpy(wv, &row[kx..kx + ow], out_row);
                        } else {
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                *v += wv * row[ox * stride + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &Tensor,
    weight: &Tensor,
    grad: &[f64],
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    need_input: bool,
) -> (Vec<Tensor>, Option<Vec<f64>>) {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let x = input.data();
    let wt = weight.data();
    let mut dw = vec![0.0; out_c * in_c * k * k];
    let mut db = vec![0.0; out_c];
    if !need_input && is_sparse(x) {
        for o in 0..out_c {
            db[o] = grad[o * oh * ow..(o + 1) * oh * ow].iter().sum();
        }
        for_each_tap(x, in_c, h, w, k, stride, oh, ow, |xv, c, ky, kx, out_idx| {
            for o in 0..out_c {
                dw[((o * in_c + c) * k + ky) * k + kx] += grad[o * oh * ow + out_idx] * xv;
            }
        });
        let grads = vec![
            Tensor::from_parts(vec![out_c, in_c, k, k], dw),
            Tensor::from_parts(vec![out_c], db),
        ];
        return (grads, None);
    }
    let mut dx = if need_input { vec![0.0; in_c * h * w] } else { Vec::new() };
    for o in 0..out_c {
        let g = &grad[o * oh * ow..(o + 1) * oh * ow];
        db[o] = g.iter().sum();
        for c in 0..in_c {
            let xin = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * in_c + c) * k + ky) * k + kx;
                    let wv = wt[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let g_row = &g[oy * ow..(oy + 1) * ow];
                        let base = (oy * stride + ky) * w;
                        if stride == 1 {
                            acc += dot(g_row, &xin[base + kx..base + kx + ow]);
                            if need_input {
                                let d = &mut dx[c * h * w + base + kx..c * h * w + base + kx + ow];
                                axpy(wv, g_row, d);
                            }
                        } else {
                            for (ox, &gv) in g_row.iter().enumerate() {
                                let xi = base + ox * stride + kx;
                                acc += gv * xin[xi];
                                if need_input {
                                    dx[c * h * w + xi] += wv * gv;
                                }
                            }
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }
    let grads = vec![
        Tensor::from_parts(vec![out_c, in_c, k, k], dw),
        Tensor::from_parts(vec![out_c], db),
    ];
    (grads, need_input.then_some(dx))
}

/// Normalizes `groups` contiguous runs of `group` values each, then applies a per-group
/// (instance norm) or per-feature (layer norm) affine map.
fn norm_forward(input: &Tensor, scale: &Tensor, shift: &Tensor, groups: usize, group: usize) -> (Tensor, LayerCache) {
    let x = input.data();
    let per_feature = groups == 1;
    let mut normalized = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for gi in 0..groups {
        let xs = &x[gi * group..(gi + 1) * group];
        let mean = xs.iter().sum::<f64>() / group as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(is);
        for j in 0..group {
            let idx = gi * group + j;
            let n = (x[idx] - mean) * is;
            normalized[idx] = n;
            let p = if per_feature { j } else { gi };
            y[idx] = scale.data()[p] * n + shift.data()[p];
        }
    }
    (Tensor::from_parts(input.shape().to_vec(), y), LayerCache::Norm { normalized, inv_std })
}

fn norm_backward(
    scale: &Tensor,
    normalized: &[f64],
    inv_std: &[f64],
    grad: &[f64],
    groups: usize,
    group: usize,
    need_input: bool,
) -> (Vec<Tensor>, Option<Vec<f64>>) {
    let per_feature = groups == 1;
    let n_params = scale.len();
    let mut dscale = vec![0.0; n_params];
    let mut dshift = vec![0.0; n_params];
    let mut dx = if need_input { vec![0.0; normalized.len()] } else { Vec::new() };
    let mut dn = vec![0.0; group];
    for gi in 0..groups {
        let mut mean_dn = 0.0;
        let mut mean_dn_n = 0.0;
        for j in 0..group {
            let idx = gi * group + j;
            let p = if per_feature { j } else { gi };
            dscale[p] += grad[idx] * normalized[idx];
            dshift[p] += grad[idx];
            dn[j] = grad[idx] * scale.data()[p];
            mean_dn += dn[j];
            mean_dn_n += dn[j] * normalized[idx];
        }
        if need_input {
            mean_dn /= group as f64;
            mean_dn_n /= group as f64;
            for j in 0..group {
                let idx = gi * group + j;
                dx[idx] = inv_std[gi] * (dn[j] - mean_dn - normalized[idx] * mean_dn_n);
            }
        }
    }
    let grads = vec![
        Tensor::from_parts(vec![n_params], dscale),
        Tensor::from_parts(vec![n_params], dshift),
    ];
    (grads, need_input.then_some(dx))
}
