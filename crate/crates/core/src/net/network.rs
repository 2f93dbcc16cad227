use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layer::{backward_layer, forward_layer, LayerCache, LayerSpec};
use super::tensor::Tensor;
use super::NetError;

/// Layer list plus the input shape it is applied to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Adds identity skips around weight layers whose output shape equals their input shape.
    pub residual: bool,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self { input_shape, layers, residual: false }
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NetError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NetError::InvalidSpec(format!("bad input shape {:?}", self.input_shape)));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(&shapes[i])
                .map_err(|detail| NetError::ShapeMismatch { layer: i, detail })?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NetError> {
        Ok(self.shapes()?.pop().expect("shapes is never empty"))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    fn skip_at(&self, shapes: &[Vec<usize>], i: usize) -> bool {
        self.residual && self.layers[i].has_weights() && shapes[i] == shapes[i + 1]
    }
}

/// Trainable tensors of one layer, tagged with the layer they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub spec: LayerSpec,
    pub tensors: Vec<Tensor>,
}

/// Parameters of a whole network. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// Zero-valued parameters shaped like `layers`.
    pub fn zeros_like_layers(layers: &[LayerSpec]) -> Self {
        let layers = layers
            .iter()
            .map(|spec| LayerParams {
                spec: *spec,
                tensors: spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec).collect();
        Self::zeros_like_layers(&specs)
    }

    /// Random initialization: He scaling for weight layers that feed an ELU, Glorot for
    /// the rest (the Tanh head and raw-logit heads). Biases and shifts start at zero,
    /// normalization scales at one.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self, NetError> {
        spec.shapes()?;
        let mut params = Self::zeros_like_layers(&spec.layers);
        for (i, layer) in params.layers.iter_mut().enumerate() {
            match layer.spec {
                LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => {
                    let (fan_in, fan_out) = fans(&layer.spec);
                    let feeds_elu = spec.layers[i + 1..]
                        .iter()
                        .find(|l| !matches!(l, LayerSpec::InstanceNorm { .. } | LayerSpec::LayerNorm { .. }))
                        .is_some_and(|l| *l == LayerSpec::Elu);
                    let std = if feeds_elu {
                        (2.0 / fan_in as f64).sqrt()
                    } else {
                        (2.0 / (fan_in + fan_out) as f64).sqrt()
                    };
                    for w in layer.tensors[0].data_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *w = z * std;
                    }
                }
                LayerSpec::InstanceNorm { .. } | LayerSpec::LayerNorm { .. } => {
                    layer.tensors[0].data_mut().fill(1.0);
                }
                LayerSpec::Elu | LayerSpec::Tanh => {}
            }
        }
        Ok(params)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.tensors).map(Tensor::len).sum()
    }

    /// Checks that the parameters were built for `layers`.
    pub fn check_matches(&self, layers: &[LayerSpec]) -> Result<(), NetError> {
        if self.layers.len() != layers.len() {
            return Err(NetError::ParamMismatch(format!(
                "{} parameter layers for {} spec layers",
                self.layers.len(),
                layers.len()
            )));
        }
        for (i, (p, s)) in self.layers.iter().zip(layers).enumerate() {
            let shapes = s.param_shapes();
            if p.spec != *s
                || p.tensors.len() != shapes.len()
                || p.tensors.iter().zip(&shapes).any(|(t, sh)| t.shape() != sh.as_slice())
            {
                return Err(NetError::ParamMismatch(format!("layer {i}: parameters do not match {s:?}")));
            }
        }
        Ok(())
    }

    /// `self += factor * other`, for accumulating minibatch gradients.
    pub fn add_scaled(&mut self, other: &NetworkParams, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.tensors.iter_mut().zip(&b.tensors) {
                for (x, y) in ta.data_mut().iter_mut().zip(tb.data()) {
                    *x += factor * y;
                }
            }
        }
    }

    pub fn accumulate(&mut self, other: &NetworkParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.tensors.iter_mut().zip(&b.tensors) {
                ta.add_assign(tb);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.layers.iter_mut().flat_map(|l| l.tensors.iter_mut()) {
            t.scale(factor);
        }
    }

    /// Index of the first layer holding a non-finite value.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.tensors.iter().any(|t| !t.is_finite()))
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.tensors.iter()).flat_map(|t| t.data().iter())
    }

    pub fn iter_values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.tensors.iter_mut()).flat_map(|t| t.data_mut().iter_mut())
    }
}

fn fans(spec: &LayerSpec) -> (usize, usize) {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
        LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
            (in_channels * kernel * kernel, out_channels * kernel * kernel)
        }
        _ => (1, 1),
    }
}

/// Intermediates recorded by [`forward`], consumed by [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    shapes: Vec<Vec<usize>>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Evaluates the network on one sample.
pub fn forward(spec: &NetworkSpec, params: &NetworkParams, input: &Tensor) -> Result<(Tensor, ForwardCache), NetError> {
    let shapes = spec.shapes()?;
    params.check_matches(&spec.layers)?;
    if input.shape() != shapes[0].as_slice() {
        return Err(NetError::ShapeMismatch {
            layer: 0,
            detail: format!("input shape {:?}, expected {:?}", input.shape(), shapes[0]),
        });
    }
    let mut caches = Vec::with_capacity(spec.layers.len());
    let mut x = input.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let (mut y, cache) = forward_layer(layer, &params.layers[i].tensors, &x, &shapes[i + 1]);
        if spec.skip_at(&shapes, i) {
            y.add_assign(&x);
        }
        caches.push(cache);
        x = y;
    }
    Ok((x, ForwardCache { layers: caches, shapes }))
}

/// Output only, for acting.
pub fn predict(spec: &NetworkSpec, params: &NetworkParams, input: &Tensor) -> Result<Tensor, NetError> {
    forward(spec, params, input).map(|(y, _)| y)
}

/// Back-propagates `output_grad` through a recorded forward pass.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &Tensor,
) -> Result<(NetworkParams, Tensor), NetError> {
    let (grads, dx) = backward_impl(spec, params, cache, output_grad, true)?;
    Ok((grads, dx.expect("input gradient requested")))
}

/// Like [`backward`] but skips the gradient with respect to the network input.
pub fn backward_params(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &Tensor,
) -> Result<NetworkParams, NetError> {
    backward_impl(spec, params, cache, output_grad, false).map(|(g, _)| g)
}

fn backward_impl(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &Tensor,
    need_input: bool,
) -> Result<(NetworkParams, Option<Tensor>), NetError> {
    if cache.layers.len() != spec.layers.len() {
        return Err(NetError::MissingCache(format!(
            "cache holds {} layers, network has {}",
            cache.layers.len(),
            spec.layers.len()
        )));
    }
    params.check_matches(&spec.layers)?;
    let shapes = &cache.shapes;
    let out_shape = shapes.last().expect("shapes is never empty");
    if output_grad.len() != out_shape.iter().product::<usize>() {
        return Err(NetError::ShapeMismatch {
            layer: spec.layers.len().saturating_sub(1),
            detail: format!("output gradient {:?}, expected {:?}", output_grad.shape(), out_shape),
        });
    }
    let mut layer_grads: Vec<LayerParams> = Vec::with_capacity(spec.layers.len());
    let mut grad = output_grad.data().to_vec();
    let mut have_input_grad = true;
    for i in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[i];
        let want_dx = need_input || i > 0;
        let (tensors, dx) = backward_layer(layer, &params.layers[i].tensors, &cache.layers[i], &grad, &shapes[i], want_dx)
            .ok_or_else(|| NetError::MissingCache(format!("layer {i}: cache was recorded for a different layer")))?;
        layer_grads.push(LayerParams { spec: *layer, tensors });
        match dx {
            Some(mut dx) => {
                if spec.skip_at(shapes, i) {
                    for (d, g) in dx.iter_mut().zip(&grad) {
                        *d += g;
                    }
                }
                grad = dx;
            }
            None => have_input_grad = false,
        }
    }
    layer_grads.reverse();
    let input_grad = (need_input && have_input_grad).then(|| Tensor::from_parts(shapes[0].clone(), grad));
    Ok((NetworkParams { layers: layer_grads }, input_grad))
}
