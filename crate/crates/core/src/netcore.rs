//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>`: for every layer in order, the
//! weight matrix (row-major, `out × in`) followed by the bias vector. A
//! [`GradientBuffer`] uses exactly the same layout, which keeps optimizer
//! updates and finite-difference checks trivial.
//!
//! Hidden layers use the spec's activation; the output layer is always linear.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// ELU with alpha = 1.
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if a > 0.0 {
                    a
                } else {
                    a.exp_m1()
                }
            }
            Activation::Identity => a,
        }
    }

    /// Derivative with respect to the pre-activation; ELU uses 1 at `a = 0`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if a >= 0.0 {
                    1.0
                } else {
                    a.exp()
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Identity => "identity",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "elu" => Some(Activation::Elu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Shape of a network: `depth` hidden layers of `width` units each.
///
/// Zero-sized inputs or outputs are allowed. A network with `input_dim = 0`
/// computes a learned constant, which is how latent customer draws are
/// represented when a dataset carries no customer features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, output_dim: usize, depth: usize, width: usize) -> Self {
        NetworkSpec {
            input_dim,
            output_dim,
            depth,
            width,
            activation: Activation::Elu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth > 0 && self.width == 0 {
            return Err(Error::InvalidSpec(format!(
                "depth {} requires a positive width",
                self.depth
            )));
        }
        Ok(())
    }

    /// `(in, out)` for every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            shapes.push((fan_in, self.width));
            fan_in = self.width;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o)| o * i + o)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the weight block; bias follows at `offset + fan_out * fan_in`.
    offset: usize,
}

impl LayerLayout {
    #[inline]
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_out * self.fan_in
    }

    #[inline]
    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_out * self.fan_in;
        start..start + self.fan_out
    }
}

/// Borrowed view of one affine layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out × fan_in`.
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl LayerView<'_> {
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.fan_in..(r + 1) * self.fan_in]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    spec: NetworkSpec,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`DenseNetwork::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last entry is the network output.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        self.inputs.first().map(Vec::as_slice).unwrap_or(&[])
    }

    fn prepare(&mut self, spec: &NetworkSpec) {
        let shapes = spec.layer_shapes();
        self.inputs.resize_with(shapes.len(), Vec::new);
        self.pre.resize_with(shapes.len(), Vec::new);
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            self.inputs[l].resize(fan_in, 0.0);
            self.pre[l].resize(fan_out, 0.0);
        }
    }
}

/// Accumulated `∂loss/∂parameter`, laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    values: Vec<f64>,
}

impl GradientBuffer {
    pub fn for_network(net: &DenseNetwork) -> Self {
        GradientBuffer {
            values: vec![0.0; net.num_params()],
        }
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl DenseNetwork {
    /// A network with all parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut layout = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in spec.layer_shapes() {
            layout.push(LayerLayout {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_out * fan_in + fan_out;
        }
        Ok(DenseNetwork {
            spec,
            layout,
            params: vec![0.0; offset],
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::dim("network parameters", net.params.len(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    /// Fan-balanced uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for layer in &net.layout {
            let fan_sum = layer.fan_in + layer.fan_out;
            if fan_sum == 0 {
                continue;
            }
            let limit = (6.0 / fan_sum as f64).sqrt();
            for w in &mut net.params[layer.weight_range()] {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let lay = &self.layout[l];
        LayerView {
            fan_in: lay.fan_in,
            fan_out: lay.fan_out,
            weights: &self.params[lay.weight_range()],
            bias: &self.params[lay.bias_range()],
        }
    }

    /// Offsets `(weights, bias)` of layer `l` inside the flat parameter vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let lay = &self.layout[l];
        (lay.weight_range().start, lay.bias_range().start)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass recording every layer's input and pre-activation.
    pub fn forward_cached<'c>(&self, x: &[f64], cache: &'c mut ForwardCache) -> Result<&'c [f64]> {
        if x.len() != self.spec.input_dim {
            return Err(Error::dim("network input", self.spec.input_dim, x.len()));
        }
        cache.prepare(&self.spec);
        cache.inputs[0].copy_from_slice(x);
        let first = self.layer(0);
        for r in 0..first.fan_out {
            cache.pre[0][r] = dot(first.row(r), x) + first.bias[r];
        }
        self.propagate_from(1, cache);
        Ok(cache.output())
    }

    /// Forward pass starting from an externally computed first-layer
    /// pre-activation. Callers that assemble the first layer from blocks of
    /// a concatenated input use this to skip recomputing shared blocks.
    pub fn forward_from_first_preactivation<'c>(
        &self,
        pre0: &[f64],
        cache: &'c mut ForwardCache,
    ) -> Result<&'c [f64]> {
        let fan_out = self.layout[0].fan_out;
        if pre0.len() != fan_out {
            return Err(Error::dim("first-layer pre-activation", fan_out, pre0.len()));
        }
        cache.prepare(&self.spec);
        cache.pre[0].copy_from_slice(pre0);
        self.propagate_from(1, cache);
        Ok(cache.output())
    }

    fn propagate_from(&self, start: usize, cache: &mut ForwardCache) {
        let act = self.spec.activation;
        for l in start..self.layout.len() {
            let (before, after) = cache.pre.split_at_mut(l);
            let prev = &before[l - 1];
            let input = &mut cache.inputs[l];
            for (h, &a) in input.iter_mut().zip(prev.iter()) {
                *h = act.apply(a);
            }
            let layer = self.layer(l);
            let out = &mut after[0];
            for r in 0..layer.fan_out {
                out[r] = dot(layer.row(r), input) + layer.bias[r];
            }
        }
    }

    /// Backpropagates `upstream = ∂loss/∂output` through the cached pass,
    /// accumulating parameter gradients into `grads` and returning
    /// `∂loss/∂input`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut GradientBuffer,
    ) -> Result<Vec<f64>> {
        if grads.len() != self.params.len() {
            return Err(Error::dim("gradient buffer", self.params.len(), grads.len()));
        }
        self.backward_into(cache, upstream, &mut grads.values)
    }

    /// [`backward`](Self::backward) writing into a raw slice with the
    /// network's parameter layout.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        let delta0 = self.backward_to_first_preactivation(cache, upstream, grads)?;
        let first = self.layer(0);
        let input = &cache.inputs[0];
        let (w_off, b_off) = self.layer_offsets(0);
        let mut dx = vec![0.0; first.fan_in];
        for (r, &d) in delta0.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = first.row(r);
            let gw = &mut grads[w_off + r * first.fan_in..w_off + (r + 1) * first.fan_in];
            for c in 0..first.fan_in {
                gw[c] += d * input[c];
                dx[c] += d * row[c];
            }
            grads[b_off + r] += d;
        }
        Ok(dx)
    }

    /// Backpropagates down to the first layer's pre-activation, accumulating
    /// gradients of every layer except the first. The returned vector is
    /// `∂loss/∂pre0`; the caller owns the first layer's parameter gradients
    /// (see [`forward_from_first_preactivation`](Self::forward_from_first_preactivation)).
    pub fn backward_to_first_preactivation(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.spec.output_dim {
            return Err(Error::dim("upstream gradient", self.spec.output_dim, upstream.len()));
        }
        if cache.pre.len() != self.layout.len()
            || cache
                .pre
                .iter()
                .zip(&self.layout)
                .any(|(p, lay)| p.len() != lay.fan_out)
        {
            return Err(Error::InvalidSpec(
                "forward cache does not match network shape".into(),
            ));
        }
        if grads.len() != self.params.len() {
            return Err(Error::dim("gradient buffer", self.params.len(), grads.len()));
        }
        let mut delta = upstream.to_vec();
        let mut dh = Vec::new();
        self.backprop_hidden(cache, &mut delta, &mut dh, grads);
        Ok(delta)
    }

    /// Core of [`backward_to_first_preactivation`](Self::backward_to_first_preactivation)
    /// without shape checks. `delta` holds `∂loss/∂output` on entry and
    /// `∂loss/∂pre0` on exit; `dh` is scratch.
    pub(crate) fn backprop_hidden(
        &self,
        cache: &ForwardCache,
        delta: &mut Vec<f64>,
        dh: &mut Vec<f64>,
        grads: &mut [f64],
    ) {
        let act = self.spec.activation;
        for l in (1..self.layout.len()).rev() {
            let layer = self.layer(l);
            let input = &cache.inputs[l];
            let (w_off, b_off) = self.layer_offsets(l);
            dh.clear();
            dh.resize(layer.fan_in, 0.0);
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = layer.row(r);
                let gw = &mut grads[w_off + r * layer.fan_in..w_off + (r + 1) * layer.fan_in];
                for c in 0..layer.fan_in {
                    gw[c] += d * input[c];
                    dh[c] += d * row[c];
                }
                grads[b_off + r] += d;
            }
            let prev_pre = &cache.pre[l - 1];
            for (g, &a) in dh.iter_mut().zip(prev_pre) {
                *g *= act.derivative(a);
            }
            std::mem::swap(delta, dh);
        }
    }

    /// Parameter-gradient-only backward pass for callers that do not need
    /// `∂loss/∂input`. `delta` holds the upstream gradient on entry.
    pub(crate) fn backprop_params(
        &self,
        cache: &ForwardCache,
        delta: &mut Vec<f64>,
        dh: &mut Vec<f64>,
        grads: &mut [f64],
    ) {
        self.backprop_hidden(cache, delta, dh, grads);
        let first = self.layer(0);
        let input = &cache.inputs[0];
        let (w_off, b_off) = self.layer_offsets(0);
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let gw = &mut grads[w_off + r * first.fan_in..w_off + (r + 1) * first.fan_in];
            for (g, &x) in gw.iter_mut().zip(input) {
                *g += d * x;
            }
            grads[b_off + r] += d;
        }
    }

    /// Largest per-node `‖incoming weights‖₁ + |bias|` over all layers.
    pub fn max_node_l1(&self) -> f64 {
        let mut best = 0.0f64;
        for l in 0..self.layout.len() {
            let layer = self.layer(l);
            for r in 0..layer.fan_out {
                let norm: f64 =
                    layer.row(r).iter().map(|w| w.abs()).sum::<f64>() + layer.bias[r].abs();
                best = best.max(norm);
            }
        }
        best
    }

    /// Text serialization: a header with the spec fields, then one
    /// `layer <out> <in>` line per layer followed by `out` weight rows and a
    /// bias row. Floats use the shortest representation that round-trips.
    pub fn write_text(&self, out: &mut String) {
        let s = &self.spec;
        writeln!(out, "dense_network").unwrap();
        writeln!(
            out,
            "spec {} {} {} {} {}",
            s.input_dim,
            s.output_dim,
            s.depth,
            s.width,
            s.activation.name()
        )
        .unwrap();
        for l in 0..self.layout.len() {
            let layer = self.layer(l);
            writeln!(out, "layer {} {}", layer.fan_out, layer.fan_in).unwrap();
            for r in 0..layer.fan_out {
                write_row(out, layer.row(r));
            }
            write_row(out, layer.bias);
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    pub fn read_text<I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let fmt_err = |message: String| Error::Format {
            what: "network",
            message,
        };
        let mut next = || -> Result<String> {
            match lines.next() {
                Some(Ok(line)) => Ok(line),
                Some(Err(e)) => Err(fmt_err(e.to_string())),
                None => Err(fmt_err("unexpected end of input".into())),
            }
        };
        let magic = next()?;
        if magic.trim() != "dense_network" {
            return Err(fmt_err(format!("expected `dense_network`, found `{magic}`")));
        }
        let spec_line = next()?;
        let fields: Vec<&str> = spec_line.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "spec" {
            return Err(fmt_err(format!("bad spec line `{spec_line}`")));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| fmt_err(format!("bad integer `{s}`")))
        };
        let activation = Activation::from_name(fields[5])
            .ok_or_else(|| fmt_err(format!("unknown activation `{}`", fields[5])))?;
        let spec = NetworkSpec {
            input_dim: num(fields[1])?,
            output_dim: num(fields[2])?,
            depth: num(fields[3])?,
            width: num(fields[4])?,
            activation,
        };
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.num_params());
        for (fan_in, fan_out) in spec.layer_shapes() {
            let header = next()?;
            let expected = format!("layer {fan_out} {fan_in}");
            if header.trim() != expected {
                return Err(fmt_err(format!("expected `{expected}`, found `{header}`")));
            }
            for _ in 0..fan_out {
                params.extend(parse_row(&next()?, fan_in)?);
            }
            params.extend(parse_row(&next()?, fan_out)?);
        }
        DenseNetwork::from_params(spec, params)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = std::io::Cursor::new(text).lines();
        Self::read_text(&mut lines)
    }
}

pub(crate) fn write_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

pub(crate) fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Format {
                what: "network",
                message: format!("bad number `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::dim("serialized row", expected, values.len()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine(weights: Vec<f64>, bias: Vec<f64>, fan_in: usize) -> DenseNetwork {
        let spec = NetworkSpec::new(fan_in, bias.len(), 0, 0);
        let mut params = weights;
        params.extend(bias);
        DenseNetwork::from_params(spec, params).unwrap()
    }

    #[test]
    fn identity_affine_forward() {
        let net = affine(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn single_elu_unit() {
        let spec = NetworkSpec::new(1, 1, 1, 1);
        let net = DenseNetwork::from_params(spec, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let y = net.forward(&[-1.0]).unwrap();
        assert!((y[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((y[0] + 0.63212).abs() < 1e-5);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = DenseNetwork::zeros(NetworkSpec::new(3, 1, 1, 2)).unwrap();
        match net.forward(&[1.0, 2.0]) {
            Err(Error::Dimension {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn affine_backward_is_outer_product() {
        let net = affine(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
        let mut cache = ForwardCache::default();
        net.forward_cached(&[3.0, -4.0], &mut cache).unwrap();
        let mut grads = GradientBuffer::for_network(&net);
        let dx = net.backward(&cache, &[1.0, 0.0], &mut grads).unwrap();
        assert_eq!(dx, vec![1.0, 0.0]);
        assert_eq!(grads.as_slice(), &[3.0, -4.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNetwork::init(NetworkSpec::new(4, 2, 2, 5), &mut rng).unwrap();
        let mut cache = ForwardCache::default();
        net.forward_cached(&[0.1, -0.3, 2.0, 0.5], &mut cache).unwrap();
        let mut grads = GradientBuffer::for_network(&net);
        let dx = net.backward(&cache, &[0.0, 0.0], &mut grads).unwrap();
        assert!(dx.iter().all(|&g| g == 0.0));
        assert!(grads.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = NetworkSpec::new(6, 3, 2, 4);
        let a = DenseNetwork::init(spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = DenseNetwork::init(spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.params(), b.params());
        for l in 0..a.num_layers() {
            assert!(a.layer(l).bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_weights_within_limit_and_centered() {
        // 10^4 draws from U[-L, L]: the mean has standard error L / sqrt(3 * 10^4).
        let spec = NetworkSpec::new(50, 50, 3, 50);
        let net = DenseNetwork::init(spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let limit = (6.0f64 / 100.0).sqrt();
        let mut weights = Vec::new();
        for l in 0..net.num_layers() {
            weights.extend_from_slice(net.layer(l).weights);
        }
        assert!(weights.len() >= 10_000);
        let sample = &weights[..10_000];
        assert!(sample.iter().all(|w| w.abs() <= limit));
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let se = limit / (3.0f64 * sample.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn max_node_l1_examples() {
        let id = affine(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
        assert_eq!(id.max_node_l1(), 1.0);
        let row = affine(vec![0.5, -0.25], vec![0.25], 2);
        assert_eq!(row.max_node_l1(), 1.0);
    }

    #[test]
    fn depth_without_width_is_rejected() {
        assert!(DenseNetwork::zeros(NetworkSpec::new(2, 1, 2, 0)).is_err());
    }

    #[test]
    fn zero_input_network_is_a_learned_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = DenseNetwork::init(NetworkSpec::new(0, 3, 2, 4), &mut rng).unwrap();
        let (_, b_off) = net.layer_offsets(2);
        net.params_mut()[b_off] = 0.7;
        assert_eq!(net.forward(&[]).unwrap()[0], 0.7);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DenseNetwork::init(NetworkSpec::new(3, 2, 2, 4), &mut rng).unwrap();
        net.params_mut()[0] = 0.1 + 0.2;
        let text = net.to_text();
        let back = DenseNetwork::from_text(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_text(), text);
    }
}
