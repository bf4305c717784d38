//! Choice models mapping a [`ChoiceEvent`] to choice probabilities over its
//! assortment: MNL, TasteNet, DeepMNL, RUMnet and the vanilla network (VNN).
//!
//! Every model produces one or more *samples* of per-alternative utilities.
//! Each sample goes through a softmax restricted to the available
//! alternatives, and the choice probabilities are the mean over samples.
//! RUMnet has `K²` samples, one per pair of latent product/customer draws;
//! every other model has a single sample.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};
use crate::netcore::{parse_row, write_row, DenseNetwork, ForwardCache, NetworkSpec};

/// One observed choice: customer features, the offered products, which of
/// them were available, and the index of the chosen one.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceEvent {
    pub customer: Vec<f64>,
    pub products: Vec<Vec<f64>>,
    pub available: Vec<bool>,
    pub chosen: usize,
}

impl ChoiceEvent {
    /// Builds and validates an event.
    pub fn new(
        customer: Vec<f64>,
        products: Vec<Vec<f64>>,
        available: Vec<bool>,
        chosen: usize,
    ) -> Result<Self> {
        let event = ChoiceEvent {
            customer,
            products,
            available,
            chosen,
        };
        event.validate()?;
        Ok(event)
    }

    /// An event where every product is available.
    pub fn fully_available(customer: Vec<f64>, products: Vec<Vec<f64>>, chosen: usize) -> Result<Self> {
        let n = products.len();
        Self::new(customer, products, vec![true; n], chosen)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.products.len();
        if n == 0 {
            return Err(Error::InvalidEvent("empty assortment".into()));
        }
        if self.available.len() != n {
            return Err(Error::dim("availability mask", n, self.available.len()));
        }
        if self.chosen >= n {
            return Err(Error::InvalidEvent(format!(
                "chosen index {} out of range for {} alternatives",
                self.chosen, n
            )));
        }
        if !self.available[self.chosen] {
            return Err(Error::InvalidEvent(format!(
                "chosen alternative {} is unavailable",
                self.chosen
            )));
        }
        let d_x = self.products[0].len();
        if let Some(bad) = self.products.iter().find(|p| p.len() != d_x) {
            return Err(Error::dim("product features", d_x, bad.len()));
        }
        let finite = self.customer.iter().all(|v| v.is_finite())
            && self.products.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidEvent("non-finite feature".into()));
        }
        Ok(())
    }

    pub fn num_alternatives(&self) -> usize {
        self.products.len()
    }

    pub fn num_available(&self) -> usize {
        self.available.iter().filter(|&&a| a).count()
    }

    pub fn d_x(&self) -> usize {
        self.products.first().map_or(0, Vec::len)
    }

    pub fn d_z(&self) -> usize {
        self.customer.len()
    }
}

/// Softmax of `utilities` over the available alternatives; unavailable
/// alternatives get probability 0. Uses max-subtraction.
pub fn masked_softmax(utilities: &[f64], available: &[bool], out: &mut [f64]) -> Result<()> {
    let max = utilities
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(&u, _)| u)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoAvailableAlternative);
    }
    let mut total = 0.0;
    for ((o, &u), &a) in out.iter_mut().zip(utilities).zip(available) {
        *o = if a { (u - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Averages the masked softmax of every utility sample.
pub fn average_softmax(samples: &[Vec<f64>], available: &[bool]) -> Result<Vec<f64>> {
    let n = available.len();
    let mut mean = vec![0.0; n];
    let mut p = vec![0.0; n];
    for u in samples {
        if u.len() != n {
            return Err(Error::dim("utility sample", n, u.len()));
        }
        masked_softmax(u, available, &mut p)?;
        for (m, q) in mean.iter_mut().zip(&p) {
            *m += q;
        }
    }
    let scale = 1.0 / samples.len() as f64;
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(mean)
}

/// Gradient of a softmax output w.r.t. its utilities given `∂loss/∂p`:
/// `∂loss/∂u_i = p_i (g_i − Σ_j g_j p_j)`, scaled by `weight`.
fn softmax_backward(p: &[f64], g: &[f64], available: &[bool], weight: f64, du: &mut [f64]) {
    let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for i in 0..p.len() {
        du[i] = if available[i] {
            weight * p[i] * (g[i] - inner)
        } else {
            0.0
        };
    }
}

/// Adds i.i.d. standard Gumbel noise to the available utilities and returns
/// the argmax (lowest index on ties).
pub fn gumbel_argmax<R: Rng + ?Sized>(utilities: &[f64], available: &[bool], rng: &mut R) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&u, &a)) in utilities.iter().zip(available).enumerate() {
        if !a {
            continue;
        }
        let v = u + standard_gumbel(rng);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoAvailableAlternative)
}

/// `−ln(−ln U)` with `U` uniform on the open interval (0, 1).
pub fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    }
}

/// Architecture of a RUMnet: one utility network over
/// `x ⊕ ε_k1(x) ⊕ z ⊕ ν_k2(z)` and `K` latent-attribute networks for each
/// of products (`ε`) and customers (`ν`). All networks share depth and width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RumnetConfig {
    pub d_x: usize,
    pub d_z: usize,
    pub d_eps: usize,
    pub d_nu: usize,
    pub k: usize,
    pub depth: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RumnetModel {
    pub utility_net: DenseNetwork,
    pub eps_nets: Vec<DenseNetwork>,
    pub nu_nets: Vec<DenseNetwork>,
    d_x: usize,
    d_z: usize,
    d_eps: usize,
    d_nu: usize,
}

impl RumnetModel {
    pub fn init<R: Rng + ?Sized>(cfg: RumnetConfig, rng: &mut R) -> Result<Self> {
        if cfg.k == 0 {
            return Err(Error::InvalidArgument("RUMnet needs K >= 1".into()));
        }
        let utility_spec = NetworkSpec::new(cfg.d_x + cfg.d_eps + cfg.d_z + cfg.d_nu, 1, cfg.depth, cfg.width);
        let eps_spec = NetworkSpec::new(cfg.d_x, cfg.d_eps, cfg.depth, cfg.width);
        let nu_spec = NetworkSpec::new(cfg.d_z, cfg.d_nu, cfg.depth, cfg.width);
        let utility_net = DenseNetwork::init(utility_spec, rng)?;
        let eps_nets = (0..cfg.k)
            .map(|_| DenseNetwork::init(eps_spec, rng))
            .collect::<Result<_>>()?;
        let nu_nets = (0..cfg.k)
            .map(|_| DenseNetwork::init(nu_spec, rng))
            .collect::<Result<_>>()?;
        Self::from_parts(utility_net, eps_nets, nu_nets)
    }

    pub fn from_parts(
        utility_net: DenseNetwork,
        eps_nets: Vec<DenseNetwork>,
        nu_nets: Vec<DenseNetwork>,
    ) -> Result<Self> {
        if eps_nets.is_empty() || eps_nets.len() != nu_nets.len() {
            return Err(Error::InvalidSpec(format!(
                "need K >= 1 product and customer networks, got {} and {}",
                eps_nets.len(),
                nu_nets.len()
            )));
        }
        let eps_spec = *eps_nets[0].spec();
        let nu_spec = *nu_nets[0].spec();
        if eps_nets.iter().any(|n| *n.spec() != eps_spec) || nu_nets.iter().any(|n| *n.spec() != nu_spec) {
            return Err(Error::InvalidSpec("latent networks must share one spec per role".into()));
        }
        let (d_x, d_eps, d_z, d_nu) = (
            eps_spec.input_dim,
            eps_spec.output_dim,
            nu_spec.input_dim,
            nu_spec.output_dim,
        );
        let expected_in = d_x + d_eps + d_z + d_nu;
        if utility_net.input_dim() != expected_in {
            return Err(Error::dim("utility network input", expected_in, utility_net.input_dim()));
        }
        if utility_net.output_dim() != 1 {
            return Err(Error::dim("utility network output", 1, utility_net.output_dim()));
        }
        Ok(RumnetModel {
            utility_net,
            eps_nets,
            nu_nets,
            d_x,
            d_z,
            d_eps,
            d_nu,
        })
    }

    pub fn k(&self) -> usize {
        self.eps_nets.len()
    }

    pub fn d_eps(&self) -> usize {
        self.d_eps
    }

    pub fn d_nu(&self) -> usize {
        self.d_nu
    }
}

/// Intermediate values and scratch space of one RUMnet evaluation.
///
/// The utility network's first layer is split by input block so that the
/// `x`, `ε`, `z` and `ν` contributions are computed once and summed per
/// sample instead of multiplying the full concatenated input `K²·n` times.
/// Buffers are reused across events; see [`with_pass`].
#[derive(Default)]
struct RumnetPass {
    eps_caches: Vec<ForwardCache>,     // [k1 * n + i]
    nu_caches: Vec<ForwardCache>,      // [k2]
    utility_caches: Vec<ForwardCache>, // [s * n + i], s = k1 * K + k2
    utilities: Vec<Vec<f64>>,          // [s][i]
    per_sample: Vec<Vec<f64>>,         // softmax of each sample
    du: Vec<f64>,                      // ∂loss/∂u, [s * n + i]
    a_x: Vec<f64>,
    a_z: Vec<f64>,
    a_eps: Vec<f64>,
    a_nu: Vec<f64>,
    d_x: Vec<f64>,
    d_z: Vec<f64>,
    d_eps: Vec<f64>,
    d_nu: Vec<f64>,
    delta: Vec<f64>,
    dh: Vec<f64>,
}

thread_local! {
    static PASS: RefCell<RumnetPass> = RefCell::new(RumnetPass::default());
}

/// Runs `f` with this thread's reusable pass, or a fresh one if it is
/// already borrowed (a re-entrant call from an upstream callback).
fn with_pass<T>(f: impl FnOnce(&mut RumnetPass) -> T) -> T {
    PASS.with(|cell| match cell.try_borrow_mut() {
        Ok(mut pass) => f(&mut pass),
        Err(_) => f(&mut RumnetPass::default()),
    })
}

fn zeroed(v: &mut Vec<f64>, len: usize) {
    v.clear();
    v.resize(len, 0.0);
}

fn sized_rows(rows: &mut Vec<Vec<f64>>, count: usize, len: usize) {
    rows.resize_with(count, Vec::new);
    for r in rows.iter_mut() {
        zeroed(r, len);
    }
}

/// Column offsets of the utility network's input blocks.
#[derive(Clone, Copy)]
struct Blocks {
    x: usize,
    eps: usize,
    z: usize,
    nu: usize,
    end: usize,
}

impl RumnetModel {
    fn blocks(&self) -> Blocks {
        let x = 0;
        let eps = x + self.d_x;
        let z = eps + self.d_eps;
        let nu = z + self.d_z;
        Blocks {
            x,
            eps,
            z,
            nu,
            end: nu + self.d_nu,
        }
    }

    /// `W0[:, block] · v` for the utility network's first layer.
    fn block_product(&self, start: usize, v: &[f64], out: &mut [f64]) {
        let first = self.utility_net.layer(0);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &first.row(r)[start..start + v.len()];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn forward_pass(&self, event: &ChoiceEvent, pass: &mut RumnetPass) -> Result<()> {
        let k = self.k();
        let n = event.num_alternatives();
        let blocks = self.blocks();
        let first = self.utility_net.layer(0);
        let h0 = first.fan_out;

        pass.eps_caches.resize_with(k * n, ForwardCache::default);
        for (k1, net) in self.eps_nets.iter().enumerate() {
            for (i, x) in event.products.iter().enumerate() {
                net.forward_cached(x, &mut pass.eps_caches[k1 * n + i])?;
            }
        }
        pass.nu_caches.resize_with(k, ForwardCache::default);
        for (net, c) in self.nu_nets.iter().zip(pass.nu_caches.iter_mut()) {
            net.forward_cached(&event.customer, c)?;
        }

        // Shared first-layer contributions.
        zeroed(&mut pass.a_x, n * h0);
        for (i, x) in event.products.iter().enumerate() {
            let slot = &mut pass.a_x[i * h0..(i + 1) * h0];
            self.block_product(blocks.x, x, slot);
            for (s, b) in slot.iter_mut().zip(first.bias) {
                *s += b;
            }
        }
        zeroed(&mut pass.a_z, h0);
        self.block_product(blocks.z, &event.customer, &mut pass.a_z);
        zeroed(&mut pass.a_eps, k * n * h0);
        for (j, c) in pass.eps_caches.iter().enumerate() {
            self.block_product(blocks.eps, c.output(), &mut pass.a_eps[j * h0..(j + 1) * h0]);
        }
        zeroed(&mut pass.a_nu, k * h0);
        for (k2, c) in pass.nu_caches.iter().enumerate() {
            self.block_product(blocks.nu, c.output(), &mut pass.a_nu[k2 * h0..(k2 + 1) * h0]);
        }

        pass.utility_caches.resize_with(k * k * n, ForwardCache::default);
        sized_rows(&mut pass.utilities, k * k, n);
        // The first pre-activation is staged in `delta`, which is free until
        // the backward pass.
        zeroed(&mut pass.delta, h0);
        for k1 in 0..k {
            for k2 in 0..k {
                let s = k1 * k + k2;
                for i in 0..n {
                    let ax = &pass.a_x[i * h0..(i + 1) * h0];
                    let ae = &pass.a_eps[(k1 * n + i) * h0..(k1 * n + i + 1) * h0];
                    let an = &pass.a_nu[k2 * h0..(k2 + 1) * h0];
                    for r in 0..h0 {
                        pass.delta[r] = ax[r] + ae[r] + pass.a_z[r] + an[r];
                    }
                    let c = &mut pass.utility_caches[s * n + i];
                    pass.utilities[s][i] = self.utility_net.forward_from_first_preactivation(&pass.delta, c)?[0];
                }
            }
        }
        Ok(())
    }

    /// Accumulates parameter gradients given `pass.du = ∂loss/∂u`.
    fn backward_pass(&self, event: &ChoiceEvent, pass: &mut RumnetPass, grads: &mut [f64]) {
        let k = self.k();
        let n = event.num_alternatives();
        let blocks = self.blocks();
        let first = self.utility_net.layer(0);
        let h0 = first.fan_out;
        let fan_in = blocks.end;

        let u_len = self.utility_net.num_params();
        let (g_util, rest) = grads.split_at_mut(u_len);
        let eps_len = self.eps_nets[0].num_params();
        let (g_eps, g_nu) = rest.split_at_mut(k * eps_len);
        let nu_len = self.nu_nets[0].num_params();

        // Per-block sums of ∂loss/∂pre0.
        zeroed(&mut pass.d_x, n * h0);
        zeroed(&mut pass.d_z, h0);
        zeroed(&mut pass.d_eps, k * n * h0);
        zeroed(&mut pass.d_nu, k * h0);
        for k1 in 0..k {
            for k2 in 0..k {
                let s = k1 * k + k2;
                for i in 0..n {
                    let g = pass.du[s * n + i];
                    if g == 0.0 {
                        continue;
                    }
                    pass.delta.clear();
                    pass.delta.push(g);
                    self.utility_net.backprop_hidden(
                        &pass.utility_caches[s * n + i],
                        &mut pass.delta,
                        &mut pass.dh,
                        g_util,
                    );
                    for r in 0..h0 {
                        let d = pass.delta[r];
                        pass.d_x[i * h0 + r] += d;
                        pass.d_z[r] += d;
                        pass.d_eps[(k1 * n + i) * h0 + r] += d;
                        pass.d_nu[k2 * h0 + r] += d;
                    }
                }
            }
        }

        let (w_off, b_off) = self.utility_net.layer_offsets(0);
        let add_block = |g_util: &mut [f64], start: usize, delta: &[f64], v: &[f64]| {
            for r in 0..h0 {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut g_util[w_off + r * fan_in + start..w_off + r * fan_in + start + v.len()];
                for (gw, &x) in row.iter_mut().zip(v) {
                    *gw += d * x;
                }
            }
        };
        for (i, x) in event.products.iter().enumerate() {
            let delta = &pass.d_x[i * h0..(i + 1) * h0];
            add_block(g_util, blocks.x, delta, x);
            for r in 0..h0 {
                g_util[b_off + r] += delta[r];
            }
        }
        add_block(g_util, blocks.z, &pass.d_z, &event.customer);
        for (j, cache) in pass.eps_caches.iter().enumerate() {
            add_block(g_util, blocks.eps, &pass.d_eps[j * h0..(j + 1) * h0], cache.output());
        }
        for (k2, cache) in pass.nu_caches.iter().enumerate() {
            add_block(g_util, blocks.nu, &pass.d_nu[k2 * h0..(k2 + 1) * h0], cache.output());
        }

        // Latent networks: upstream is W0[:, block]ᵀ · delta.
        let transpose_block = |start: usize, width: usize, delta: &[f64], out: &mut Vec<f64>| -> bool {
            zeroed(out, width);
            for r in 0..h0 {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &first.row(r)[start..start + width];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += d * w;
                }
            }
            out.iter().any(|&v| v != 0.0)
        };
        for k1 in 0..k {
            let g = &mut g_eps[k1 * eps_len..(k1 + 1) * eps_len];
            for i in 0..n {
                let j = k1 * n + i;
                if transpose_block(blocks.eps, self.d_eps, &pass.d_eps[j * h0..(j + 1) * h0], &mut pass.delta) {
                    self.eps_nets[k1].backprop_params(&pass.eps_caches[j], &mut pass.delta, &mut pass.dh, g);
                }
            }
        }
        for k2 in 0..k {
            let g = &mut g_nu[k2 * nu_len..(k2 + 1) * nu_len];
            if transpose_block(blocks.nu, self.d_nu, &pass.d_nu[k2 * h0..(k2 + 1) * h0], &mut pass.delta) {
                self.nu_nets[k2].backprop_params(&pass.nu_caches[k2], &mut pass.delta, &mut pass.dh, g);
            }
        }
    }
}

/// The model zoo. Every variant maps an event to per-sample utilities.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Linear utility `βᵀx`.
    Mnl { beta: Vec<f64> },
    /// `βᵀx + N(z)ᵀx`: customer-dependent taste coefficients.
    TasteNet {
        beta: Vec<f64>,
        taste_net: DenseNetwork,
    },
    /// `N(x ⊕ z)`.
    DeepMnl { net: DenseNetwork, d_z: usize },
    Rumnet(RumnetModel),
    /// One network over the concatenation of all `n` products and the
    /// customer, emitting `n` utilities. Bound to a fixed assortment size.
    Vnn {
        net: DenseNetwork,
        n_alternatives: usize,
        d_z: usize,
    },
}

impl ModelKind {
    pub fn mnl(d_x: usize) -> Self {
        ModelKind::Mnl { beta: vec![0.0; d_x] }
    }

    pub fn tastenet<R: Rng + ?Sized>(d_x: usize, d_z: usize, depth: usize, width: usize, rng: &mut R) -> Result<Self> {
        Ok(ModelKind::TasteNet {
            beta: vec![0.0; d_x],
            taste_net: DenseNetwork::init(NetworkSpec::new(d_z, d_x, depth, width), rng)?,
        })
    }

    pub fn deep_mnl<R: Rng + ?Sized>(d_x: usize, d_z: usize, depth: usize, width: usize, rng: &mut R) -> Result<Self> {
        Ok(ModelKind::DeepMnl {
            net: DenseNetwork::init(NetworkSpec::new(d_x + d_z, 1, depth, width), rng)?,
            d_z,
        })
    }

    pub fn rumnet<R: Rng + ?Sized>(cfg: RumnetConfig, rng: &mut R) -> Result<Self> {
        Ok(ModelKind::Rumnet(RumnetModel::init(cfg, rng)?))
    }

    pub fn vnn<R: Rng + ?Sized>(
        n_alternatives: usize,
        d_x: usize,
        d_z: usize,
        depth: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ModelKind::Vnn {
            net: DenseNetwork::init(
                NetworkSpec::new(n_alternatives * d_x + d_z, n_alternatives, depth, width),
                rng,
            )?,
            n_alternatives,
            d_z,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mnl { .. } => "mnl",
            ModelKind::TasteNet { .. } => "tastenet",
            ModelKind::DeepMnl { .. } => "deepmnl",
            ModelKind::Rumnet(_) => "rumnet",
            ModelKind::Vnn { .. } => "vnn",
        }
    }

    pub fn d_x(&self) -> usize {
        match self {
            ModelKind::Mnl { beta } | ModelKind::TasteNet { beta, .. } => beta.len(),
            ModelKind::DeepMnl { net, d_z } => net.input_dim() - d_z,
            ModelKind::Rumnet(r) => r.d_x,
            ModelKind::Vnn {
                net,
                n_alternatives,
                d_z,
            } => (net.input_dim() - d_z) / n_alternatives,
        }
    }

    pub fn d_z(&self) -> usize {
        match self {
            ModelKind::Mnl { .. } => 0,
            ModelKind::TasteNet { taste_net, .. } => taste_net.input_dim(),
            ModelKind::DeepMnl { d_z, .. } | ModelKind::Vnn { d_z, .. } => *d_z,
            ModelKind::Rumnet(r) => r.d_z,
        }
    }

    /// Number of utility samples averaged by [`probabilities`](Self::probabilities).
    pub fn num_samples(&self) -> usize {
        match self {
            ModelKind::Rumnet(r) => r.k() * r.k(),
            _ => 1,
        }
    }

    /// Networks in parameter order.
    pub fn networks(&self) -> Vec<&DenseNetwork> {
        match self {
            ModelKind::Mnl { .. } => vec![],
            ModelKind::TasteNet { taste_net, .. } => vec![taste_net],
            ModelKind::DeepMnl { net, .. } | ModelKind::Vnn { net, .. } => vec![net],
            ModelKind::Rumnet(r) => std::iter::once(&r.utility_net)
                .chain(&r.eps_nets)
                .chain(&r.nu_nets)
                .collect(),
        }
    }

    fn networks_mut(&mut self) -> Vec<&mut DenseNetwork> {
        match self {
            ModelKind::Mnl { .. } => vec![],
            ModelKind::TasteNet { taste_net, .. } => vec![taste_net],
            ModelKind::DeepMnl { net, .. } | ModelKind::Vnn { net, .. } => vec![net],
            ModelKind::Rumnet(r) => std::iter::once(&mut r.utility_net)
                .chain(r.eps_nets.iter_mut())
                .chain(r.nu_nets.iter_mut())
                .collect(),
        }
    }

    fn beta(&self) -> Option<&Vec<f64>> {
        match self {
            ModelKind::Mnl { beta } | ModelKind::TasteNet { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// Total parameter count. The flat layout is `β` (when present)
    /// followed by every network in [`networks`](Self::networks) order.
    pub fn num_params(&self) -> usize {
        self.beta().map_or(0, Vec::len) + self.networks().iter().map(|n| n.num_params()).sum::<usize>()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        if let Some(beta) = self.beta() {
            out.extend_from_slice(beta);
        }
        for net in self.networks() {
            out.extend_from_slice(net.params());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dim("model parameters", self.num_params(), params.len()));
        }
        let mut rest = params;
        if let ModelKind::Mnl { beta } | ModelKind::TasteNet { beta, .. } = self {
            let (head, tail) = rest.split_at(beta.len());
            beta.copy_from_slice(head);
            rest = tail;
        }
        for net in self.networks_mut() {
            let (head, tail) = rest.split_at(net.num_params());
            net.params_mut().copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Largest node 1-norm over all constituent networks (0 for MNL).
    pub fn max_node_l1(&self) -> f64 {
        self.networks()
            .iter()
            .map(|n| n.max_node_l1())
            .fold(0.0, f64::max)
    }

    fn check_event(&self, event: &ChoiceEvent) -> Result<()> {
        if event.products.is_empty() {
            return Err(Error::InvalidEvent("empty assortment".into()));
        }
        if event.d_x() != self.d_x() {
            return Err(Error::dim("product features", self.d_x(), event.d_x()));
        }
        // MNL has no customer block and ignores whatever the event carries.
        if !matches!(self, ModelKind::Mnl { .. }) && event.d_z() != self.d_z() {
            return Err(Error::dim("customer features", self.d_z(), event.d_z()));
        }
        if let ModelKind::Vnn { n_alternatives, .. } = self {
            if event.num_alternatives() != *n_alternatives {
                return Err(Error::dim("VNN assortment size", *n_alternatives, event.num_alternatives()));
            }
        }
        if event.available.len() != event.num_alternatives() {
            return Err(Error::dim("availability mask", event.num_alternatives(), event.available.len()));
        }
        Ok(())
    }

    /// Per-sample utilities, `[sample][alternative]`. Unavailable
    /// alternatives are evaluated like the others; masking happens in the
    /// softmax.
    pub fn utilities(&self, event: &ChoiceEvent) -> Result<Vec<Vec<f64>>> {
        self.check_event(event)?;
        Ok(match self {
            ModelKind::Mnl { beta } => vec![event.products.iter().map(|x| dot(beta, x)).collect()],
            ModelKind::TasteNet { beta, taste_net } => {
                let taste = taste_net.forward(&event.customer)?;
                vec![event
                    .products
                    .iter()
                    .map(|x| dot(beta, x) + dot(&taste, x))
                    .collect()]
            }
            ModelKind::DeepMnl { net, .. } => {
                let mut input = Vec::with_capacity(net.input_dim());
                let mut row = Vec::with_capacity(event.num_alternatives());
                for x in &event.products {
                    input.clear();
                    input.extend_from_slice(x);
                    input.extend_from_slice(&event.customer);
                    row.push(net.forward(&input)?[0]);
                }
                vec![row]
            }
            ModelKind::Rumnet(r) => with_pass(|pass| -> Result<_> {
                r.forward_pass(event, pass)?;
                Ok(pass.utilities.clone())
            })?,
            ModelKind::Vnn { net, .. } => vec![net.forward(&vnn_input(event))?],
        })
    }

    pub fn probabilities(&self, event: &ChoiceEvent) -> Result<Vec<f64>> {
        let samples = self.utilities(event)?;
        average_softmax(&samples, &event.available)
    }

    /// Accumulates `Σ_i upstream_i · ∂p_i/∂θ` into `grads` (flat layout of
    /// [`params`](Self::params)).
    pub fn prob_gradients(&self, event: &ChoiceEvent, upstream: &[f64], grads: &mut [f64]) -> Result<()> {
        self.evaluate(event, Some((&mut |_: &[f64]| upstream.to_vec(), grads)))
            .map(|_| ())
    }

    /// Forward pass, optionally followed by a backward pass whose upstream
    /// `∂loss/∂p` is computed from the probabilities by `upstream`.
    pub fn evaluate(
        &self,
        event: &ChoiceEvent,
        backward: Option<(&mut dyn FnMut(&[f64]) -> Vec<f64>, &mut [f64])>,
    ) -> Result<Vec<f64>> {
        self.check_event(event)?;
        let n = event.num_alternatives();
        if let Some((_, grads)) = &backward {
            if grads.len() != self.num_params() {
                return Err(Error::dim("model gradient buffer", self.num_params(), grads.len()));
            }
        }
        let available = &event.available;
        match self {
            ModelKind::Rumnet(r) => with_pass(|pass| {
                r.forward_pass(event, pass)?;
                let s_count = pass.utilities.len();
                sized_rows(&mut pass.per_sample, s_count, n);
                let mut mean = vec![0.0; n];
                for (u, p) in pass.utilities.iter().zip(pass.per_sample.iter_mut()) {
                    masked_softmax(u, available, p)?;
                    for (m, q) in mean.iter_mut().zip(p.iter()) {
                        *m += q;
                    }
                }
                let scale = 1.0 / s_count as f64;
                mean.iter_mut().for_each(|m| *m *= scale);
                if let Some((upstream_fn, grads)) = backward {
                    let g = upstream_fn(&mean);
                    check_upstream(&g, n)?;
                    zeroed(&mut pass.du, s_count * n);
                    for (p, d) in pass.per_sample.iter().zip(pass.du.chunks_mut(n)) {
                        softmax_backward(p, &g, available, scale, d);
                    }
                    r.backward_pass(event, pass, grads);
                }
                Ok(mean)
            }),
            ModelKind::Mnl { beta } => {
                let u: Vec<f64> = event.products.iter().map(|x| dot(beta, x)).collect();
                let p = softmax_vec(&u, available)?;
                if let Some((upstream_fn, grads)) = backward {
                    let du = single_sample_du(&p, upstream_fn, available)?;
                    accumulate_linear(&event.products, &du, grads);
                }
                Ok(p)
            }
            ModelKind::TasteNet { beta, taste_net } => {
                let mut cache = ForwardCache::default();
                let taste = taste_net.forward_cached(&event.customer, &mut cache)?.to_vec();
                let u: Vec<f64> = event
                    .products
                    .iter()
                    .map(|x| dot(beta, x) + dot(&taste, x))
                    .collect();
                let p = softmax_vec(&u, available)?;
                if let Some((upstream_fn, grads)) = backward {
                    let du = single_sample_du(&p, upstream_fn, available)?;
                    let (g_beta, g_net) = grads.split_at_mut(beta.len());
                    accumulate_linear(&event.products, &du, g_beta);
                    let mut g_taste = vec![0.0; beta.len()];
                    accumulate_linear(&event.products, &du, &mut g_taste);
                    taste_net.backward_into(&cache, &g_taste, g_net)?;
                }
                Ok(p)
            }
            ModelKind::DeepMnl { net, .. } => {
                let mut caches = Vec::with_capacity(n);
                let mut u = Vec::with_capacity(n);
                let mut input = Vec::with_capacity(net.input_dim());
                for x in &event.products {
                    input.clear();
                    input.extend_from_slice(x);
                    input.extend_from_slice(&event.customer);
                    let mut c = ForwardCache::default();
                    u.push(net.forward_cached(&input, &mut c)?[0]);
                    caches.push(c);
                }
                let p = softmax_vec(&u, available)?;
                if let Some((upstream_fn, grads)) = backward {
                    let du = single_sample_du(&p, upstream_fn, available)?;
                    for (c, &d) in caches.iter().zip(&du) {
                        if d != 0.0 {
                            net.backward_into(c, &[d], grads)?;
                        }
                    }
                }
                Ok(p)
            }
            ModelKind::Vnn { net, .. } => {
                let mut cache = ForwardCache::default();
                let u = net.forward_cached(&vnn_input(event), &mut cache)?.to_vec();
                let p = softmax_vec(&u, available)?;
                if let Some((upstream_fn, grads)) = backward {
                    let du = single_sample_du(&p, upstream_fn, available)?;
                    net.backward_into(&cache, &du, grads)?;
                }
                Ok(p)
            }
        }
    }

    /// Draws one latent sample uniformly, perturbs its available utilities
    /// with i.i.d. standard Gumbel noise, and returns the argmax.
    pub fn sample_choice<R: Rng + ?Sized>(&self, event: &ChoiceEvent, rng: &mut R) -> Result<usize> {
        let samples = self.utilities(event)?;
        let s = if samples.len() == 1 {
            0
        } else {
            rng.gen_range(0..samples.len())
        };
        gumbel_argmax(&samples[s], &event.available, rng)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vnn_input(event: &ChoiceEvent) -> Vec<f64> {
    let mut input: Vec<f64> = event.products.iter().flatten().copied().collect();
    input.extend_from_slice(&event.customer);
    input
}

fn softmax_vec(u: &[f64], available: &[bool]) -> Result<Vec<f64>> {
    let mut p = vec![0.0; u.len()];
    masked_softmax(u, available, &mut p)?;
    Ok(p)
}

fn check_upstream(g: &[f64], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::dim("upstream gradient", n, g.len()));
    }
    Ok(())
}

fn single_sample_du(
    p: &[f64],
    upstream_fn: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    available: &[bool],
) -> Result<Vec<f64>> {
    let g = upstream_fn(p);
    check_upstream(&g, p.len())?;
    let mut du = vec![0.0; p.len()];
    softmax_backward(p, &g, available, 1.0, &mut du);
    Ok(du)
}

/// `grads += Σ_i du_i x_i`.
fn accumulate_linear(products: &[Vec<f64>], du: &[f64], grads: &mut [f64]) {
    for (x, &d) in products.iter().zip(du) {
        if d == 0.0 {
            continue;
        }
        for (g, &v) in grads.iter_mut().zip(x) {
            *g += d * v;
        }
    }
}

// Serialization ---------------------------------------------------------------

impl ModelKind {
    /// Text container: a `choice_model <kind>` header, kind-specific fields,
    /// then the constituent networks in their own text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "choice_model {}", self.name()).unwrap();
        match self {
            ModelKind::Mnl { beta } => {
                writeln!(out, "beta {}", beta.len()).unwrap();
                write_row(&mut out, beta);
            }
            ModelKind::TasteNet { beta, taste_net } => {
                writeln!(out, "beta {}", beta.len()).unwrap();
                write_row(&mut out, beta);
                taste_net.write_text(&mut out);
            }
            ModelKind::DeepMnl { net, d_z } => {
                writeln!(out, "d_z {d_z}").unwrap();
                net.write_text(&mut out);
            }
            ModelKind::Rumnet(r) => {
                writeln!(out, "k {}", r.k()).unwrap();
                r.utility_net.write_text(&mut out);
                for net in r.eps_nets.iter().chain(&r.nu_nets) {
                    net.write_text(&mut out);
                }
            }
            ModelKind::Vnn {
                net,
                n_alternatives,
                d_z,
            } => {
                writeln!(out, "n_alternatives {n_alternatives}").unwrap();
                writeln!(out, "d_z {d_z}").unwrap();
                net.write_text(&mut out);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = std::io::Cursor::new(text).lines();
        let fmt_err = |message: String| Error::Format {
            what: "model",
            message,
        };
        let next_line = |lines: &mut std::io::Lines<std::io::Cursor<&str>>| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(fmt_err(e.to_string())),
                None => Err(fmt_err("unexpected end of input".into())),
            }
        };
        let header = next_line(&mut lines)?;
        let kind = header
            .strip_prefix("choice_model ")
            .ok_or_else(|| fmt_err(format!("bad header `{header}`")))?
            .trim()
            .to_string();
        let field = |lines: &mut std::io::Lines<std::io::Cursor<&str>>, name: &str| -> Result<usize> {
            let line = next_line(lines)?;
            line.strip_prefix(name)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| fmt_err(format!("expected `{name} <int>`, found `{line}`")))
        };
        let model = match kind.as_str() {
            "mnl" => {
                let d = field(&mut lines, "beta")?;
                ModelKind::Mnl {
                    beta: parse_row(&next_line(&mut lines)?, d)?,
                }
            }
            "tastenet" => {
                let d = field(&mut lines, "beta")?;
                let beta = parse_row(&next_line(&mut lines)?, d)?;
                let taste_net = DenseNetwork::read_text(&mut lines)?;
                if taste_net.output_dim() != d {
                    return Err(Error::dim("taste network output", d, taste_net.output_dim()));
                }
                ModelKind::TasteNet { beta, taste_net }
            }
            "deepmnl" => {
                let d_z = field(&mut lines, "d_z")?;
                let net = DenseNetwork::read_text(&mut lines)?;
                if d_z > net.input_dim() || net.output_dim() != 1 {
                    return Err(fmt_err("DeepMNL network shape inconsistent with d_z".into()));
                }
                ModelKind::DeepMnl { net, d_z }
            }
            "rumnet" => {
                let k = field(&mut lines, "k")?;
                let utility_net = DenseNetwork::read_text(&mut lines)?;
                let eps_nets = (0..k)
                    .map(|_| DenseNetwork::read_text(&mut lines))
                    .collect::<Result<Vec<_>>>()?;
                let nu_nets = (0..k)
                    .map(|_| DenseNetwork::read_text(&mut lines))
                    .collect::<Result<Vec<_>>>()?;
                ModelKind::Rumnet(RumnetModel::from_parts(utility_net, eps_nets, nu_nets)?)
            }
            "vnn" => {
                let n_alternatives = field(&mut lines, "n_alternatives")?;
                let d_z = field(&mut lines, "d_z")?;
                let net = DenseNetwork::read_text(&mut lines)?;
                if net.output_dim() != n_alternatives
                    || n_alternatives == 0
                    || net.input_dim() < d_z
                    || (net.input_dim() - d_z) % n_alternatives != 0
                {
                    return Err(fmt_err("VNN network shape inconsistent with header".into()));
                }
                ModelKind::Vnn {
                    net,
                    n_alternatives,
                    d_z,
                }
            }
            other => return Err(fmt_err(format!("unknown model kind `{other}`"))),
        };
        Ok(model)
    }
}
