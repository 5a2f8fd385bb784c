//! Forward evaluation with a recorded trace, and exact reverse-mode gradients
//! with respect to parameters and input cells.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::{LossEval, LossSpec, Target};
use crate::matrix::Inputs;
use crate::nn::{Activation, LayerRef, LayerSpec, NetworkSpec, ParamLayout, Parameters, Task};
use crate::scalar::Scalar;

/// Row-major `len × width` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq<T> {
    pub len: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Seq<T> {
    pub fn zeros(len: usize, width: usize) -> Self {
        Self {
            len,
            width,
            data: vec![T::zero(); len * width],
        }
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    fn row_mut(&mut self, t: usize) -> &mut [T] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    /// Per-column sums of absolute values.
    pub fn abs_column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.width];
        for t in 0..self.len {
            for (acc, v) in out.iter_mut().zip(self.row(t)) {
                *acc += v.abs();
            }
        }
        out
    }
}

/// Network output for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<T> {
    /// Class posterior.
    Posterior(Vec<T>),
    /// One value per retained time step.
    Sequence(Vec<T>),
}

impl<T: Scalar> Prediction<T> {
    pub fn values(&self) -> &[T] {
        match self {
            Prediction::Posterior(v) | Prediction::Sequence(v) => v,
        }
    }

    /// Most probable class, ties toward the lower index.
    pub fn argmax(&self) -> usize {
        argmax(self.values())
    }
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Gradients of one scalar with respect to every parameter and input cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<T> {
    pub param_grads: Vec<T>,
    pub input_grads: BTreeMap<String, Seq<T>>,
}

enum Cache<T> {
    Conv {
        input: Seq<T>,
        output: Seq<T>,
    },
    Pool {
        input_len: usize,
        argmax: Vec<usize>,
    },
    Lstm {
        input: Seq<T>,
        /// Post-activation gates `[i, f, g, o]` per step.
        gates: Vec<T>,
        cells: Vec<T>,
        hidden: Seq<T>,
    },
    Dense {
        input: Seq<T>,
        output: Seq<T>,
    },
}

/// Everything needed to run the backward pass for one example.
pub struct Trace<T> {
    branches: Vec<Vec<Cache<T>>>,
    trunk: Vec<Cache<T>>,
    branch_out_lens: Vec<usize>,
    prediction: Prediction<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn prediction(&self) -> &Prediction<T> {
        &self.prediction
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn activate<T: Scalar>(a: Activation, x: T) -> T {
    match a {
        Activation::Relu => x.max(T::zero()),
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => sigmoid(x),
        Activation::Linear | Activation::Softmax => x,
    }
}

/// Derivative expressed through the activation's output.
#[inline]
fn activation_slope<T: Scalar>(a: Activation, y: T) -> T {
    match a {
        Activation::Relu => {
            if y > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Tanh => T::one() - y * y,
        Activation::Sigmoid => y * (T::one() - y),
        Activation::Linear | Activation::Softmax => T::one(),
    }
}

fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_finite<T: Scalar>(values: &[T], at: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            context: at.to_string(),
        }),
        None => Ok(()),
    }
}

fn conv_forward<T: Scalar>(layer: &LayerSpec, p: &[T], x: Seq<T>) -> (Seq<T>, Cache<T>) {
    let LayerSpec::Conv1d {
        filters,
        kernel_width: k,
        activation,
        padding,
    } = *layer
    else {
        unreachable!()
    };
    let c = x.width;
    let (pl, pr) = padding.amounts(k);
    let out_len = x.len + pl + pr + 1 - k;
    let (w, b) = p.split_at(filters * k * c);
    let mut y = Seq::zeros(out_len, filters);
    for t in 0..out_len {
        let row = y.row_mut(t);
        for (o, out) in row.iter_mut().enumerate() {
            let mut acc = b[o];
            for j in 0..k {
                let src = t + j;
                if src < pl || src - pl >= x.len {
                    continue;
                }
                acc += dot(&w[(o * k + j) * c..(o * k + j + 1) * c], x.row(src - pl));
            }
            *out = activate(activation, acc);
        }
    }
    (
        y.clone(),
        Cache::Conv {
            input: x,
            output: y,
        },
    )
}

fn conv_backward<T: Scalar>(
    layer: &LayerSpec,
    p: &[T],
    g: &mut [T],
    cache: &Cache<T>,
    dy: Seq<T>,
) -> Seq<T> {
    let (
        LayerSpec::Conv1d {
            filters,
            kernel_width: k,
            activation,
            padding,
        },
        Cache::Conv { input: x, output: y },
    ) = (*layer, cache)
    else {
        unreachable!()
    };
    let c = x.width;
    let (pl, _) = padding.amounts(k);
    let (w, _) = p.split_at(filters * k * c);
    let (gw, gb) = g.split_at_mut(filters * k * c);
    let mut dx = Seq::zeros(x.len, c);
    for t in 0..y.len {
        for o in 0..filters {
            let dz = dy.row(t)[o] * activation_slope(activation, y.row(t)[o]);
            if dz == T::zero() {
                continue;
            }
            gb[o] += dz;
            for j in 0..k {
                let src = t + j;
                if src < pl || src - pl >= x.len {
                    continue;
                }
                let base = (o * k + j) * c;
                axpy(dz, x.row(src - pl), &mut gw[base..base + c]);
                axpy(dz, &w[base..base + c], dx.row_mut(src - pl));
            }
        }
    }
    dx
}

fn pool_forward<T: Scalar>(stride: usize, x: Seq<T>) -> (Seq<T>, Cache<T>) {
    let out_len = x.len / stride;
    let mut y = Seq::zeros(out_len, x.width);
    let mut arg = vec![0; out_len * x.width];
    for t in 0..out_len {
        for ch in 0..x.width {
            let mut best = t * stride;
            for s in t * stride + 1..(t + 1) * stride {
                if x.data[s * x.width + ch] > x.data[best * x.width + ch] {
                    best = s;
                }
            }
            y.data[t * x.width + ch] = x.data[best * x.width + ch];
            arg[t * x.width + ch] = best * x.width + ch;
        }
    }
    (
        y,
        Cache::Pool {
            input_len: x.len,
            argmax: arg,
        },
    )
}

fn pool_backward<T: Scalar>(cache: &Cache<T>, dy: Seq<T>) -> Seq<T> {
    let Cache::Pool { input_len, argmax } = cache else {
        unreachable!()
    };
    let mut dx = Seq::zeros(*input_len, dy.width);
    for (&src, &g) in argmax.iter().zip(&dy.data) {
        dx.data[src] += g;
    }
    dx
}

fn lstm_forward<T: Scalar>(units: usize, p: &[T], x: Seq<T>) -> (Seq<T>, Cache<T>) {
    let u = units;
    let c = x.width;
    let (wx, rest) = p.split_at(4 * u * c);
    let (wh, b) = rest.split_at(4 * u * u);
    let mut gates = vec![T::zero(); x.len * 4 * u];
    let mut cells = vec![T::zero(); x.len * u];
    let mut hidden = Seq::zeros(x.len, u);
    let mut z = vec![T::zero(); 4 * u];
    let zeros = vec![T::zero(); u];
    for t in 0..x.len {
        let xt = x.row(t);
        let h_prev: &[T] = if t == 0 { &zeros } else { hidden.row(t - 1) };
        for r in 0..4 * u {
            z[r] = b[r] + dot(&wx[r * c..(r + 1) * c], xt) + dot(&wh[r * u..(r + 1) * u], h_prev);
        }
        let gt = &mut gates[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            gt[j] = sigmoid(z[j]);
            gt[u + j] = sigmoid(z[u + j]);
            gt[2 * u + j] = z[2 * u + j].tanh();
            gt[3 * u + j] = sigmoid(z[3 * u + j]);
        }
        for j in 0..u {
            let c_prev = if t == 0 { T::zero() } else { cells[(t - 1) * u + j] };
            let ct = gt[u + j] * c_prev + gt[j] * gt[2 * u + j];
            cells[t * u + j] = ct;
            hidden.data[t * u + j] = gt[3 * u + j] * ct.tanh();
        }
    }
    (
        hidden.clone(),
        Cache::Lstm {
            input: x,
            gates,
            cells,
            hidden,
        },
    )
}

fn lstm_backward<T: Scalar>(units: usize, p: &[T], g: &mut [T], cache: &Cache<T>, dh_ext: Seq<T>) -> Seq<T> {
    let Cache::Lstm {
        input: x,
        gates,
        cells,
        hidden,
    } = cache
    else {
        unreachable!()
    };
    let u = units;
    let c = x.width;
    let (wx, rest) = p.split_at(4 * u * c);
    let (wh, _) = rest.split_at(4 * u * u);
    let (gwx, grest) = g.split_at_mut(4 * u * c);
    let (gwh, gb) = grest.split_at_mut(4 * u * u);

    let mut dx = Seq::zeros(x.len, c);
    let mut dh_next = vec![T::zero(); u];
    let mut dc_next = vec![T::zero(); u];
    let mut dz = vec![T::zero(); 4 * u];
    for t in (0..x.len).rev() {
        let gt = &gates[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            let (i, f, gg, o) = (gt[j], gt[u + j], gt[2 * u + j], gt[3 * u + j]);
            let ct = cells[t * u + j];
            let c_prev = if t == 0 { T::zero() } else { cells[(t - 1) * u + j] };
            let tc = ct.tanh();
            let dh = dh_ext.data[t * u + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * o * (T::one() - tc * tc);
            dz[j] = dc * gg * i * (T::one() - i);
            dz[u + j] = dc * c_prev * f * (T::one() - f);
            dz[2 * u + j] = dc * i * (T::one() - gg * gg);
            dz[3 * u + j] = d_o * o * (T::one() - o);
            dc_next[j] = dc * f;
        }
        let xt = x.row(t);
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        for r in 0..4 * u {
            let d = dz[r];
            if d == T::zero() {
                continue;
            }
            gb[r] += d;
            axpy(d, xt, &mut gwx[r * c..(r + 1) * c]);
            axpy(d, &wx[r * c..(r + 1) * c], dx.row_mut(t));
            if t > 0 {
                axpy(d, hidden.row(t - 1), &mut gwh[r * u..(r + 1) * u]);
                axpy(d, &wh[r * u..(r + 1) * u], &mut dh_next);
            }
        }
    }
    dx
}

fn dense_forward<T: Scalar>(units: usize, activation: Activation, p: &[T], x: Seq<T>) -> (Seq<T>, Cache<T>) {
    let n_in = x.width;
    let (w, b) = p.split_at(units * n_in);
    let mut y = Seq::zeros(x.len, units);
    for t in 0..x.len {
        let xt = x.row(t);
        let row = y.row_mut(t);
        for (o, out) in row.iter_mut().enumerate() {
            *out = activate(activation, b[o] + dot(&w[o * n_in..(o + 1) * n_in], xt));
        }
        if activation == Activation::Softmax {
            softmax_in_place(row);
        }
    }
    (
        y.clone(),
        Cache::Dense {
            input: x,
            output: y,
        },
    )
}

fn dense_backward<T: Scalar>(
    units: usize,
    activation: Activation,
    p: &[T],
    g: &mut [T],
    cache: &Cache<T>,
    dy: Seq<T>,
) -> Seq<T> {
    let Cache::Dense { input: x, output: y } = cache else {
        unreachable!()
    };
    let n_in = x.width;
    let (w, _) = p.split_at(units * n_in);
    let (gw, gb) = g.split_at_mut(units * n_in);
    let mut dx = Seq::zeros(x.len, n_in);
    let mut dz = vec![T::zero(); units];
    for t in 0..x.len {
        let yt = y.row(t);
        let dyt = dy.row(t);
        if activation == Activation::Softmax {
            let s = dot(yt, dyt);
            for o in 0..units {
                dz[o] = yt[o] * (dyt[o] - s);
            }
        } else {
            for o in 0..units {
                dz[o] = dyt[o] * activation_slope(activation, yt[o]);
            }
        }
        for (o, &d) in dz.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            gb[o] += d;
            axpy(d, x.row(t), &mut gw[o * n_in..(o + 1) * n_in]);
            axpy(d, &w[o * n_in..(o + 1) * n_in], dx.row_mut(t));
        }
    }
    dx
}

fn describe(spec: &NetworkSpec, at: LayerRef) -> String {
    match at {
        LayerRef::Branch { branch, layer } => {
            let b = &spec.branches[branch];
            format!("branch {:?} layer {layer} ({})", b.input, b.layers[layer].kind())
        }
        LayerRef::Trunk { layer } => format!("trunk layer {layer} ({})", spec.trunk[layer].kind()),
    }
}

/// Runs the network and keeps every intermediate needed by [`vjp`].
pub fn forward_trace<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    inputs: &Inputs<T>,
) -> Result<Trace<T>> {
    run(spec, params, inputs, true)
}

fn run<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    inputs: &Inputs<T>,
    keep: bool,
) -> Result<Trace<T>> {
    spec.validate()?;
    if params.len() != spec.count_parameters() {
        return Err(Error::shape(format!(
            "parameter vector has {} entries, spec needs {}",
            params.len(),
            spec.count_parameters()
        )));
    }
    let layout = ParamLayout::new(spec);
    let mut branch_caches = Vec::with_capacity(spec.branches.len());
    let mut branch_outs = Vec::with_capacity(spec.branches.len());
    for (bi, branch) in spec.branches.iter().enumerate() {
        let m = inputs.get(&branch.input).ok_or_else(|| {
            Error::shape(format!("missing input for branch {:?}", branch.input))
        })?;
        if m.n_bands() != branch.input_width {
            return Err(Error::shape(format!(
                "branch {:?}, feature axis: got {} bands, expected {}",
                branch.input,
                m.n_bands(),
                branch.input_width
            )));
        }
        if NetworkSpec::branch_output_len(branch, m.n_frames()).is_none() {
            return Err(Error::shape(format!(
                "branch {:?}, time axis: {} frames is too short for the encoder",
                branch.input,
                m.n_frames()
            )));
        }
        let mut x = Seq {
            len: m.n_frames(),
            width: m.n_bands(),
            data: m.values().to_vec(),
        };
        let mut caches = Vec::with_capacity(branch.layers.len());
        for (li, layer) in branch.layers.iter().enumerate() {
            let at = LayerRef::Branch { branch: bi, layer: li };
            let p = &params.values[layout.range(at)];
            let (y, cache) = match *layer {
                LayerSpec::Conv1d { .. } => conv_forward(layer, p, x),
                LayerSpec::MaxPool1d { stride } => pool_forward(stride, x),
                LayerSpec::Lstm { units } => lstm_forward(units, p, x),
                _ => unreachable!("validated"),
            };
            check_finite(&y.data, &describe(spec, at))?;
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        branch_caches.push(caches);
        branch_outs.push(x);
    }

    let branch_out_lens: Vec<usize> = branch_outs.iter().map(|s| s.len).collect();
    let fused_w = spec.fused_width();
    let mut x = match spec.task {
        Task::Classification { .. } => {
            let mut v = Vec::with_capacity(fused_w);
            for s in &branch_outs {
                v.extend_from_slice(s.row(s.len - 1));
            }
            Seq {
                len: 1,
                width: fused_w,
                data: v,
            }
        }
        Task::SequenceRegression => {
            let len = branch_outs[0].len;
            if let Some((i, s)) = branch_outs.iter().enumerate().find(|(_, s)| s.len != len) {
                return Err(Error::shape(format!(
                    "branch {:?}, time axis: encoder yields {} steps but branch {:?} yields {len}",
                    spec.branches[i].input, s.len, spec.branches[0].input
                )));
            }
            let mut fused = Seq::zeros(len, fused_w);
            for t in 0..len {
                let mut off = 0;
                for s in &branch_outs {
                    fused.row_mut(t)[off..off + s.width].copy_from_slice(s.row(t));
                    off += s.width;
                }
            }
            fused
        }
    };

    let mut trunk = Vec::with_capacity(spec.trunk.len());
    for (li, layer) in spec.trunk.iter().enumerate() {
        let at = LayerRef::Trunk { layer: li };
        let p = &params.values[layout.range(at)];
        let (y, cache) = match *layer {
            LayerSpec::Dense { units, activation } | LayerSpec::Output { units, activation } => {
                dense_forward(units, activation, p, x)
            }
            _ => unreachable!("validated"),
        };
        check_finite(&y.data, &describe(spec, at))?;
        if keep {
            trunk.push(cache);
        }
        x = y;
    }
    let prediction = match spec.task {
        Task::Classification { .. } => Prediction::Posterior(x.data),
        Task::SequenceRegression => Prediction::Sequence(x.data),
    };
    Ok(Trace {
        branches: branch_caches,
        trunk,
        branch_out_lens,
        prediction,
    })
}

pub fn forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    inputs: &Inputs<T>,
) -> Result<Prediction<T>> {
    Ok(run(spec, params, inputs, false)?.prediction)
}

/// Vector-Jacobian product: pulls `dout` (gradient w.r.t. the prediction
/// values) back to every parameter and input cell.
pub fn vjp<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    trace: &Trace<T>,
    dout: &[T],
) -> Result<GradientBundle<T>> {
    let out_len = trace.prediction.values().len();
    if dout.len() != out_len {
        return Err(Error::shape(format!(
            "output gradient has {} entries, prediction has {out_len}",
            dout.len()
        )));
    }
    let layout = ParamLayout::new(spec);
    let mut grads = vec![T::zero(); layout.total()];

    let out_units = match spec.trunk.last() {
        Some(LayerSpec::Output { units, .. }) => *units,
        _ => unreachable!("validated"),
    };
    let mut dy = Seq {
        len: out_len / out_units,
        width: out_units,
        data: dout.to_vec(),
    };
    for (li, layer) in spec.trunk.iter().enumerate().rev() {
        let at = LayerRef::Trunk { layer: li };
        let range = layout.range(at);
        let (LayerSpec::Dense { units, activation } | LayerSpec::Output { units, activation }) = *layer
        else {
            unreachable!()
        };
        dy = dense_backward(
            units,
            activation,
            &params.values[range.clone()],
            &mut grads[range],
            &trace.trunk[li],
            dy,
        );
    }

    let mut input_grads = BTreeMap::new();
    let mut offset = 0;
    for (bi, branch) in spec.branches.iter().enumerate() {
        let units = match branch.layers.last() {
            Some(LayerSpec::Lstm { units }) => *units,
            _ => unreachable!("validated"),
        };
        let len = trace.branch_out_lens[bi];
        let mut d = Seq::zeros(len, units);
        match spec.task {
            Task::Classification { .. } => {
                d.row_mut(len - 1).copy_from_slice(&dy.row(0)[offset..offset + units]);
            }
            Task::SequenceRegression => {
                for t in 0..len {
                    d.row_mut(t).copy_from_slice(&dy.row(t)[offset..offset + units]);
                }
            }
        }
        offset += units;
        for (li, layer) in branch.layers.iter().enumerate().rev() {
            let at = LayerRef::Branch { branch: bi, layer: li };
            let range = layout.range(at);
            let cache = &trace.branches[bi][li];
            d = match *layer {
                LayerSpec::Conv1d { .. } => conv_backward(
                    layer,
                    &params.values[range.clone()],
                    &mut grads[range],
                    cache,
                    d,
                ),
                LayerSpec::MaxPool1d { .. } => pool_backward(cache, d),
                LayerSpec::Lstm { units } => lstm_backward(
                    units,
                    &params.values[range.clone()],
                    &mut grads[range],
                    cache,
                    d,
                ),
                _ => unreachable!("validated"),
            };
        }
        input_grads.insert(branch.input.clone(), d);
    }
    Ok(GradientBundle {
        param_grads: grads,
        input_grads,
    })
}

/// Loss value and exact gradients of the loss with respect to parameters and inputs.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    inputs: &Inputs<T>,
    loss: &LossSpec,
    target: &Target<T>,
) -> Result<(LossEval<T>, GradientBundle<T>)> {
    match (spec.task, target) {
        (Task::Classification { .. }, Target::Sequence(_)) => {
            return Err(Error::invalid("classification network given a sequence target"))
        }
        (Task::SequenceRegression, Target::Class(_)) => {
            return Err(Error::invalid("regression network given a class label"))
        }
        _ => {}
    }
    let trace = forward_trace(spec, params, inputs)?;
    let eval = loss.evaluate(trace.prediction.values(), target)?;
    if !eval.value.is_finite() {
        return Err(Error::Numeric(format!("loss is {}", eval.value)));
    }
    let grads = vjp(spec, params, &trace, &eval.grad)?;
    Ok((eval, grads))
}

/// Which scalar output a saliency gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputUnit {
    /// Posterior of one class.
    Class(usize),
    /// Sum of a sequence output over time.
    Sum,
}

/// Gradient of one selected output scalar with respect to inputs (and parameters).
pub fn output_gradient<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    inputs: &Inputs<T>,
    unit: OutputUnit,
) -> Result<GradientBundle<T>> {
    let trace = forward_trace(spec, params, inputs)?;
    let n = trace.prediction.values().len();
    let dout = match (spec.task, unit) {
        (Task::Classification { n_classes }, OutputUnit::Class(k)) if k < n_classes => {
            let mut d = vec![T::zero(); n];
            d[k] = T::one();
            d
        }
        (Task::SequenceRegression, OutputUnit::Sum) => vec![T::one(); n],
        (task, unit) => {
            return Err(Error::invalid(format!("output unit {unit:?} is not valid for {task}")))
        }
    };
    vjp(spec, params, &trace, &dout)
}
