use std::sync::Arc;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3x3 {
        input: Var,
        kernels: Arc<Tensor>,
        cells: Option<Arc<[usize]>>,
    },
    Affine {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Relu {
        input: Var,
    },
    Softmax {
        input: Var,
    },
    CrossEntropy {
        probs: Var,
        target: Arc<[u8]>,
    },
    GatherRows {
        input: Var,
        rows: Arc<[usize]>,
    },
    ScatterAddRows {
        base: Var,
        update: Var,
        rows: Arc<[usize]>,
        channel_offset: usize,
    },
    SelectChannels {
        input: Var,
        start: usize,
    },
    Mean {
        inputs: Vec<Var>,
    },
    Sum {
        input: Var,
    },
    Square {
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// True when a learnable leaf is reachable through this node's inputs.
    tracked: bool,
}

/// Tape of executed differentiable operations.
///
/// Nodes are appended in execution order, so the tape is already
/// topologically sorted; [`Graph::backward`] walks it in reverse.
/// Gradients accumulate across backward calls until [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Records an input tensor. It is learnable iff `requires_grad` is set.
    pub fn input(&mut self, tensor: Tensor) -> Var {
        let tracked = tensor.requires_grad;
        self.push(tensor, Op::Leaf, tracked)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a learnable input, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// `[h, w, c]` → `[h, w, c * k]`; kernels are constants.
    pub fn depthwise_conv3x3(&mut self, input: Var, kernels: Arc<Tensor>) -> Result<Var> {
        self.conv3x3(input, kernels, None)
    }

    /// The same correlation evaluated only at `cells` (flat `y * w + x`
    /// indices), giving `[cells.len(), c * k]`.
    pub fn depthwise_conv3x3_at(
        &mut self,
        input: Var,
        kernels: Arc<Tensor>,
        cells: Arc<[usize]>,
    ) -> Result<Var> {
        self.conv3x3(input, kernels, Some(cells))
    }

    fn conv3x3(
        &mut self,
        input: Var,
        kernels: Arc<Tensor>,
        cells: Option<Arc<[usize]>>,
    ) -> Result<Var> {
        let x = self.value(input);
        let &[h, w, c] = x.shape() else {
            return Err(Error::shape(
                "depthwise_conv3x3",
                format!("input must be [H, W, C], got {:?}", x.shape()),
            ));
        };
        let &[k, 3, 3] = kernels.shape() else {
            return Err(Error::shape(
                "depthwise_conv3x3",
                format!("kernels must be [K, 3, 3], got {:?}", kernels.shape()),
            ));
        };
        if h < 3 || w < 3 || k == 0 {
            return Err(Error::shape(
                "depthwise_conv3x3",
                format!("need H, W >= 3 and K >= 1, got H={h} W={w} K={k}"),
            ));
        }
        let value = match &cells {
            None => Tensor::new(
                vec![h, w, c * k],
                kernels::conv3x3_forward(x.data(), h, w, c, kernels.data()),
            )?,
            Some(cells) => {
                if let Some(&bad) = cells.iter().find(|&&i| i >= h * w) {
                    return Err(Error::shape(
                        "depthwise_conv3x3_at",
                        format!("cell {bad} out of range for {h}x{w}"),
                    ));
                }
                Tensor::new(
                    vec![cells.len(), c * k],
                    kernels::conv3x3_forward_at(x.data(), h, w, c, kernels.data(), cells),
                )?
            }
        };
        let tracked = self.tracked(input);
        Ok(self.push(
            value,
            Op::Conv3x3 {
                input,
                kernels,
                cells,
            },
            tracked,
        ))
    }

    /// Per-row affine map over the last axis: `[.., cin]` → `[.., cout]`.
    pub fn pointwise_affine(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x = self.value(input);
        let wt = self.value(weight);
        let &[cout, cin] = wt.shape() else {
            return Err(Error::shape(
                "pointwise_affine",
                format!("weight must be [Cout, Cin], got {:?}", wt.shape()),
            ));
        };
        if x.shape().is_empty() || x.last_dim() != cin {
            return Err(Error::shape(
                "pointwise_affine",
                format!("input {:?} does not end in Cin = {cin}", x.shape()),
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [cout] {
                return Err(Error::shape(
                    "pointwise_affine",
                    format!("bias must be [{cout}], got {:?}", self.value(b).shape()),
                ));
            }
        }
        let rows = x.rows();
        let out = kernels::affine_forward(
            x.data(),
            rows,
            cin,
            wt.data(),
            bias.map(|b| self.value(b).data()),
            cout,
        );
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = cout;
        let tracked =
            self.tracked(input) || self.tracked(weight) || bias.is_some_and(|b| self.tracked(b));
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Affine {
                input,
                weight,
                bias,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), kernels::relu_forward(x.data()))
            .expect("shape preserved");
        let tracked = self.tracked(input);
        self.push(value, Op::Relu { input }, tracked)
    }

    /// Softmax over the last (class) axis.
    pub fn softmax_channels(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let c = x.last_dim();
        let value = Tensor::new(x.shape().to_vec(), kernels::softmax_forward(x.data(), c))
            .expect("shape preserved");
        let tracked = self.tracked(input);
        self.push(value, Op::Softmax { input }, tracked)
    }

    /// Mean per-pixel `−ln p[target]` with the [`kernels::LOG_EPS`] floor.
    pub fn cross_entropy_loss(&mut self, probs: Var, target: Arc<[u8]>) -> Result<Var> {
        let p = self.value(probs);
        let c = p.last_dim();
        if p.rows() != target.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} pixels vs {} target labels", p.rows(), target.len()),
            ));
        }
        if let Some(bad) = target.iter().find(|&&t| t as usize >= c) {
            return Err(Error::invalid(format!(
                "target label {bad} outside {c} classes"
            )));
        }
        let loss = kernels::cross_entropy_forward(p.data(), c, &target);
        let tracked = self.tracked(probs);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { probs, target }, tracked))
    }

    /// Picks rows (pixels) of a tensor viewed as `[rows, last_dim]`.
    pub fn gather_rows(&mut self, input: Var, rows: Arc<[usize]>) -> Result<Var> {
        let x = self.value(input);
        let c = x.last_dim();
        let n = x.rows();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows.iter() {
            if r >= n {
                return Err(Error::shape(
                    "gather_rows",
                    format!("row {r} out of range {n}"),
                ));
            }
            out.extend_from_slice(&x.data()[r * c..(r + 1) * c]);
        }
        let value = Tensor::new(vec![rows.len(), c], out)?;
        let tracked = self.tracked(input);
        Ok(self.push(value, Op::GatherRows { input, rows }, tracked))
    }

    /// Copy of `base` with `update[i, :]` added to row `rows[i]` at channels
    /// `channel_offset..channel_offset + update_channels`.
    pub fn scatter_add_rows(
        &mut self,
        base: Var,
        update: Var,
        rows: Arc<[usize]>,
        channel_offset: usize,
    ) -> Result<Var> {
        let b = self.value(base);
        let u = self.value(update);
        let c = b.last_dim();
        let cu = u.last_dim();
        if channel_offset + cu > c || u.rows() != rows.len() {
            return Err(Error::shape(
                "scatter_add_rows",
                format!(
                    "update {:?} at offset {channel_offset} into {:?} with {} rows",
                    u.shape(),
                    b.shape(),
                    rows.len()
                ),
            ));
        }
        let mut out = b.data().to_vec();
        for (i, &r) in rows.iter().enumerate() {
            let dst = &mut out[r * c + channel_offset..r * c + channel_offset + cu];
            for (d, v) in dst.iter_mut().zip(&u.data()[i * cu..(i + 1) * cu]) {
                *d += v;
            }
        }
        let value = Tensor::new(b.shape().to_vec(), out)?;
        let tracked = self.tracked(base) || self.tracked(update);
        Ok(self.push(
            value,
            Op::ScatterAddRows {
                base,
                update,
                rows,
                channel_offset,
            },
            tracked,
        ))
    }

    /// Channels `start..start + len` of the last axis.
    pub fn select_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        let c = x.last_dim();
        if start + len > c {
            return Err(Error::shape(
                "select_channels",
                format!("channels {start}..{} of {c}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(x.rows() * len);
        for row in x.data().chunks_exact(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(shape, out)?;
        let tracked = self.tracked(input);
        Ok(self.push(value, Op::SelectChannels { input, start }, tracked))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::invalid("mean of no values"));
        }
        let mut total = 0.0f32;
        for &v in inputs {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::shape("mean", format!("non-scalar {:?}", t.shape())));
            }
            total += t.item();
        }
        let tracked = inputs.iter().any(|&v| self.tracked(v));
        Ok(self.push(
            Tensor::scalar(total / inputs.len() as f32),
            Op::Mean {
                inputs: inputs.to_vec(),
            },
            tracked,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s: f32 = self.value(input).data().iter().sum();
        let tracked = self.tracked(input);
        self.push(Tensor::scalar(s), Op::Sum { input }, tracked)
    }

    pub fn square(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * v).collect())
            .expect("shape preserved");
        let tracked = self.tracked(input);
        self.push(value, Op::Square { input }, tracked)
    }

    fn accumulate(grads: &mut [Option<Vec<f32>>], len: usize, v: Var) -> &mut [f32] {
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients of learnable inputs are added to whatever previous calls
    /// left behind. Intermediate gradients are discarded as the sweep passes.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        if !self.tracked(loss) {
            return Ok(());
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f32>>> = std::mem::take(&mut self.grads);
        grads.resize(n, None);
        let mut work: Vec<Option<Vec<f32>>> = vec![None; n];
        work[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = work[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            if let Op::Leaf = node.op {
                let acc = Self::accumulate(&mut grads, g.len(), Var(idx));
                for (a, v) in acc.iter_mut().zip(&g) {
                    *a += v;
                }
                continue;
            }
            self.propagate(idx, &g, &mut work);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f32], work: &mut [Option<Vec<f32>>]) {
        let nodes = &self.nodes;
        let len_of = |v: Var| nodes[v.0].value.len();
        let tracked = |v: Var| nodes[v.0].tracked;
        match &nodes[idx].op {
            Op::Leaf => unreachable!(),
            Op::Conv3x3 {
                input,
                kernels,
                cells,
            } => {
                if tracked(*input) {
                    let &[h, w, c] = nodes[input.0].value.shape() else {
                        unreachable!()
                    };
                    let d = Self::accumulate(work, len_of(*input), *input);
                    match cells {
                        None => kernels::conv3x3_backward(g, h, w, c, kernels.data(), d),
                        Some(cells) => {
                            kernels::conv3x3_backward_at(g, h, w, c, kernels.data(), cells, d)
                        }
                    }
                }
            }
            Op::Affine {
                input,
                weight,
                bias,
            } => {
                let x = &nodes[input.0].value;
                let wt = &nodes[weight.0].value;
                let (cout, cin) = (wt.shape()[0], wt.shape()[1]);
                let rows = x.rows();
                if tracked(*input) {
                    let d = Self::accumulate(work, x.len(), *input);
                    kernels::affine_backward_input(g, rows, cout, wt.data(), cin, d);
                }
                if tracked(*weight) {
                    let d = Self::accumulate(work, wt.len(), *weight);
                    kernels::affine_backward_weight(g, rows, cout, x.data(), cin, d);
                }
                if let Some(b) = bias.filter(|b| tracked(*b)) {
                    let d = Self::accumulate(work, cout, b);
                    kernels::affine_backward_bias(g, cout, d);
                }
            }
            Op::Relu { input } => {
                if tracked(*input) {
                    let x = nodes[input.0].value.data();
                    let d = Self::accumulate(work, x.len(), *input);
                    for ((d, &xv), &gv) in d.iter_mut().zip(x).zip(g) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Softmax { input } => {
                if tracked(*input) {
                    let p = &nodes[idx].value;
                    let d = Self::accumulate(work, p.len(), *input);
                    kernels::softmax_backward(p.data(), g, p.last_dim(), d);
                }
            }
            Op::CrossEntropy { probs, target } => {
                if tracked(*probs) {
                    let p = &nodes[probs.0].value;
                    let c = p.last_dim();
                    let scale = g[0] / target.len() as f32;
                    let d = Self::accumulate(work, p.len(), *probs);
                    for (r, &t) in target.iter().enumerate() {
                        let pt = p.data()[r * c + t as usize];
                        if pt > kernels::LOG_EPS {
                            d[r * c + t as usize] -= scale / pt;
                        }
                    }
                }
            }
            Op::GatherRows { input, rows } => {
                if tracked(*input) {
                    let x = &nodes[input.0].value;
                    let c = x.last_dim();
                    let d = Self::accumulate(work, x.len(), *input);
                    for (i, &r) in rows.iter().enumerate() {
                        for (dv, gv) in d[r * c..(r + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c])
                        {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::ScatterAddRows {
                base,
                update,
                rows,
                channel_offset,
            } => {
                let c = nodes[idx].value.last_dim();
                if tracked(*base) {
                    let d = Self::accumulate(work, g.len(), *base);
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if tracked(*update) {
                    let u = &nodes[update.0].value;
                    let cu = u.last_dim();
                    let d = Self::accumulate(work, u.len(), *update);
                    for (i, &r) in rows.iter().enumerate() {
                        let src = &g[r * c + channel_offset..r * c + channel_offset + cu];
                        for (dv, gv) in d[i * cu..(i + 1) * cu].iter_mut().zip(src) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::SelectChannels { input, start } => {
                if tracked(*input) {
                    let x = &nodes[input.0].value;
                    let c = x.last_dim();
                    let len = nodes[idx].value.last_dim();
                    let d = Self::accumulate(work, x.len(), *input);
                    for (drow, grow) in d.chunks_exact_mut(c).zip(g.chunks_exact(len)) {
                        for (dv, gv) in drow[*start..*start + len].iter_mut().zip(grow) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Mean { inputs } => {
                let share = g[0] / inputs.len() as f32;
                for &v in inputs {
                    if tracked(v) {
                        Self::accumulate(work, 1, v)[0] += share;
                    }
                }
            }
            Op::Sum { input } => {
                if tracked(*input) {
                    let d = Self::accumulate(work, len_of(*input), *input);
                    d.iter_mut().for_each(|dv| *dv += g[0]);
                }
            }
            Op::Square { input } => {
                if tracked(*input) {
                    let x = nodes[input.0].value.data();
                    let d = Self::accumulate(work, x.len(), *input);
                    for ((dv, &xv), &gv) in d.iter_mut().zip(x).zip(g) {
                        *dv += 2.0 * xv * gv;
                    }
                }
            }
        }
    }
}
