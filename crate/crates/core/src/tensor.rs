//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A `Tensor` is an immutable node in a dynamically built computation graph.
//! Forward operations allocate new nodes; `backward()` on a scalar walks the
//! graph in reverse creation order and accumulates gradients into every
//! reachable node that requires them. Gradient accumulation is the only
//! mutation, and it is confined to a single backward pass per graph.
//!
//! Ops are written for the small shapes this toolkit needs (rank 0-3,
//! row-major) rather than for generality.

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::scalar::Scalar;
use crate::{Error, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

type BackFn<F> = Box<dyn Fn(&[F], &[F])>;

struct Node<F: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<F>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<F>>>,
    parents: Vec<Tensor<F>>,
    backward: Option<BackFn<F>>,
}

/// Shared handle to a graph node. Cloning is cheap.
pub struct Tensor<F: Scalar>(Rc<Node<F>>);

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<F: Scalar> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Build a graph node. Internal constructor used by all ops, including the
/// loss ops in `losses`.
pub(crate) fn make_node<F: Scalar>(
    shape: Vec<usize>,
    data: Vec<F>,
    parents: Vec<Tensor<F>>,
    backward: Option<BackFn<F>>,
) -> Tensor<F> {
    debug_assert_eq!(numel_of(&shape), data.len());
    let requires_grad = parents.iter().any(|p| p.requires_grad());
    let (parents, backward) = if requires_grad {
        (parents, backward)
    } else {
        (Vec::new(), None)
    };
    Tensor(Rc::new(Node {
        id: next_id(),
        shape,
        data,
        requires_grad,
        grad: RefCell::new(None),
        parents,
        backward,
    }))
}

/// Add `delta` into the gradient accumulator of `t` if it participates in
/// differentiation.
pub(crate) fn accumulate<F: Scalar>(t: &Tensor<F>, delta: &[F]) {
    if !t.0.requires_grad {
        return;
    }
    let mut slot = t.0.grad.borrow_mut();
    match slot.as_mut() {
        Some(g) => {
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += *di;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

impl<F: Scalar> Tensor<F> {
    /// Constant leaf (does not receive gradients).
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(
            numel_of(&shape),
            data.len(),
            "data length must match shape product"
        );
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad: false,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Trainable leaf: participates in backward and accumulates a gradient.
    pub fn param(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(numel_of(&shape), data.len());
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad: true,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn scalar(v: F) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel_of(&shape);
        Tensor::new(shape, vec![F::zero(); n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.0.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.numel(), 1, "item() needs a scalar tensor");
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn has_non_finite(&self) -> bool {
        self.0.data.iter().any(|v| !v.is_finite())
    }

    /// Rows/cols of a rank-2 tensor.
    fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.0.shape.len(), 2, "expected rank-2 tensor");
        (self.0.shape[0], self.0.shape[1])
    }

    /// Reverse-mode pass from a scalar. Call once per constructed graph.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() starts from a scalar loss");
        *self.0.grad.borrow_mut() = Some(vec![F::one()]);

        // Reverse creation order is a topological order: parents always have
        // smaller ids than children.
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut nodes: Vec<Tensor<F>> = Vec::new();
        while let Some(t) = stack.pop() {
            if !t.0.requires_grad || !seen.insert(t.0.id) {
                continue;
            }
            for p in &t.0.parents {
                stack.push(p.clone());
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.0.id.cmp(&a.0.id));
        for n in &nodes {
            if let Some(f) = &n.0.backward {
                let g = n.0.grad.borrow();
                if let Some(g) = g.as_ref() {
                    f(g, &n.0.data);
                }
            }
        }
    }

    // ---- elementwise / affine ----

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| *a + *b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Some(Box::new(move |go, _| {
                accumulate(&pa, go);
                accumulate(&pb, go);
            })),
        )
    }

    /// `[r,c] + [c]` row-broadcast bias add.
    pub fn add_bias(&self, bias: &Tensor<F>) -> Tensor<F> {
        let (r, c) = self.dims2();
        assert_eq!(bias.shape(), [c], "add_bias: bias must match columns");
        let mut data = self.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += bias.data()[j];
            }
        }
        let (px, pb) = (self.clone(), bias.clone());
        make_node(
            vec![r, c],
            data,
            vec![self.clone(), bias.clone()],
            Some(Box::new(move |go, _| {
                accumulate(&px, go);
                let mut db = vec![F::zero(); c];
                for i in 0..r {
                    for j in 0..c {
                        db[j] += go[i * c + j];
                    }
                }
                accumulate(&pb, &db);
            })),
        )
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, k: F) -> Tensor<F> {
        let data = self.data().iter().map(|v| *v * k).collect();
        let p = self.clone();
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                let d: Vec<F> = go.iter().map(|g| *g * k).collect();
                accumulate(&p, &d);
            })),
        )
    }

    /// Elementwise product with a fixed mask (dropout keep-mask, already
    /// scaled by 1/(1-p)).
    pub fn mul_mask(&self, mask: Vec<F>) -> Tensor<F> {
        assert_eq!(mask.len(), self.numel(), "mul_mask: mask length mismatch");
        let data = self
            .data()
            .iter()
            .zip(&mask)
            .map(|(a, m)| *a * *m)
            .collect();
        let p = self.clone();
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                let d: Vec<F> = go.iter().zip(&mask).map(|(g, m)| *g * *m).collect();
                accumulate(&p, &d);
            })),
        )
    }

    pub fn relu(&self) -> Tensor<F> {
        let data = self
            .data()
            .iter()
            .map(|v| if *v > F::zero() { *v } else { F::zero() })
            .collect();
        let p = self.clone();
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                let d: Vec<F> = p
                    .data()
                    .iter()
                    .zip(go)
                    .map(|(x, g)| if *x > F::zero() { *g } else { F::zero() })
                    .collect();
                accumulate(&p, &d);
            })),
        )
    }

    // ---- matrix products ----

    /// `[m,k] x [k,n] -> [m,n]`. Gradients: dA = dC.B^T, dB = A^T.dC.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul: inner dimensions disagree ({m}x{k} . {k2}x{n})"
            )));
        }
        let data = mm(self.data(), other.data(), m, k, n);
        let (pa, pb) = (self.clone(), other.clone());
        Ok(make_node(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Some(Box::new(move |go, _| {
                // dA = dC . B^T
                accumulate(&pa, &mm_nt(go, pb.data(), m, n, k));
                // dB = A^T . dC
                accumulate(&pb, &mm_tn(pa.data(), go, k, m, n));
            })),
        ))
    }

    /// `[m,k] x [n,k]^T -> [m,n]`. Gradients: dA = dC.B, dB = dC^T.A.
    pub fn matmul_nt(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = self.dims2();
        let (n, k2) = other.dims2();
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul_nt: inner dimensions disagree ({m}x{k} . ({n}x{k2})^T)"
            )));
        }
        let data = mm_nt(self.data(), other.data(), m, k, n);
        let (pa, pb) = (self.clone(), other.clone());
        Ok(make_node(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Some(Box::new(move |go, _| {
                accumulate(&pa, &mm(go, pb.data(), m, n, k));
                accumulate(&pb, &mm_tn(go, pa.data(), n, m, k));
            })),
        ))
    }

    // ---- row-wise nonlinearities ----

    /// Softmax over the last dimension, computed with max subtraction.
    pub fn softmax_rows(&self) -> Tensor<F> {
        let (rows, cols) = rows_cols(&self.0.shape);
        let mut data = vec![F::zero(); self.numel()];
        for i in 0..rows {
            softmax_row(&self.data()[i * cols..(i + 1) * cols], &mut data[i * cols..(i + 1) * cols]);
        }
        let p = self.clone();
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Some(Box::new(move |go, out| {
                // ds_i = s_i * (g_i - sum_j g_j s_j) per row
                let mut d = vec![F::zero(); go.len()];
                for i in 0..rows {
                    let s = &out[i * cols..(i + 1) * cols];
                    let g = &go[i * cols..(i + 1) * cols];
                    let dot: F = s.iter().zip(g).map(|(si, gi)| *si * *gi).sum();
                    for j in 0..cols {
                        d[i * cols + j] = s[j] * (g[j] - dot);
                    }
                }
                accumulate(&p, &d);
            })),
        )
    }

    /// Log-softmax over the last dimension.
    pub fn log_softmax_rows(&self) -> Tensor<F> {
        let (rows, cols) = rows_cols(&self.0.shape);
        let mut data = vec![F::zero(); self.numel()];
        for i in 0..rows {
            let x = &self.data()[i * cols..(i + 1) * cols];
            let mx = x.iter().cloned().fold(F::neg_infinity(), F::max);
            let lse = x.iter().map(|v| (*v - mx).exp()).sum::<F>().ln() + mx;
            for j in 0..cols {
                data[i * cols + j] = x[j] - lse;
            }
        }
        let p = self.clone();
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Some(Box::new(move |go, out| {
                // dx_i = g_i - exp(ls_i) * sum_j g_j per row
                let mut d = vec![F::zero(); go.len()];
                for i in 0..rows {
                    let ls = &out[i * cols..(i + 1) * cols];
                    let g = &go[i * cols..(i + 1) * cols];
                    let gs: F = g.iter().cloned().sum();
                    for j in 0..cols {
                        d[i * cols + j] = g[j] - ls[j].exp() * gs;
                    }
                }
                accumulate(&p, &d);
            })),
        )
    }

    /// Row-wise layer normalization with affine gain/bias, eps 1e-5 inside
    /// the square root.
    pub fn layer_norm(&self, gain: &Tensor<F>, bias: &Tensor<F>) -> Tensor<F> {
        let (rows, cols) = rows_cols(&self.0.shape);
        assert_eq!(gain.shape(), [cols], "layer_norm: gain must match last dim");
        assert_eq!(bias.shape(), [cols], "layer_norm: bias must match last dim");
        let eps = F::from_f64(1e-5);
        let nf = F::from_f64(cols as f64);
        let mut data = vec![F::zero(); self.numel()];
        let mut xhat = vec![F::zero(); self.numel()];
        let mut inv_std = vec![F::zero(); rows];
        for i in 0..rows {
            let x = &self.data()[i * cols..(i + 1) * cols];
            let mean = x.iter().cloned().sum::<F>() / nf;
            let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>() / nf;
            let s = (var + eps).sqrt().recip();
            inv_std[i] = s;
            for j in 0..cols {
                let xh = (x[j] - mean) * s;
                xhat[i * cols + j] = xh;
                data[i * cols + j] = gain.data()[j] * xh + bias.data()[j];
            }
        }
        let (px, pg, pb) = (self.clone(), gain.clone(), bias.clone());
        make_node(
            self.0.shape.clone(),
            data,
            vec![self.clone(), gain.clone(), bias.clone()],
            Some(Box::new(move |go, _| {
                let mut dx = vec![F::zero(); rows * cols];
                let mut dg = vec![F::zero(); cols];
                let mut db = vec![F::zero(); cols];
                for i in 0..rows {
                    let g = &go[i * cols..(i + 1) * cols];
                    let xh = &xhat[i * cols..(i + 1) * cols];
                    // d_j = g_j * gain_j; dx = (d - mean(d) - xhat*mean(d*xhat)) * inv_std
                    let mut mean_d = F::zero();
                    let mut mean_dxh = F::zero();
                    for j in 0..cols {
                        let dj = g[j] * pg.data()[j];
                        mean_d += dj;
                        mean_dxh += dj * xh[j];
                        dg[j] += g[j] * xh[j];
                        db[j] += g[j];
                    }
                    mean_d /= nf;
                    mean_dxh /= nf;
                    for j in 0..cols {
                        let dj = g[j] * pg.data()[j];
                        dx[i * cols + j] = (dj - mean_d - xh[j] * mean_dxh) * inv_std[i];
                    }
                }
                accumulate(&px, &dx);
                accumulate(&pg, &dg);
                accumulate(&pb, &db);
            })),
        )
    }

    // ---- shape ops ----

    /// Columns `[a, b)` of a rank-2 tensor.
    pub fn slice_cols(&self, a: usize, b: usize) -> Tensor<F> {
        let (r, c) = self.dims2();
        assert!(a <= b && b <= c, "slice_cols: range out of bounds");
        let w = b - a;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.data()[i * c + a..i * c + b]);
        }
        let p = self.clone();
        make_node(
            vec![r, w],
            data,
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                let mut d = vec![F::zero(); r * c];
                for i in 0..r {
                    d[i * c + a..i * c + b].copy_from_slice(&go[i * w..(i + 1) * w]);
                }
                accumulate(&p, &d);
            })),
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum_all(&self) -> Tensor<F> {
        let s = self.data().iter().cloned().sum();
        let n = self.numel();
        let p = self.clone();
        make_node(
            vec![1],
            vec![s],
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                accumulate(&p, &vec![go[0]; n]);
            })),
        )
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean_all(&self) -> Tensor<F> {
        let n = self.numel();
        let nf = F::from_f64(n as f64);
        let s = self.data().iter().cloned().sum::<F>() / nf;
        let p = self.clone();
        make_node(
            vec![1],
            vec![s],
            vec![self.clone()],
            Some(Box::new(move |go, _| {
                accumulate(&p, &vec![go[0] / nf; n]);
            })),
        )
    }
}

/// Concatenate rank-2 tensors along columns.
pub fn concat_cols<F: Scalar>(parts: &[Tensor<F>]) -> Tensor<F> {
    assert!(!parts.is_empty());
    let r = parts[0].shape()[0];
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| {
            assert_eq!(p.shape()[0], r, "concat_cols: row count mismatch");
            p.shape()[1]
        })
        .collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(r * total);
    for i in 0..r {
        for (p, w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
    }
    let owned: Vec<Tensor<F>> = parts.to_vec();
    let widths_b = widths.clone();
    make_node(
        vec![r, total],
        data,
        owned.clone(),
        Some(Box::new(move |go, _| {
            let mut off = 0;
            for (p, w) in owned.iter().zip(&widths_b) {
                let mut d = vec![F::zero(); r * w];
                for i in 0..r {
                    d[i * w..(i + 1) * w].copy_from_slice(&go[i * total + off..i * total + off + w]);
                }
                accumulate(p, &d);
                off += w;
            }
        })),
    )
}

/// 1-D convolution (cross-correlation) over a `[t, c_in]` sequence with a
/// `[c_out, c_in, k]` kernel, odd `k`, "same"-style zero padding and the
/// given stride, so the output length is `ceil(t / stride)`.
pub fn conv1d<F: Scalar>(
    x: &Tensor<F>,
    kernel: &Tensor<F>,
    bias: &Tensor<F>,
    stride: usize,
) -> Result<Tensor<F>> {
    if stride < 1 {
        return Err(Error::Shape("conv1d: invalid stride < 1".into()));
    }
    let (t, c_in) = (x.shape()[0], x.shape()[1]);
    assert_eq!(kernel.shape().len(), 3, "conv1d: kernel must be [co, ci, k]");
    let (c_out, kc_in, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k % 2 == 0 {
        return Err(Error::Shape("conv1d: kernel width must be odd".into()));
    }
    if kc_in != c_in {
        return Err(Error::Shape(format!(
            "conv1d: kernel expects {kc_in} input channels, got {c_in}"
        )));
    }
    assert_eq!(bias.shape(), [c_out], "conv1d: bias must match output channels");
    let t_out = t.div_ceil(stride);
    let total_pad = ((t_out - 1) * stride + k).saturating_sub(t);
    let left = total_pad / 2;

    let mut data = vec![F::zero(); t_out * c_out];
    for tp in 0..t_out {
        for o in 0..c_out {
            let mut acc = bias.data()[o];
            for j in 0..k {
                let ti = (tp * stride + j) as isize - left as isize;
                if ti < 0 || ti >= t as isize {
                    continue;
                }
                let ti = ti as usize;
                for c in 0..c_in {
                    acc += x.data()[ti * c_in + c] * kernel.data()[(o * c_in + c) * k + j];
                }
            }
            data[tp * c_out + o] = acc;
        }
    }
    let (px, pw, pb) = (x.clone(), kernel.clone(), bias.clone());
    Ok(make_node(
        vec![t_out, c_out],
        data,
        vec![x.clone(), kernel.clone(), bias.clone()],
        Some(Box::new(move |go, _| {
            let mut dx = vec![F::zero(); t * c_in];
            let mut dw = vec![F::zero(); c_out * c_in * k];
            let mut db = vec![F::zero(); c_out];
            for tp in 0..t_out {
                for o in 0..c_out {
                    let g = go[tp * c_out + o];
                    db[o] += g;
                    for j in 0..k {
                        let ti = (tp * stride + j) as isize - left as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let ti = ti as usize;
                        for c in 0..c_in {
                            dw[(o * c_in + c) * k + j] += g * px.data()[ti * c_in + c];
                            dx[ti * c_in + c] += g * pw.data()[(o * c_in + c) * k + j];
                        }
                    }
                }
            }
            accumulate(&px, &dx);
            accumulate(&pw, &dw);
            accumulate(&pb, &db);
        })),
    ))
}

/// Row lookup into an embedding table with a scalar multiplier. The gradient
/// scatter-adds into the looked-up rows.
pub fn embed<F: Scalar>(table: &Tensor<F>, ids: &[usize], scale: F) -> Result<Tensor<F>> {
    let (v, d) = (table.shape()[0], table.shape()[1]);
    if let Some(bad) = ids.iter().find(|&&i| i >= v) {
        return Err(Error::Model(format!(
            "embed: token id {bad} out of range (vocabulary size {v})"
        )));
    }
    let l = ids.len();
    let mut data = Vec::with_capacity(l * d);
    for &i in ids {
        data.extend(table.data()[i * d..(i + 1) * d].iter().map(|x| *x * scale));
    }
    let pt = table.clone();
    let ids_b = ids.to_vec();
    Ok(make_node(
        vec![l, d],
        data,
        vec![table.clone()],
        Some(Box::new(move |go, _| {
            let mut dt = vec![F::zero(); v * d];
            for (row, &i) in ids_b.iter().enumerate() {
                for j in 0..d {
                    dt[i * d + j] += go[row * d + j] * scale;
                }
            }
            accumulate(&pt, &dt);
        })),
    ))
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    assert!(!shape.is_empty(), "row-wise op needs rank >= 1");
    let cols = *shape.last().unwrap();
    assert!(cols >= 1, "row-wise op needs a non-empty last dimension");
    (numel_of(shape) / cols, cols)
}

fn softmax_row<F: Scalar>(x: &[F], out: &mut [F]) {
    let mx = x.iter().cloned().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for (o, v) in out.iter_mut().zip(x) {
        let e = (*v - mx).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

// Raw row-major matrix kernels shared by forward and backward passes.

fn mm<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// a `[m,k]` times b `[n,k]` transposed -> `[m,n]`.
fn mm_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// a `[k,m]` transposed times b `[k,n]` -> `[m,n]`.
fn mm_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            if av == F::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}
