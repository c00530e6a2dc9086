//! A small reverse-mode autodiff tape specialised to single-image
//! convolutional networks.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse and returns the gradient of a scalar with
//! respect to every node that requires one. Evaluation order, and therefore
//! every floating-point reduction, is fixed, so repeated runs are bitwise
//! identical.

pub(crate) mod conv;

use conv::ConvGeom;

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    ReflectPad { x: Var, pad: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    InstanceNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Relu { x: Var },
    LeakyRelu { x: Var, slope: T },
    Tanh { x: Var },
    LogSigmoid { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Offset { x: Var },
    Square { x: Var },
    Abs { x: Var },
    Mean { x: Var },
    Sum { x: Var },
    FrobeniusNorm { x: Var },
    Gram { x: Var, norm: T },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    /// Reflection padding of a `[C, H, W]` tensor (edge pixel not repeated).
    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3();
        if pad >= h || pad >= w {
            return Err(Error::Dimension(format!(
                "reflection padding of {pad} needs spatial size > {pad}, got {h}x{w}"
            )));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); c * ph * pw];
        for ch in 0..c {
            for y in 0..ph {
                let sy = reflect_index(y as isize - pad as isize, h);
                for xx in 0..pw {
                    let sx = reflect_index(xx as isize - pad as isize, w);
                    out[(ch * ph + y) * pw + xx] = src[(ch * h + sy) * w + sx];
                }
            }
        }
        let value = Tensor::from_vec(&[c, ph, pw], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::ReflectPad { x, pad }, rg))
    }

    /// Zero-padded strided convolution; `w` is `[C_out, C_in, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        let [c_out, wc_in, k, k2] = ws[..] else {
            return Err(Error::Shape(format!("conv weight must be 4-d, got {ws:?}")));
        };
        if wc_in != c_in || k != k2 {
            return Err(Error::Shape(format!("conv weight {ws:?} incompatible with input channels {c_in}")));
        }
        let geom = ConvGeom::new(c_in, h, wd, k, stride, pad).ok_or_else(|| {
            Error::Dimension(format!("input {h}x{wd} too small for {k}x{k} kernel with padding {pad}"))
        })?;
        let mut out = vec![T::zero(); c_out * geom.out_h * geom.out_w];
        conv::conv2d_forward(&geom, self.value(x).data(), self.value(w).data(), c_out, &mut out);
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), geom.out_h * geom.out_w);
        }
        let value = Tensor::from_vec(&[c_out, geom.out_h, geom.out_w], out)?;
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Transposed convolution; `w` is `[C_in, C_out, k, k]`. Output size is
    /// `(H - 1) * stride - 2 * pad + k + output_pad`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        let [wc_in, c_out, k, k2] = ws[..] else {
            return Err(Error::Shape(format!("transpose-conv weight must be 4-d, got {ws:?}")));
        };
        if wc_in != c_in || k != k2 {
            return Err(Error::Shape(format!(
                "transpose-conv weight {ws:?} incompatible with input channels {c_in}"
            )));
        }
        if output_pad >= stride {
            return Err(Error::InvalidInput("output padding must be smaller than the stride".into()));
        }
        let out_h = ((h - 1) * stride + k + output_pad).checked_sub(2 * pad);
        let out_w = ((wd - 1) * stride + k + output_pad).checked_sub(2 * pad);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::Dimension("transpose-conv padding exceeds output size".into()));
        };
        // The adjoint convolution maps [C_out, out_h, out_w] onto the [C_in, h, wd] grid.
        let geom = ConvGeom { channels: c_out, in_h: out_h, in_w: out_w, kernel: k, stride, pad, out_h: h, out_w: wd };
        let mut out = vec![T::zero(); c_out * out_h * out_w];
        conv::conv_transpose2d_forward(&geom, self.value(x).data(), self.value(w).data(), c_in, &mut out);
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), out_h * out_w);
        }
        let value = Tensor::from_vec(&[c_out, out_h, out_w], out)?;
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, geom }, rg))
    }

    /// Per-channel normalisation over the spatial extent with affine
    /// `gamma`/`beta`. Statistics come from the current input only.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3();
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::Shape(format!("instance norm expects {c} affine parameters")));
        }
        let n = h * w;
        let src = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); c * n];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); c * n];
        for ch in 0..c {
            let plane = &src[ch * n..(ch + 1) * n];
            let mean = plane.iter().map(|v| v.f64()).sum::<f64>() / n as f64;
            let var = plane.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = T::of(1.0 / (var + eps).sqrt());
            let mean = T::of(mean);
            inv_std[ch] = inv;
            for i in 0..n {
                let xh = (plane[i] - mean) * inv;
                xhat[ch * n + i] = xh;
                out[ch * n + i] = g[ch] * xh + bt[ch];
            }
        }
        let value = Tensor::from_vec(&[c, h, w], out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(value, Op::InstanceNorm { x, gamma, beta, xhat, inv_std }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        self.unary(x, move |v| if v > T::zero() { v } else { v * s }, Op::LeakyRelu { x, slope: s })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x })
    }

    /// `ln(sigmoid(x))`, evaluated without overflow.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, log_sigmoid, Op::LogSigmoid { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("operand shapes differ: {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_vec(va.shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        self.unary(x, move |v| v * f, Op::Scale { x, factor: f })
    }

    pub fn offset(&mut self, x: Var, delta: f64) -> Var {
        let d = T::of(delta);
        self.unary(x, move |v| v + d, Op::Offset { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square { x })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.data().iter().map(|t| t.f64()).sum::<f64>() / v.numel() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(T::of(m)), Op::Mean { x }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|t| t.f64()).sum::<f64>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(T::of(s)), Op::Sum { x }, rg)
    }

    pub fn frobenius_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|t| t.f64().powi(2)).sum::<f64>().sqrt();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(T::of(s)), Op::FrobeniusNorm { x }, rg)
    }

    /// Channel Gram matrix of a `[C, H, W]` map divided by `C * H * W`.
    pub fn gram(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let n = h * w;
        let norm = T::of(1.0 / (c * n) as f64);
        let f = MatRef::row_major(self.value(x).data(), c, n);
        let mut out = vec![T::zero(); c * c];
        gemm(norm, f, f.t(), T::zero(), &mut out, c);
        // Symmetrise exactly; the product is symmetric up to summation order.
        for i in 0..c {
            for j in (i + 1)..c {
                out[j * c + i] = out[i * c + j];
            }
        }
        let value = Tensor::from_vec(&[c, c], out).expect("square");
        let rg = self.rg(&[x]);
        self.push(value, Op::Gram { x, norm }, rg)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let zip_map = |src: &Tensor<T>, f: &dyn Fn(T, T) -> T| -> Tensor<T> {
            let data = src.data().iter().zip(g.data()).map(|(&s, &gv)| f(s, gv)).collect();
            Tensor::from_vec(src.shape(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::ReflectPad { x, pad } => {
                if !self.wants(*x) {
                    return;
                }
                let (c, h, w) = self.value(*x).dims3();
                let (_, ph, pw) = g.dims3();
                let mut dx = Tensor::zeros(&[c, h, w]);
                let d = dx.data_mut();
                for ch in 0..c {
                    for y in 0..ph {
                        let sy = reflect_index(y as isize - *pad as isize, h);
                        for xx in 0..pw {
                            let sx = reflect_index(xx as isize - *pad as isize, w);
                            d[(ch * h + sy) * w + sx] += g.data()[(ch * ph + y) * pw + xx];
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Conv2d { x, w, b, geom } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let c_out = wv.shape()[0];
                let mut dw = self.wants(*w).then(|| Tensor::zeros(wv.shape()));
                let mut dx = self.wants(*x).then(|| Tensor::zeros(xv.shape()));
                conv::conv2d_backward(
                    geom,
                    xv.data(),
                    wv.data(),
                    c_out,
                    g.data(),
                    dw.as_mut().map(|t| t.data_mut()),
                    dx.as_mut().map(|t| t.data_mut()),
                );
                if let Some(dw) = dw {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    accumulate(grads, b, channel_sums(g));
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let c_in = wv.shape()[0];
                let mut dw = self.wants(*w).then(|| Tensor::zeros(wv.shape()));
                let mut dx = self.wants(*x).then(|| Tensor::zeros(xv.shape()));
                conv::conv_transpose2d_backward(
                    geom,
                    xv.data(),
                    wv.data(),
                    c_in,
                    g.data(),
                    dw.as_mut().map(|t| t.data_mut()),
                    dx.as_mut().map(|t| t.data_mut()),
                );
                if let Some(dw) = dw {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    accumulate(grads, b, channel_sums(g));
                }
            }
            Op::InstanceNorm { x, gamma, beta, xhat, inv_std } => {
                let (c, h, w) = g.dims3();
                let n = h * w;
                let gd = g.data();
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); c * n];
                for ch in 0..c {
                    let gp = &gd[ch * n..(ch + 1) * n];
                    let xp = &xhat[ch * n..(ch + 1) * n];
                    let mut sum_g = 0.0f64;
                    let mut sum_gx = 0.0f64;
                    for i in 0..n {
                        sum_g += gp[i].f64();
                        sum_gx += (gp[i] * xp[i]).f64();
                    }
                    dbeta[ch] = T::of(sum_g);
                    dgamma[ch] = T::of(sum_gx);
                    // dxhat = g * gamma; dx = inv/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                    let gm = gam[ch];
                    let s1 = T::of(sum_g) * gm;
                    let s2 = T::of(sum_gx) * gm;
                    let k = inv_std[ch] / T::of(n as f64);
                    let nn = T::of(n as f64);
                    for i in 0..n {
                        dx[ch * n + i] = k * (nn * gp[i] * gm - s1 - xp[i] * s2);
                    }
                }
                if self.wants(*x) {
                    accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx).expect("shape"));
                }
                if self.wants(*gamma) {
                    let shape = self.value(*gamma).shape().to_vec();
                    accumulate(grads, *gamma, Tensor::from_vec(&shape, dgamma).expect("shape"));
                }
                if self.wants(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    accumulate(grads, *beta, Tensor::from_vec(&shape, dbeta).expect("shape"));
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let d = zip_map(&node.value, &|y, gv| if y > T::zero() { gv } else { T::zero() });
                    accumulate(grads, *x, d);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.wants(*x) {
                    let s = *slope;
                    let d = zip_map(self.value(*x), &|v, gv| if v > T::zero() { gv } else { gv * s });
                    accumulate(grads, *x, d);
                }
            }
            Op::Tanh { x } => {
                if self.wants(*x) {
                    let d = zip_map(&node.value, &|y, gv| gv * (T::one() - y * y));
                    accumulate(grads, *x, d);
                }
            }
            Op::LogSigmoid { x } => {
                if self.wants(*x) {
                    // d/dx ln(sigmoid(x)) = sigmoid(-x)
                    let d = zip_map(self.value(*x), &|v, gv| gv * sigmoid(-v));
                    accumulate(grads, *x, d);
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Scale { x, factor } => {
                if self.wants(*x) {
                    let f = *factor;
                    accumulate(grads, *x, g.map(|v| v * f));
                }
            }
            Op::Offset { x } => {
                if self.wants(*x) {
                    accumulate(grads, *x, g.clone());
                }
            }
            Op::Square { x } => {
                if self.wants(*x) {
                    let two = T::of(2.0);
                    let d = zip_map(self.value(*x), &|v, gv| two * v * gv);
                    accumulate(grads, *x, d);
                }
            }
            Op::Abs { x } => {
                if self.wants(*x) {
                    let d = zip_map(self.value(*x), &|v, gv| {
                        if v > T::zero() {
                            gv
                        } else if v < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(grads, *x, d);
                }
            }
            Op::Mean { x } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let gv = g.item() / T::of(xv.numel() as f64);
                    accumulate(grads, *x, Tensor::full(xv.shape(), gv));
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    accumulate(grads, *x, Tensor::full(self.value(*x).shape(), g.item()));
                }
            }
            Op::FrobeniusNorm { x } => {
                if self.wants(*x) {
                    let norm = node.value.item();
                    let xv = self.value(*x);
                    let d = if norm > T::zero() {
                        let k = g.item() / norm;
                        xv.map(|v| v * k)
                    } else {
                        // Subgradient at the origin.
                        Tensor::zeros(xv.shape())
                    };
                    accumulate(grads, *x, d);
                }
            }
            Op::Gram { x, norm } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let (c, h, w) = xv.dims3();
                    let n = h * w;
                    // d/dF = norm * (G + G^T) F
                    let gd = g.data();
                    let mut sym = vec![T::zero(); c * c];
                    for i in 0..c {
                        for j in 0..c {
                            sym[i * c + j] = gd[i * c + j] + gd[j * c + i];
                        }
                    }
                    let mut dx = vec![T::zero(); c * n];
                    gemm(
                        *norm,
                        MatRef::row_major(&sym, c, c),
                        MatRef::row_major(xv.data(), c, n),
                        T::zero(),
                        &mut dx,
                        n,
                    );
                    accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx).expect("shape"));
                }
            }
        }
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (ch, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[ch];
        for v in chunk {
            *v += b;
        }
    }
}

fn channel_sums<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = g.dims3();
    let sums = g.data().chunks(h * w).map(|p| T::of(p.iter().map(|v| v.f64()).sum::<f64>())).collect();
    Tensor::from_vec(&[c], sums).expect("shape")
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sigmoid<T: Scalar>(v: T) -> T {
    // min(v, 0) - ln(1 + e^{-|v|})
    v.min(T::zero()) - (-v.abs()).exp().ln_1p()
}
