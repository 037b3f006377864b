//! Dense `f64` tensors and the handful of kernels the networks need.
//!
//! Feature maps are stored `[H, W, C]` row-major; kernel banks are
//! `[Kh, Kw, Cin, Cout]`, so a conv window flattened in `(i, j, c)` order is
//! exactly one row of the im2col matrix and the bank is its right-hand
//! `[Kh*Kw*Cin, Cout]` operand. Convolution is valid-padding, stride-1
//! cross-correlation (no kernel flip).

use crate::error::{shape_err, Error, Result};

pub const MAX_RANK: usize = 4;

/// Probabilities are floored at this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return shape_err(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If the shape is empty, has a zero extent, or exceeds rank 4.
    pub fn zeros(shape: &[usize]) -> Self {
        check_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    /// # Panics
    /// If `data` is empty.
    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("non-empty vector")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return shape_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!("cannot add {:?} to {:?}", other.shape, self.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w, c] => Ok((h, w, c)),
            _ => shape_err(format!("{what} must be [H, W, C], got {:?}", self.shape)),
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return shape_err(format!("rank must be 1..={MAX_RANK}, got {shape:?}"));
    }
    if shape.contains(&0) {
        return shape_err(format!("extents must be positive, got {shape:?}"));
    }
    Ok(())
}

/// Convolution filters `[Kh, Kw, Cin, Cout]` with one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

impl KernelBank {
    pub fn new(kernels: Tensor, bias: Vec<f64>) -> Result<Self> {
        match *kernels.shape() {
            [_, _, _, cout] if bias.len() == cout => Ok(Self { kernels, bias }),
            [_, _, _, cout] => shape_err(format!(
                "bank has {cout} output channels but {} biases",
                bias.len()
            )),
            _ => shape_err(format!(
                "kernel bank must be [Kh, Kw, Cin, Cout], got {:?}",
                kernels.shape()
            )),
        }
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(input, &self.kernels, &self.bias)
    }
}

/// `C[m×n] += A·B` where `A` is `m×k` and `B` is `k×n`, each given by row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: extents and strides were checked against the slice lengths above
    // (debug) and by every caller's shape validation (release).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvGeometry {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn of(input: &Tensor, kernels: &Tensor) -> Result<Self> {
        let (h, w, cin) = input.dims3("conv2d input")?;
        let [kh, kw, kcin, cout] = match *kernels.shape() {
            [a, b, c, d] => [a, b, c, d],
            _ => {
                return shape_err(format!(
                    "kernel bank must be [Kh, Kw, Cin, Cout], got {:?}",
                    kernels.shape()
                ))
            }
        };
        if kcin != cin || h < kh || w < kw {
            return shape_err(format!(
                "conv2d cannot apply bank {:?} to input {:?}",
                kernels.shape(),
                input.shape()
            ));
        }
        Ok(Self {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            oh: h - kh + 1,
            ow: w - kw + 1,
        })
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let patch = self.patch();
        let run = self.kw * self.cin;
        let mut cols = vec![0.0; self.oh * self.ow * patch];
        for y in 0..self.oh {
            for x in 0..self.ow {
                let row = &mut cols[(y * self.ow + x) * patch..][..patch];
                for i in 0..self.kh {
                    let src = ((y + i) * self.w + x) * self.cin;
                    row[i * run..(i + 1) * run].copy_from_slice(&input[src..src + run]);
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let patch = self.patch();
        let run = self.kw * self.cin;
        let mut out = vec![0.0; self.h * self.w * self.cin];
        for y in 0..self.oh {
            for x in 0..self.ow {
                let row = &cols[(y * self.ow + x) * patch..][..patch];
                for i in 0..self.kh {
                    let dst = ((y + i) * self.w + x) * self.cin;
                    for (o, v) in out[dst..dst + run]
                        .iter_mut()
                        .zip(&row[i * run..(i + 1) * run])
                    {
                        *o += v;
                    }
                }
            }
        }
        out
    }
}

/// Valid, stride-1 cross-correlation: `[H, W, Cin] ⊛ [Kh, Kw, Cin, Cout] → [H-Kh+1, W-Kw+1, Cout]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let g = ConvGeometry::of(input, kernels)?;
    if bias.len() != g.cout {
        return shape_err(format!(
            "bank has {} output channels but {} biases",
            g.cout,
            bias.len()
        ));
    }
    let cols = g.im2col(input.data());
    let mut out = Vec::with_capacity(g.oh * g.ow * g.cout);
    for _ in 0..g.oh * g.ow {
        out.extend_from_slice(bias);
    }
    gemm_acc(
        g.oh * g.ow,
        g.patch(),
        g.cout,
        &cols,
        (g.patch(), 1),
        kernels.data(),
        (g.cout, 1),
        &mut out,
    );
    Tensor::new(&[g.oh, g.ow, g.cout], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor>,
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    want_input_grad: bool,
) -> Result<ConvGrads> {
    let g = ConvGeometry::of(input, kernels)?;
    if grad_out.shape() != [g.oh, g.ow, g.cout] {
        return shape_err(format!(
            "conv2d gradient {:?} does not match output [{}, {}, {}]",
            grad_out.shape(),
            g.oh,
            g.ow,
            g.cout
        ));
    }
    let m = g.oh * g.ow;
    let patch = g.patch();
    let cols = g.im2col(input.data());
    let gout = grad_out.data();

    // dK = colsᵀ · dY
    let mut dk = vec![0.0; patch * g.cout];
    gemm_acc(
        patch,
        m,
        g.cout,
        &cols,
        (1, patch),
        gout,
        (g.cout, 1),
        &mut dk,
    );

    let mut db = vec![0.0; g.cout];
    for row in gout.chunks_exact(g.cout) {
        for (b, v) in db.iter_mut().zip(row) {
            *b += v;
        }
    }

    let dinput = if want_input_grad {
        // dcols = dY · Kᵀ
        let mut dcols = vec![0.0; m * patch];
        gemm_acc(
            m,
            g.cout,
            patch,
            gout,
            (g.cout, 1),
            kernels.data(),
            (1, g.cout),
            &mut dcols,
        );
        Some(Tensor::new(input.shape(), g.col2im(&dcols))?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: dinput,
        kernels: Tensor::new(kernels.shape(), dk)?,
        bias: db,
    })
}

/// Output of [`maxpool2`]: pooled values plus, for each output element, the
/// flat index into the input of the element that won its window.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling, stride 2, per channel. Odd trailing rows/columns are
/// dropped; ties go to the first element in row-major window order.
pub fn maxpool2(input: &Tensor) -> Result<Pooled> {
    let (h, w, c) = input.dims3("maxpool2 input")?;
    if h < 2 || w < 2 {
        return shape_err(format!(
            "maxpool2 needs at least a 2×2 window, got {:?}",
            input.shape()
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = vec![0.0; oh * ow * c];
    let mut argmax = vec![0; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * y) * w + 2 * x) * c + ch;
                let mut best = src[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                    if src[idx] > best {
                        best = src[idx];
                        best_idx = idx;
                    }
                }
                let o = (y * ow + x) * c + ch;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(&[oh, ow, c], out)?,
        argmax,
    })
}

pub fn maxpool2_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return shape_err(format!(
            "maxpool2 gradient has {} elements but {} argmax entries",
            grad_out.len(),
            argmax.len()
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let n = grad.len();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= n {
            return shape_err(format!("argmax index {idx} outside input {input_shape:?}"));
        }
        grad.data[idx] += g;
    }
    Ok(grad)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the layer input; the subgradient at 0 is 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return shape_err(format!(
            "relu gradient {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}

fn linear_dims(input: &Tensor, weight: &Tensor) -> Result<(usize, usize)> {
    match *weight.shape() {
        [m, l] if m == input.len() => Ok((m, l)),
        _ => shape_err(format!(
            "linear weight {:?} cannot map input {:?} ({} values)",
            weight.shape(),
            input.shape(),
            input.len()
        )),
    }
}

/// `out_l = Σ_m x_m · W[m, l] + b_l` over the flattened input.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (m, l) = linear_dims(input, weight)?;
    if bias.len() != l {
        return shape_err(format!("linear has {l} outputs but {} biases", bias.len()));
    }
    let mut out = bias.to_vec();
    gemm_acc(
        1,
        m,
        l,
        input.data(),
        (m, 1),
        weight.data(),
        (l, 1),
        &mut out,
    );
    Tensor::new(&[l], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    /// Same shape as the (unflattened) input.
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    let (m, l) = linear_dims(input, weight)?;
    if grad_out.len() != l {
        return shape_err(format!(
            "linear gradient has {} values, expected {l}",
            grad_out.len()
        ));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut dw = vec![0.0; m * l];
    for (row, &xm) in dw.chunks_exact_mut(l).zip(x) {
        for (d, &gl) in row.iter_mut().zip(g) {
            *d = xm * gl;
        }
    }
    let dx = weight
        .data()
        .chunks_exact(l)
        .map(|row| row.iter().zip(g).map(|(w, g)| w * g).sum())
        .collect();
    Ok(LinearGrads {
        input: Tensor::new(input.shape(), dx)?,
        weight: Tensor::new(weight.shape(), dw)?,
        bias: g.to_vec(),
    })
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln p[label]`, with `p` floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| {
        Error::InvalidArgument(format!("label {label} outside [0, {})", probs.len()))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of `cross_entropy(softmax(z), label)` with respect to `z`: `p - onehot(label)`.
pub fn softmax_cross_entropy_grad(probs: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} outside [0, {})",
            probs.len()
        )));
    }
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    Ok(g)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
