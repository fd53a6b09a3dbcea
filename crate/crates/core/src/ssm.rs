//! Selective state-space recurrence.
//!
//! ```text
//! h_t = A_t h_{t-1} + B_t x_t
//! y_t = C_t h_t + D x_t
//! ```
//!
//! [`scan_sequential`] is the reference path and accepts dense or diagonal
//! transitions. [`scan_chunked`] splits the sequence into chunks, runs a
//! zero-initialised local scan inside each chunk together with the running
//! product of the diagonal transitions, and then stitches chunks together by
//! carrying the boundary state: `h_t = (Π A) ⊙ h_carry + local_t`.
//!
//! Input selection follows a diagonal, softplus-gated discretisation: a
//! scalar step `Δ_t = softplus(w·x_t + b)` sets `A_t = exp(-Δ_t a)` for
//! positive rates `a`, and sigmoid gates rescale the rows of `B` and the
//! columns of `C`. `D` is not selected.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::Matrix;
use crate::real::{all_finite, dot, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Transition<T> {
    /// Diagonal of `A`, entries in `(0, 1]`.
    Diagonal(Vec<T>),
    Dense(Matrix<T>),
}

impl<T: Real> Transition<T> {
    pub fn state_size(&self) -> usize {
        match self {
            Transition::Diagonal(d) => d.len(),
            Transition::Dense(m) => m.rows(),
        }
    }

    fn apply(&self, h: &[T]) -> Vec<T> {
        match self {
            Transition::Diagonal(d) => d.iter().zip(h).map(|(&a, &x)| a * x).collect(),
            Transition::Dense(m) => m.matvec(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmParams<T> {
    a: Transition<T>,
    b: Matrix<T>,
    c: Matrix<T>,
    d: Matrix<T>,
}

impl<T: Real> SsmParams<T> {
    pub fn new(a: Transition<T>, b: Matrix<T>, c: Matrix<T>, d: Matrix<T>) -> Result<Self> {
        let s = a.state_size();
        match &a {
            Transition::Diagonal(diag) => {
                if !all_finite(diag) {
                    return Err(Error::NonFinite("A"));
                }
                if let Some(v) = diag.iter().find(|v| !(v.value() > 0.0 && v.value() <= 1.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "diagonal A entry {} outside (0, 1]",
                        v.value()
                    )));
                }
            }
            Transition::Dense(m) => {
                ensure_dim("A columns", s, m.cols())?;
                if !m.is_finite() {
                    return Err(Error::NonFinite("A"));
                }
            }
        }
        ensure_dim("B rows", s, b.rows())?;
        ensure_dim("C columns", s, c.cols())?;
        ensure_dim("D rows", c.rows(), d.rows())?;
        ensure_dim("D columns", b.cols(), d.cols())?;
        for (name, m) in [("B", &b), ("C", &c), ("D", &d)] {
            if !m.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &Transition<T> {
        &self.a
    }
    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }
    pub fn c(&self) -> &Matrix<T> {
        &self.c
    }
    pub fn d(&self) -> &Matrix<T> {
        &self.d
    }

    pub fn state_size(&self) -> usize {
        self.a.state_size()
    }
    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }
    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.state_size() == other.state_size()
            && self.input_dim() == other.input_dim()
            && self.output_dim() == other.output_dim()
    }

    fn output(&self, h: &[T], x: &[T]) -> Vec<T> {
        let ch = self.c.matvec(h);
        let dx = self.d.matvec(x);
        ch.into_iter().zip(dx).map(|(a, b)| a + b).collect()
    }
}

/// `L × D` row-major sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence<T> {
    len: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Sequence<T> {
    pub fn new(len: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
        }
        ensure_dim("sequence data", len * dim, data.len())?;
        if !all_finite(&data) {
            return Err(Error::NonFinite("sequence"));
        }
        Ok(Self { len, dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            ensure_dim("sequence row", dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.dim.max(1)).take(self.len)
    }
}

/// Parameters shared by every step, or one set per step.
#[derive(Debug, Clone, Copy)]
pub enum Schedule<'a, T> {
    Shared(&'a SsmParams<T>),
    PerStep(&'a [SsmParams<T>]),
}

impl<'a, T> From<&'a SsmParams<T>> for Schedule<'a, T> {
    fn from(p: &'a SsmParams<T>) -> Self {
        Schedule::Shared(p)
    }
}

impl<'a, T> From<&'a [SsmParams<T>]> for Schedule<'a, T> {
    fn from(p: &'a [SsmParams<T>]) -> Self {
        Schedule::PerStep(p)
    }
}

impl<'a, T> From<&'a Vec<SsmParams<T>>> for Schedule<'a, T> {
    fn from(p: &'a Vec<SsmParams<T>>) -> Self {
        Schedule::PerStep(p.as_slice())
    }
}

impl<'a, T: Real> Schedule<'a, T> {
    fn at(&self, t: usize) -> &'a SsmParams<T> {
        match *self {
            Schedule::Shared(p) => p,
            Schedule::PerStep(ps) => &ps[t],
        }
    }

    fn validate(&self, x: &Sequence<T>, h0: &[T]) -> Result<()> {
        let first = match *self {
            Schedule::Shared(p) => p,
            Schedule::PerStep(ps) => {
                ensure_dim("per-step parameter count", x.len(), ps.len())?;
                let first = &ps[0];
                if let Some(bad) = ps.iter().find(|p| !p.same_shape(first)) {
                    return Err(Error::DimensionMismatch {
                        context: "per-step parameter shapes",
                        expected: first.state_size(),
                        found: bad.state_size(),
                    });
                }
                first
            }
        };
        ensure_dim("input dimension", first.input_dim(), x.dim())?;
        ensure_dim("initial state", first.state_size(), h0.len())?;
        if !all_finite(h0) {
            return Err(Error::NonFinite("initial state"));
        }
        if !all_finite(x.data()) {
            return Err(Error::NonFinite("input sequence"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput<T> {
    pub y: Sequence<T>,
    /// `h_1 ..= h_L`
    pub states: Vec<Vec<T>>,
}

/// Reference left-to-right recurrence.
pub fn scan_sequential<'a, T: Real + 'a>(
    params: impl Into<Schedule<'a, T>>,
    x: &Sequence<T>,
    h0: &[T],
) -> Result<ScanOutput<T>> {
    let sched = params.into();
    sched.validate(x, h0)?;
    let out_dim = sched.at(0).output_dim();
    let mut y = Vec::with_capacity(x.len() * out_dim);
    let mut states = Vec::with_capacity(x.len());
    let mut h = h0.to_vec();
    for t in 0..x.len() {
        let p = sched.at(t);
        let xt = x.row(t);
        let ah = p.a.apply(&h);
        let bx = p.b.matvec(xt);
        h = ah.into_iter().zip(bx).map(|(a, b)| a + b).collect();
        y.extend(p.output(&h, xt));
        states.push(h.clone());
    }
    Ok(ScanOutput {
        y: Sequence {
            len: x.len(),
            dim: out_dim,
            data: y,
        },
        states,
    })
}

/// Chunked evaluation of the same recurrence. Requires diagonal transitions.
pub fn scan_chunked<'a, T: Real + 'a>(
    params: impl Into<Schedule<'a, T>>,
    x: &Sequence<T>,
    h0: &[T],
    chunk_len: usize,
) -> Result<ScanOutput<T>> {
    if chunk_len == 0 {
        return Err(Error::InvalidArgument("chunk_len must be >= 1".into()));
    }
    let sched = params.into();
    sched.validate(x, h0)?;
    for t in 0..x.len() {
        if !matches!(sched.at(t).a, Transition::Diagonal(_)) {
            return Err(Error::Unsupported("chunked scan requires a diagonal transition"));
        }
        if matches!(sched, Schedule::Shared(_)) {
            break;
        }
    }

    let s = h0.len();
    let out_dim = sched.at(0).output_dim();
    let mut y = Vec::with_capacity(x.len() * out_dim);
    let mut states = Vec::with_capacity(x.len());
    let mut carry = h0.to_vec();

    let mut local = vec![T::zero(); s];
    let mut decay = vec![T::one(); s];
    let mut locals: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(chunk_len);

    let mut start = 0;
    while start < x.len() {
        let end = (start + chunk_len).min(x.len());

        // chunk-local scan from a zero state, independent of the carry
        locals.clear();
        local.iter_mut().for_each(|v| *v = T::zero());
        decay.iter_mut().for_each(|v| *v = T::one());
        for t in start..end {
            let p = sched.at(t);
            let Transition::Diagonal(a) = &p.a else {
                unreachable!()
            };
            let bx = p.b.matvec(x.row(t));
            for i in 0..s {
                local[i] = a[i] * local[i] + bx[i];
                decay[i] = a[i] * decay[i];
            }
            locals.push((local.clone(), decay.clone()));
        }

        // stitch with the boundary state
        for (k, (l, dcy)) in locals.iter().enumerate() {
            let t = start + k;
            let h: Vec<T> = (0..s).map(|i| dcy[i] * carry[i] + l[i]).collect();
            y.extend(sched.at(t).output(&h, x.row(t)));
            states.push(h);
        }
        carry = states.last().cloned().unwrap_or(carry);
        start = end;
    }

    Ok(ScanOutput {
        y: Sequence {
            len: x.len(),
            dim: out_dim,
            data: y,
        },
        states,
    })
}

/// Input-dependent parameter generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector<T> {
    /// Step projection `w` (length `D_in`) and bias `b`.
    pub delta_w: Vec<T>,
    pub delta_b: T,
    /// Positive decay rates `a_i`, one per state channel.
    pub rates: Vec<T>,
    pub b_gate_w: Matrix<T>,
    pub b_gate_b: Vec<T>,
    pub c_gate_w: Matrix<T>,
    pub c_gate_b: Vec<T>,
    pub b_base: Matrix<T>,
    pub c_base: Matrix<T>,
    pub d: Matrix<T>,
}

impl<T: Real> Selector<T> {
    pub fn state_size(&self) -> usize {
        self.rates.len()
    }
    pub fn input_dim(&self) -> usize {
        self.delta_w.len()
    }
    pub fn output_dim(&self) -> usize {
        self.c_base.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.state_size();
        let din = self.input_dim();
        ensure_dim("b_gate_w rows", s, self.b_gate_w.rows())?;
        ensure_dim("b_gate_w cols", din, self.b_gate_w.cols())?;
        ensure_dim("b_gate_b", s, self.b_gate_b.len())?;
        ensure_dim("c_gate_w rows", s, self.c_gate_w.rows())?;
        ensure_dim("c_gate_w cols", din, self.c_gate_w.cols())?;
        ensure_dim("c_gate_b", s, self.c_gate_b.len())?;
        ensure_dim("b_base rows", s, self.b_base.rows())?;
        ensure_dim("b_base cols", din, self.b_base.cols())?;
        ensure_dim("c_base cols", s, self.c_base.cols())?;
        ensure_dim("d rows", self.output_dim(), self.d.rows())?;
        ensure_dim("d cols", din, self.d.cols())?;
        if self.rates.iter().any(|r| !(r.value() > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("selector rates must be positive".into()));
        }
        Ok(())
    }

    /// Zero-initialised selector around fixed base matrices.
    pub fn constant(rates: Vec<T>, b_base: Matrix<T>, c_base: Matrix<T>, d: Matrix<T>) -> Result<Self> {
        let s = rates.len();
        let din = b_base.cols();
        let sel = Self {
            delta_w: vec![T::zero(); din],
            delta_b: T::zero(),
            rates,
            b_gate_w: Matrix::zeros(s, din),
            b_gate_b: vec![T::zero(); s],
            c_gate_w: Matrix::zeros(s, din),
            c_gate_b: vec![T::zero(); s],
            b_base,
            c_base,
            d,
        };
        sel.validate()?;
        Ok(sel)
    }

    /// Rebuild with every tensor passed through `f` in canonical order.
    pub fn map_tensors<U: Real>(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &[usize], &[T]) -> Vec<U>,
    ) -> Selector<U> {
        let mat = |name: &str, m: &Matrix<T>, f: &mut dyn FnMut(&str, &[usize], &[T]) -> Vec<U>| {
            Matrix::from_vec(m.rows(), m.cols(), f(&format!("{prefix}.{name}"), &m.shape(), m.data()))
                .expect("tensor map preserves length")
        };
        let delta_w = f(&format!("{prefix}.delta_w"), &[self.delta_w.len()], &self.delta_w);
        let delta_b = f(&format!("{prefix}.delta_b"), &[], &[self.delta_b])[0];
        let rates = f(&format!("{prefix}.rates"), &[self.rates.len()], &self.rates);
        let b_gate_w = mat("b_gate_w", &self.b_gate_w, f);
        let b_gate_b = f(&format!("{prefix}.b_gate_b"), &[self.b_gate_b.len()], &self.b_gate_b);
        let c_gate_w = mat("c_gate_w", &self.c_gate_w, f);
        let c_gate_b = f(&format!("{prefix}.c_gate_b"), &[self.c_gate_b.len()], &self.c_gate_b);
        let b_base = mat("b_base", &self.b_base, f);
        let c_base = mat("c_base", &self.c_base, f);
        let d = mat("d", &self.d, f);
        Selector {
            delta_w,
            delta_b,
            rates,
            b_gate_w,
            b_gate_b,
            c_gate_w,
            c_gate_b,
            b_base,
            c_base,
            d,
        }
    }
}

/// Per-step parameters for input `x_t`.
pub fn selective_params<T: Real>(x_t: &[T], sel: &Selector<T>) -> Result<SsmParams<T>> {
    ensure_dim("selector input", sel.input_dim(), x_t.len())?;
    let s = sel.state_size();
    let din = sel.input_dim();

    let step = (dot(&sel.delta_w, x_t) + sel.delta_b).softplus();
    let diag: Vec<T> = sel.rates.iter().map(|&a| (-(step * a)).exp()).collect();

    let two = T::cst(2.0);
    let b_gate: Vec<T> = sel
        .b_gate_w
        .matvec(x_t)
        .into_iter()
        .zip(&sel.b_gate_b)
        .map(|(v, &b)| two * (v + b).sigmoid())
        .collect();
    let c_gate: Vec<T> = sel
        .c_gate_w
        .matvec(x_t)
        .into_iter()
        .zip(&sel.c_gate_b)
        .map(|(v, &b)| two * (v + b).sigmoid())
        .collect();

    let mut b = Vec::with_capacity(s * din);
    for (i, &g) in b_gate.iter().enumerate() {
        b.extend(sel.b_base.row(i).iter().map(|&v| step * g * v));
    }
    let mut c = Vec::with_capacity(sel.output_dim() * s);
    for r in 0..sel.output_dim() {
        c.extend(sel.c_base.row(r).iter().zip(&c_gate).map(|(&v, &g)| v * g));
    }

    if !(step.is_finite() && all_finite(&diag) && all_finite(&b) && all_finite(&c)) {
        return Err(Error::NonFinite("selective projection"));
    }
    SsmParams::new(
        Transition::Diagonal(diag),
        Matrix::from_vec(s, din, b)?,
        Matrix::from_vec(sel.output_dim(), s, c)?,
        sel.d.clone(),
    )
}

/// Per-step parameter generation followed by the sequential scan.
pub fn selective_scan<T: Real>(sel: &Selector<T>, x: &Sequence<T>, h0: &[T]) -> Result<ScanOutput<T>> {
    let params = x
        .rows()
        .map(|xt| selective_params(xt, sel))
        .collect::<Result<Vec<_>>>()?;
    scan_sequential(&params, x, h0)
}

/// `max |a - b| / max |b|` over two equally shaped outputs.
pub fn max_relative_deviation(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(reference)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
