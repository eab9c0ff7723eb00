use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an explicit shape.
#[derive(Clone, PartialEq)]
pub struct NumericArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl NumericArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape(
                "NumericArray::new",
                format!("shape {shape:?} holds {expected} values, got {}", values.len()),
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            values: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::shape(
                    "NumericArray::from_rows",
                    format!("row {i} has {} columns, expected {cols}", row.len()),
                ));
            }
            values.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True for rank-0 arrays and any array holding exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    /// Interprets the array as a matrix: rank-1 arrays are a single row.
    pub fn as_matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Some((1, *n)),
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn same_shape(&self, other: &NumericArray) -> bool {
        self.shape == other.shape
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &NumericArray) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub(crate) fn scale_assign(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

impl fmt::Debug for NumericArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "NumericArray{:?}", self.shape)?;
        let head = &self.values[..self.values.len().min(SHOWN)];
        write!(f, " {head:?}")?;
        if self.values.len() > SHOWN {
            write!(f, " ..")?;
        }
        Ok(())
    }
}

/// `y = x Wᵀ + b` for `x: [rows, in]`, `W: [out, in]`, `b: [out]`.
pub(crate) fn affine_forward(
    x: &[f64],
    rows: usize,
    inner: usize,
    weight: &[f64],
    outer: usize,
    bias: &[f64],
) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * outer);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(
        rows, inner, outer, x, (inner as isize, 1), weight, (1, inner as isize), &mut y,
        1.0,
    );
    y
}

/// `c += a·b` with arbitrary strides, `a: m×k`, `b: k×n`, `c: m×n` row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    assert!((last(m, k, a_strides) as usize) < a.len());
    assert!((last(k, n, b_strides) as usize) < b.len());
    // SAFETY: the asserts above bound every index reachable through the
    // given dimensions and strides; `c` is densely packed and large enough.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
