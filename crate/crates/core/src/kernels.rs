//! Strided matrix views and a bounds-checked GEMM wrapper used by the hot
//! loops of the recurrent layers.

use crate::tensor::Real;

/// Read-only strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Real> MatRef<'a, T> {
    /// Row-major `rows x cols` view starting at `data[0]`.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(
                last < data.len(),
                "matrix view {rows}x{cols} (rs {rs}, cs {cs}) exceeds buffer of {}",
                data.len()
            );
        }
        MatRef {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    /// Column block `[start, start + width)`.
    pub fn cols(self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols);
        let offset = if width == 0 || self.rows == 0 {
            0
        } else {
            start * self.cs
        };
        MatRef::strided(&self.data[offset..], self.rows, width, self.rs, self.cs)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }
}

/// Mutable strided matrix view.
#[derive(Debug)]
pub struct MatMut<'a, T> {
    data: &'a mut [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Real> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        if rows > 0 && cols > 0 {
            assert!(rows * cols <= data.len());
        }
        MatMut {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn strided(data: &'a mut [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(last < data.len(), "mutable matrix view exceeds buffer");
        }
        MatMut {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    /// Column block `[start, start + width)`.
    pub fn cols(self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols);
        let offset = if width == 0 || self.rows == 0 {
            0
        } else {
            start * self.cs
        };
        let (rows, rs, cs) = (self.rows, self.rs, self.cs);
        MatMut::strided(&mut self.data[offset..], rows, width, rs, cs)
    }

    /// Transposed view onto a row-major `cols x rows` buffer.
    pub fn new_t(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        if rows > 0 && cols > 0 {
            assert!(rows * cols <= data.len());
        }
        MatMut {
            data,
            rows,
            cols,
            rs: 1,
            cs: rows,
        }
    }
}

/// `C = alpha * A * B + beta * C`. When `beta` is zero, `C` is not read.
pub fn gemm<T: Real>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: MatMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == T::zero() {
                    T::zero()
                } else {
                    *v * beta
                };
            }
        }
        return;
    }
    // SAFETY: every view was bounds-checked at construction for its extents
    // and strides, and `c` is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// `y += A x` for row-major `A` (`rows x x.len()`).
pub fn matvec_acc<T: Real>(a: &[T], x: &[T], y: &mut [T]) {
    let n = x.len();
    debug_assert_eq!(a.len(), n * y.len());
    for (row, out) in a.chunks_exact(n).zip(y.iter_mut()) {
        *out += dot(row, x);
    }
}

/// `y += A^T x` for row-major `A` (`x.len() x y.len()`).
pub fn matvec_t_acc<T: Real>(a: &[T], x: &[T], y: &mut [T]) {
    let n = y.len();
    debug_assert_eq!(a.len(), n * x.len());
    for (row, &xi) in a.chunks_exact(n).zip(x) {
        if xi != T::zero() {
            axpy(xi, row, y);
        }
    }
}

/// `A += x y^T` for row-major `A` (`x.len() x y.len()`).
pub fn outer_acc<T: Real>(x: &[T], y: &[T], a: &mut [T]) {
    let n = y.len();
    debug_assert_eq!(a.len(), n * x.len());
    for (row, &xi) in a.chunks_exact_mut(n).zip(x) {
        if xi != T::zero() {
            axpy(xi, y, row);
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`.
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}
