use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `x (rows × k) · w (k × n) + b`.
pub(crate) fn affine<F: Scalar>(x: &[F], rows: usize, k: usize, w: &[F], b: &[F], n: usize) -> Vec<F> {
    let mut y = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    for i in 0..rows {
        let yi = &mut y[i * n..(i + 1) * n];
        for (kk, &xv) in x[i * k..(i + 1) * k].iter().enumerate() {
            let wr = &w[kk * n..(kk + 1) * n];
            for (o, &wv) in yi.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
    y
}

/// Backward of [`affine`]: accumulates into `dw`, `db` and returns `dx`.
pub(crate) fn affine_backward<F: Scalar>(
    x: &[F],
    dy: &[F],
    rows: usize,
    k: usize,
    n: usize,
    w: &[F],
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); rows * k];
    for i in 0..rows {
        let dyi = &dy[i * n..(i + 1) * n];
        for (d, &g) in db.iter_mut().zip(dyi) {
            *d += g;
        }
        let xi = &x[i * k..(i + 1) * k];
        let dxi = &mut dx[i * k..(i + 1) * k];
        for kk in 0..k {
            let wr = &w[kk * n..(kk + 1) * n];
            dxi[kk] = dot(wr, dyi);
            let xv = xi[kk];
            for (d, &g) in dw[kk * n..(kk + 1) * n].iter_mut().zip(dyi) {
                *d += xv * g;
            }
        }
    }
    dx
}
