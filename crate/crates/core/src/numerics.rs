//! Dense row-major matrices and the small set of numerical routines the
//! GCN engine needs: products, activations, softmax cross-entropy,
//! Glorot initialization, SGD with momentum and a central-difference
//! gradient oracle.
//!
//! All accumulation loops run in a fixed index order so results are
//! reproducible bit for bit.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl Matrix {
    /// Builds a matrix from external data, rejecting bad lengths and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Ok(Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// In-place `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &Matrix, alpha: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add_scaled", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// Bitwise-stable identity for checkpoints and determinism checks.
    pub fn bits(&self) -> impl Iterator<Item = u64> + '_ {
        self.data.iter().map(|v| v.to_bits())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Standard product. Each output entry accumulates over the inner index in
/// ascending order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let out_row = &mut out.data[i * m..(i + 1) * m];
        let a_row = &a.data[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape("matmul_tn", a.shape(), b.shape()));
    }
    let (k, n, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for p in 0..k {
        let a_row = &a.data[p * n..(p + 1) * n];
        let b_row = &b.data[p * m..(p + 1) * m];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        for j in 0..m {
            let b_row = &b.data[j * k..(j + 1) * k];
            out.data[i * m + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    Ok(out)
}

pub fn relu(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Max-subtracted softmax of a vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(-log p[label], p - onehot(label))`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|&z| z - max).collect();
    let log_total = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    let loss = log_total - shifted[label];
    let mut grad: Vec<f64> = shifted.iter().map(|s| (s - log_total).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform draws in `±sqrt(6 / (rows + cols))` from a fresh stream for `seed`.
pub fn glorot_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_from_rng(rows, cols, &mut rng)
}

/// Glorot draw consuming `rows * cols` values from `rng` in row-major order.
pub fn glorot_from_rng<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix { rows, cols, data }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocity: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        OptimizerState {
            velocity: params
                .into_iter()
                .map(|p| Matrix::zeros(p.rows, p.cols))
                .collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }
}

/// `v <- momentum * v + grad; param <- param - lr * v`
pub fn sgd_momentum_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::InvalidInput(format!(
            "optimizer got {} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.shape() != g.shape() {
            return Err(Error::shape("sgd_momentum_step", p.shape(), g.shape()));
        }
        if p.shape() != v.shape() {
            return Err(Error::shape("sgd_momentum_step", p.shape(), v.shape()));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pv, gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
            *vv = momentum * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    state.step += 1;
    Ok(())
}

/// Central differences `(f(θ + h·e) - f(θ - h·e)) / 2h` for every entry of every matrix.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[Matrix], h: f64) -> Vec<Matrix>
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut probe = params.to_vec();
    let mut grads: Vec<Matrix> = params
        .iter()
        .map(|p| Matrix::zeros(p.rows, p.cols))
        .collect();
    for t in 0..params.len() {
        for idx in 0..params[t].data.len() {
            let orig = params[t].data[idx];
            probe[t].data[idx] = orig + h;
            let plus = loss_fn(&probe);
            probe[t].data[idx] = orig - h;
            let minus = loss_fn(&probe);
            probe[t].data[idx] = orig;
            grads[t].data[idx] = (plus - minus) / (2.0 * h);
        }
    }
    grads
}

/// Largest `|a - n| / max(|a|, |n|, floor)` across entries.
pub fn max_relative_error(analytic: &[Matrix], numeric: &[Matrix], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data.iter().zip(&n.data))
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let x = random(3, 4, 1);
        assert_eq!(matmul(&Matrix::identity(3), &x).unwrap(), x);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[2.0, 4.0]);
        assert!(matches!(
            matmul(&Matrix::zeros(2, 3), &Matrix::zeros(4, 2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let a = random(4, 3, 2);
        let b = random(4, 5, 3);
        let c = random(6, 3, 4);
        assert!(
            matmul_tn(&a, &b)
                .unwrap()
                .max_abs_diff(&matmul(&a.transpose(), &b).unwrap())
                < 1e-14
        );
        assert!(
            matmul_nt(&a, &c)
                .unwrap()
                .max_abs_diff(&matmul(&a, &c.transpose()).unwrap())
                < 1e-14
        );
    }

    #[test]
    fn relu_examples() {
        let neg = Matrix::row_vector(&[-1.0, -2.0]).unwrap();
        assert_eq!(relu(&neg), Matrix::zeros(1, 2));
        let pos = Matrix::row_vector(&[1.0, 2.0]).unwrap();
        assert_eq!(relu(&pos), pos);
        let mixed = Matrix::row_vector(&[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&mixed).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, _) = softmax_cross_entropy(&[0.3; 6], 2).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12 && grad.iter().all(|g| g.is_finite()));
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }

    #[test]
    fn glorot_examples() {
        assert_eq!(glorot_init(5, 7, 42), glorot_init(5, 7, 42));
        assert_ne!(glorot_init(5, 7, 42), glorot_init(5, 7, 43));
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(glorot_init(5, 7, 1).data().iter().all(|v| v.abs() <= bound));
        let big = glorot_init(1000, 1000, 7);
        let mean = big.data().iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sgd_examples() {
        let g = Matrix::row_vector(&[1.0, -2.0]).unwrap();
        let mut p = Matrix::row_vector(&[5.0, 5.0]).unwrap();
        let mut st = OptimizerState::new([&p]);
        sgd_momentum_step(&mut [&mut p], std::slice::from_ref(&g), &mut st, 1.0, 0.0).unwrap();
        assert_eq!(p.data(), &[4.0, 7.0]);

        let mut q = Matrix::row_vector(&[5.0, 5.0]).unwrap();
        let mut st = OptimizerState::new([&q]);
        sgd_momentum_step(&mut [&mut q], &[Matrix::zeros(1, 2)], &mut st, 0.1, 0.9).unwrap();
        assert_eq!(q.data(), &[5.0, 5.0]);

        // two steps with constant grad: g + (0.9 g + g) = 2.9 g
        let mut r = Matrix::row_vector(&[0.0]).unwrap();
        let g = Matrix::row_vector(&[1.0]).unwrap();
        let mut st = OptimizerState::new([&r]);
        for _ in 0..2 {
            sgd_momentum_step(&mut [&mut r], std::slice::from_ref(&g), &mut st, 1.0, 0.9).unwrap();
        }
        assert!((r.data()[0] + 2.9).abs() < 1e-15);
        assert_eq!(st.step(), 2);

        let mut bad = Matrix::zeros(2, 2);
        assert!(
            sgd_momentum_step(&mut [&mut bad], &[Matrix::zeros(1, 2)], &mut st, 1.0, 0.9).is_err()
        );
    }

    #[test]
    fn finite_difference_examples() {
        let theta = [Matrix::row_vector(&[3.0]).unwrap()];
        let g = finite_diff_grad(|p| p[0].data()[0].powi(2), &theta, 1e-5);
        assert!((g[0].data()[0] - 6.0).abs() < 1e-6);

        let g = finite_diff_grad(|_| 4.2, &theta, 1e-5);
        assert_eq!(g[0].data()[0], 0.0);

        // x'Ax has gradient (A + A')x
        let a = random(4, 4, 9);
        let x = random(4, 1, 10);
        let quad = |p: &[Matrix]| {
            let ax = matmul(&a, &p[0]).unwrap();
            matmul_tn(&p[0], &ax).unwrap().data()[0]
        };
        let g = finite_diff_grad(quad, std::slice::from_ref(&x), 1e-5);
        let mut sym = a.clone();
        sym.add_scaled(&a.transpose(), 1.0).unwrap();
        let expected = matmul(&sym, &x).unwrap();
        assert!(g[0].max_abs_diff(&expected) < 1e-8);
    }

    #[test]
    fn cross_entropy_gradient_matches_oracle() {
        let logits = random(1, 6, 11);
        let (_, grad) = softmax_cross_entropy(logits.data(), 4).unwrap();
        let num = finite_diff_grad(
            |p| softmax_cross_entropy(p[0].data(), 4).unwrap().0,
            std::slice::from_ref(&logits),
            1e-5,
        );
        let analytic = Matrix::row_vector(&grad).unwrap();
        assert!(max_relative_error(&[analytic], &num, 1e-8) < 1e-4);
    }

    proptest! {
        #[test]
        fn transpose_of_product(seed in any::<u64>(), n in 1usize..6, k in 1usize..6, m in 1usize..6) {
            let a = random(n, k, seed);
            let b = random(k, m, seed.wrapping_add(1));
            let lhs = matmul(&a, &b).unwrap().transpose();
            let rhs = matmul(&b.transpose(), &a.transpose()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            prop_assert_eq!(matmul(&a, &Matrix::identity(k)).unwrap(), a);
        }

        #[test]
        fn softmax_is_a_distribution(values in proptest::collection::vec(-50.0..50.0f64, 1..10), label in 0usize..10) {
            let p = softmax(&values);
            prop_assert!(p.iter().all(|v| *v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let label = label % values.len();
            let (_, grad) = softmax_cross_entropy(&values, label).unwrap();
            prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
