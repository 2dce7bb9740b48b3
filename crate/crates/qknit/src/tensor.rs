//! Dense complex linear algebra sized for ≤ 12-qubit pure states and
//! ≤ 8-qubit density matrices.
//!
//! Everything is stored row-major in double precision. Eigen/SVD routines are
//! delegated to `nalgebra`; all multi-subsystem index bookkeeping (partial
//! trace/transpose, Schmidt decompositions, subsystem permutations) lives
//! here.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{QknitError, Result};

pub type C = Complex64;

/// Total-dimension cap for `kron` and friends (2^16).
pub const SIZE_CAP: usize = 1 << 16;

/// Default equality tolerance.
pub const TOL_EQ: f64 = 1e-9;
/// Default reconstruction tolerance.
pub const TOL_RECON: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn cr(re: f64) -> C {
    C::new(re, 0.0)
}

/// A dense complex matrix (row-major). Column vectors are `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<C>,
}

impl DenseOperator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![C::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C::ONE);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[C]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut entries = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            entries.extend_from_slice(row);
        }
        Self { rows: r, cols: c, entries }
    }

    /// Column vector from amplitudes.
    pub fn column(amps: &[C]) -> Self {
        Self { rows: amps.len(), cols: 1, entries: amps.to_vec() }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C {
        self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn scale(&self, s: C) -> Self {
        let entries = self.entries.iter().map(|a| a * s).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == C::ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conjugate(&self) -> Self {
        let entries = self.entries.iter().map(|a| a.conj()).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn trace(&self) -> C {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// tr[A† B]
    pub fn hs_inner(&self, other: &Self) -> C {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in i..self.cols {
                if (self.get(i, j) - self.get(j, i).conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        eigvalsh(self).iter().all(|&e| e >= -tol)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let p = self.dagger().matmul(self);
        p.max_abs_diff(&Self::identity(self.rows)) <= tol
    }

    pub fn to_na(&self) -> DMatrix<C> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_na(m: &DMatrix<C>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Ordered list of local dimensions indexing a tensor-product space, most
/// significant factor first. Dimension-1 factors are allowed so that state
/// preparations can be modeled as channels with a trivial input space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemDims {
    pub dims: Vec<usize>,
}

impl SubsystemDims {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "subsystem dims must be positive");
        Self { dims }
    }

    pub fn qubits(n: usize) -> Self {
        Self { dims: vec![2; n.max(0)] }
    }

    pub fn trivial() -> Self {
        Self { dims: vec![1] }
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.total() != dim {
            return Err(QknitError::DimMismatch(format!(
                "subsystem dims {:?} (total {}) do not index dimension {}",
                self.dims,
                self.total(),
                dim
            )));
        }
        Ok(())
    }

    /// Decompose a flat index into per-subsystem digits (most significant
    /// factor first).
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.dims.len()];
        for (slot, &d) in self.dims.iter().enumerate().rev() {
            digits[slot] = index % d;
            index /= d;
        }
        digits
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        let mut index = 0;
        for (slot, &d) in self.dims.iter().enumerate() {
            index = index * d + digits[slot];
        }
        index
    }
}

/// Kronecker product with `a`'s indices most significant.
pub fn kron(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    let rows = a.rows.checked_mul(b.rows).unwrap_or(usize::MAX);
    let cols = a.cols.checked_mul(b.cols).unwrap_or(usize::MAX);
    if rows > SIZE_CAP || cols > SIZE_CAP {
        return Err(QknitError::SizeCap(format!("kron result {}x{} exceeds cap {}", rows, cols, SIZE_CAP)));
    }
    let mut out = DenseOperator::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let av = a.get(i, j);
            if av == C::ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.set(i * b.rows + k, j * b.cols + l, av * b.get(k, l));
                }
            }
        }
    }
    Ok(out)
}

pub fn kron_all(ops: &[&DenseOperator]) -> Result<DenseOperator> {
    let mut acc = DenseOperator::identity(1);
    for op in ops {
        acc = kron(&acc, op)?;
    }
    Ok(acc)
}

/// Trace over the complement of `keep` (subsystem indices into `dims`).
pub fn partial_trace(m: &DenseOperator, dims: &SubsystemDims, keep: &[usize]) -> Result<DenseOperator> {
    if !m.is_square() {
        return Err(QknitError::DimMismatch("partial_trace needs a square matrix".into()));
    }
    dims.check(m.rows)?;
    let kept_dims: Vec<usize> = keep.iter().map(|&s| dims.dims[s]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced: Vec<usize> = (0..dims.len()).filter(|s| !keep.contains(s)).collect();
    let traced_total: usize = traced.iter().map(|&s| dims.dims[s]).product();
    let kept_sd = SubsystemDims::new(if kept_dims.is_empty() { vec![1] } else { kept_dims });
    let traced_sd = SubsystemDims::new(if traced.is_empty() {
        vec![1]
    } else {
        traced.iter().map(|&s| dims.dims[s]).collect()
    });
    let mut out = DenseOperator::zeros(kept_total.max(1), kept_total.max(1));
    let mut digits = vec![0usize; dims.len()];
    for ik in 0..kept_total.max(1) {
        let kd = kept_sd.decode(ik);
        for jk in 0..kept_total.max(1) {
            let jd = kept_sd.decode(jk);
            let mut acc = C::ZERO;
            for t in 0..traced_total.max(1) {
                let td = traced_sd.decode(t);
                for (slot, &s) in keep.iter().enumerate() {
                    digits[s] = kd[slot];
                }
                for (slot, &s) in traced.iter().enumerate() {
                    digits[s] = td[slot];
                }
                let row = dims.encode(&digits);
                for (slot, &s) in keep.iter().enumerate() {
                    digits[s] = jd[slot];
                }
                let col = dims.encode(&digits);
                acc += m.get(row, col);
            }
            out.set(ik, jk, acc);
        }
    }
    Ok(out)
}

/// Transpose on the named subsystem only.
pub fn partial_transpose(m: &DenseOperator, dims: &SubsystemDims, subsystem: usize) -> Result<DenseOperator> {
    if !m.is_square() {
        return Err(QknitError::DimMismatch("partial_transpose needs a square matrix".into()));
    }
    dims.check(m.rows)?;
    if subsystem >= dims.len() {
        return Err(QknitError::DimMismatch(format!("subsystem {} out of range", subsystem)));
    }
    let mut out = DenseOperator::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        let mut id = dims.decode(i);
        for j in 0..m.cols {
            let mut jd = dims.decode(j);
            std::mem::swap(&mut id[subsystem], &mut jd[subsystem]);
            let r = dims.encode(&id);
            let c = dims.encode(&jd);
            std::mem::swap(&mut id[subsystem], &mut jd[subsystem]);
            out.set(r, c, m.get(i, j));
        }
    }
    Ok(out)
}

/// Relabel subsystems: new slot `s` holds old subsystem `perm[s]`.
/// Works on square matrices and column vectors.
pub fn permute_systems(m: &DenseOperator, dims: &SubsystemDims, perm: &[usize]) -> Result<DenseOperator> {
    dims.check(m.rows)?;
    assert_eq!(perm.len(), dims.len());
    let new_dims = SubsystemDims::new(perm.iter().map(|&s| dims.dims[s]).collect());
    let map = |idx: usize| -> usize {
        let old = dims.decode(idx);
        let digits: Vec<usize> = perm.iter().map(|&s| old[s]).collect();
        new_dims.encode(&digits)
    };
    let mut out = DenseOperator::zeros(m.rows, m.cols);
    if m.cols == 1 {
        for i in 0..m.rows {
            out.set(map(i), 0, m.get(i, 0));
        }
    } else {
        assert!(m.is_square());
        for i in 0..m.rows {
            let mi = map(i);
            for j in 0..m.cols {
                out.set(mi, map(j), m.get(i, j));
            }
        }
    }
    Ok(out)
}

/// Hermitian eigendecomposition; returns (eigenvalues ascending, eigenvector
/// columns).
pub fn eigh(m: &DenseOperator) -> (Vec<f64>, DenseOperator) {
    assert!(m.is_square());
    let se = nalgebra::SymmetricEigen::new(m.to_na());
    let mut order: Vec<usize> = (0..m.rows).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DenseOperator::from_fn(m.rows, m.rows, |i, j| se.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn eigvalsh(m: &DenseOperator) -> Vec<f64> {
    eigh(m).0
}

/// Full SVD `m = U Σ V†`; returns (singular values, U, V) with deterministic
/// ordering: descending σ, ties broken by lexicographic comparison of the
/// corresponding U column's (re, im) entries.
pub fn svd(m: &DenseOperator) -> (Vec<f64>, DenseOperator, DenseOperator) {
    let svd = m.to_na().svd(true, true);
    let u = svd.u.as_ref().expect("svd computes u");
    let vt = svd.v_t.as_ref().expect("svd computes v_t");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let sa = svd.singular_values[a];
        let sb = svd.singular_values[b];
        if (sa - sb).abs() > 1e-12 * (1.0 + sa.max(sb)) {
            return sb.partial_cmp(&sa).unwrap();
        }
        for i in 0..u.nrows() {
            let ca = u[(i, a)];
            let cb = u[(i, b)];
            match ca.re.partial_cmp(&cb.re).unwrap() {
                std::cmp::Ordering::Equal => {}
                o => return o,
            }
            match ca.im.partial_cmp(&cb.im).unwrap() {
                std::cmp::Ordering::Equal => {}
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let uu = DenseOperator::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
    let vv = DenseOperator::from_fn(vt.ncols(), k, |i, j| vt[(order[j], i)].conj());
    (sigmas, uu, vv)
}

/// Sum of singular values.
pub fn trace_norm(m: &DenseOperator) -> f64 {
    assert!(m.is_square());
    svd(m).0.iter().sum()
}

/// Result of a bipartite pure-state Schmidt decomposition:
/// `|ψ⟩ = Σ coeffs[k] |left[k]⟩ ⊗ |right[k]⟩`.
#[derive(Debug, Clone)]
pub struct Schmidt {
    pub coeffs: Vec<f64>,
    pub left: Vec<DenseOperator>,
    pub right: Vec<DenseOperator>,
}

/// Schmidt decomposition of a normalized bipartite column vector.
pub fn schmidt(vec: &DenseOperator, dims: &SubsystemDims) -> Result<Schmidt> {
    if dims.len() != 2 {
        return Err(QknitError::DimMismatch("schmidt needs exactly two factors".into()));
    }
    if vec.cols != 1 {
        return Err(QknitError::DimMismatch("schmidt needs a column vector".into()));
    }
    dims.check(vec.rows)?;
    let norm = vec.frobenius_norm();
    if (norm - 1.0).abs() > TOL_EQ {
        return Err(QknitError::InvalidArgument(format!("state not normalized (norm {})", norm)));
    }
    let (da, db) = (dims.dims[0], dims.dims[1]);
    let mat = DenseOperator::from_fn(da, db, |i, j| vec.get(i * db + j, 0));
    let (sigmas, u, v) = svd(&mat);
    let mut coeffs = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (k, &s) in sigmas.iter().enumerate() {
        if s < 1e-12 {
            continue;
        }
        coeffs.push(s);
        left.push(DenseOperator::from_fn(da, 1, |i, _| u.get(i, k)));
        right.push(DenseOperator::from_fn(db, 1, |j, _| v.get(j, k).conj()));
    }
    Ok(Schmidt { coeffs, left, right })
}

/// Result of an operator Schmidt decomposition
/// `M = Σ coeffs[k] left[k] ⊗ right[k]` where the factors are orthonormal
/// under the normalized Hilbert–Schmidt inner product `tr[A†B]/d`.
#[derive(Debug, Clone)]
pub struct OperatorSchmidt {
    pub coeffs: Vec<f64>,
    pub left: Vec<DenseOperator>,
    pub right: Vec<DenseOperator>,
}

/// Operator Schmidt decomposition across a bipartition, computed by
/// realigning `m` into a d_A² × d_B² matrix and taking its SVD.
pub fn operator_schmidt(m: &DenseOperator, dims: &SubsystemDims) -> Result<OperatorSchmidt> {
    if dims.len() != 2 {
        return Err(QknitError::DimMismatch("operator_schmidt needs exactly two factors".into()));
    }
    if !m.is_square() {
        return Err(QknitError::DimMismatch("operator_schmidt needs a square matrix".into()));
    }
    dims.check(m.rows)?;
    let (da, db) = (dims.dims[0], dims.dims[1]);
    // Realignment: R[(i,j),(k,l)] = M[(i,k),(j,l)] so that M = L⊗R maps to
    // vec(L)·vec(R)ᵀ.
    let realigned = DenseOperator::from_fn(da * da, db * db, |r, c| {
        let (i, j) = (r / da, r % da);
        let (k, l) = (c / db, c % db);
        m.get(i * db + k, j * db + l)
    });
    let (sigmas, u, v) = svd(&realigned);
    let scale = ((da * db) as f64).sqrt();
    let mut coeffs = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (idx, &s) in sigmas.iter().enumerate() {
        if s < 1e-12 {
            continue;
        }
        coeffs.push(s / scale);
        let lfac = DenseOperator::from_fn(da, da, |i, j| u.get(i * da + j, idx) * cr((da as f64).sqrt()));
        let rfac =
            DenseOperator::from_fn(db, db, |k, l| v.get(k * db + l, idx).conj() * cr((db as f64).sqrt()));
        left.push(lfac);
        right.push(rfac);
    }
    Ok(OperatorSchmidt { coeffs, left, right })
}

// Common fixed operators.

pub fn pauli_1q(i: usize) -> DenseOperator {
    match i {
        0 => DenseOperator::identity(2),
        1 => DenseOperator::from_rows(&[&[C::ZERO, C::ONE], &[C::ONE, C::ZERO]]),
        2 => DenseOperator::from_rows(&[&[C::ZERO, c(0.0, -1.0)], &[c(0.0, 1.0), C::ZERO]]),
        3 => DenseOperator::from_rows(&[&[C::ONE, C::ZERO], &[C::ZERO, -C::ONE]]),
        _ => panic!("pauli index out of range"),
    }
}

/// n-qubit Pauli string for an index in base 4, most significant qubit first.
pub fn pauli_string(n: usize, index: usize) -> DenseOperator {
    let mut digits = Vec::with_capacity(n);
    let mut idx = index;
    for _ in 0..n {
        digits.push(idx % 4);
        idx /= 4;
    }
    digits.reverse();
    let ops: Vec<DenseOperator> = digits.into_iter().map(pauli_1q).collect();
    let refs: Vec<&DenseOperator> = ops.iter().collect();
    kron_all(&refs).expect("pauli string within cap")
}

/// Symplectic product ⟨Qᵢ,Qⱼ⟩ ∈ {0,1}: 1 iff the Pauli strings anticommute.
pub fn symplectic(n: usize, mut i: usize, mut j: usize) -> u8 {
    let mut acc = 0usize;
    for _ in 0..n {
        let a = i % 4;
        let b = j % 4;
        if a != 0 && b != 0 && a != b {
            acc += 1;
        }
        i /= 4;
        j /= 4;
    }
    (acc % 2) as u8
}

pub fn hadamard() -> DenseOperator {
    let s = cr(std::f64::consts::FRAC_1_SQRT_2);
    DenseOperator::from_rows(&[&[s, s], &[s, -s]])
}

pub fn s_gate() -> DenseOperator {
    DenseOperator::from_rows(&[&[C::ONE, C::ZERO], &[C::ZERO, c(0.0, 1.0)]])
}

pub fn t_gate() -> DenseOperator {
    let w = C::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    DenseOperator::from_rows(&[&[C::ONE, C::ZERO], &[C::ZERO, w]])
}

pub fn cnot() -> DenseOperator {
    let mut m = DenseOperator::zeros(4, 4);
    m.set(0, 0, C::ONE);
    m.set(1, 1, C::ONE);
    m.set(2, 3, C::ONE);
    m.set(3, 2, C::ONE);
    m
}

pub fn swap_gate() -> DenseOperator {
    let mut m = DenseOperator::zeros(4, 4);
    m.set(0, 0, C::ONE);
    m.set(1, 2, C::ONE);
    m.set(2, 1, C::ONE);
    m.set(3, 3, C::ONE);
    m
}

pub fn iswap_gate() -> DenseOperator {
    let mut m = DenseOperator::zeros(4, 4);
    m.set(0, 0, C::ONE);
    m.set(1, 2, c(0.0, 1.0));
    m.set(2, 1, c(0.0, 1.0));
    m.set(3, 3, C::ONE);
    m
}

/// Computational basis state |k⟩ of dimension d.
pub fn basis_state(d: usize, k: usize) -> DenseOperator {
    let mut v = DenseOperator::zeros(d, 1);
    v.set(k, 0, C::ONE);
    v
}

/// |v⟩⟨v| for a column vector.
pub fn projector(v: &DenseOperator) -> DenseOperator {
    assert_eq!(v.cols, 1);
    DenseOperator::from_fn(v.rows, v.rows, |i, j| v.get(i, 0) * v.get(j, 0).conj())
}

/// Maximally entangled column vector (1/√d)Σ|i⟩|i⟩ on d⊗d.
pub fn max_entangled(d: usize) -> DenseOperator {
    let mut v = DenseOperator::zeros(d * d, 1);
    let a = cr(1.0 / (d as f64).sqrt());
    for i in 0..d {
        v.set(i * d + i, 0, a);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_unitary(rng: &mut StdRng, d: usize) -> DenseOperator {
        // QR of a Ginibre matrix.
        let g = DenseOperator::from_fn(d, d, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let qr = g.to_na().qr();
        let q = qr.q();
        let r = qr.r();
        // Fix phases so the result is properly unitary with positive diagonal R.
        let mut u = DenseOperator::from_na(&q);
        for j in 0..d {
            let ph = r[(j, j)];
            if ph.norm() > 0.0 {
                let f = ph / ph.norm();
                for i in 0..d {
                    let v = u.get(i, j) * f;
                    u.set(i, j, v);
                }
            }
        }
        u
    }

    fn random_state(rng: &mut StdRng, d: usize) -> DenseOperator {
        let mut v = DenseOperator::from_fn(d, 1, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let n = v.frobenius_norm();
        for e in v.entries.iter_mut() {
            *e /= n;
        }
        v
    }

    #[test]
    fn kron_identities() {
        let i2 = DenseOperator::identity(2);
        let i4 = kron(&i2, &i2).unwrap();
        assert_eq!(i4, DenseOperator::identity(4));

        let xx = kron(&pauli_1q(1), &pauli_1q(1)).unwrap();
        let v00 = basis_state(4, 0);
        let out = xx.matmul(&v00);
        assert!(out.max_abs_diff(&basis_state(4, 3)) < 1e-15);

        let zz = kron(&pauli_1q(3), &pauli_1q(3)).unwrap();
        let mut eigs = eigvalsh(&zz);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, want) in eigs.iter().zip(&[-1.0, -1.0, 1.0, 1.0]) {
            assert!((e - want).abs() < 1e-12);
        }
    }

    #[test]
    fn kron_size_cap() {
        let big = DenseOperator::identity(1 << 9);
        let err = kron(&big, &big).unwrap_err();
        assert!(matches!(err, QknitError::SizeCap(_)));
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = StdRng::seed_from_u64(7);
        let rho = projector(&random_state(&mut rng, 2));
        let sigma = projector(&random_state(&mut rng, 3)).scale(cr(0.7));
        let joint = kron(&rho, &sigma).unwrap();
        let dims = SubsystemDims::new(vec![2, 3]);
        let red = partial_trace(&joint, &dims, &[0]).unwrap();
        assert!(red.max_abs_diff(&rho.scale(sigma.trace())) < 1e-12);

        let bell = projector(&max_entangled(2));
        let dims2 = SubsystemDims::qubits(2);
        let red_b = partial_trace(&bell, &dims2, &[1]).unwrap();
        assert!(red_b.max_abs_diff(&DenseOperator::identity(2).scale(cr(0.5))) < 1e-12);

        let ket01 = projector(&basis_state(4, 1));
        let red01 = partial_trace(&ket01, &dims2, &[0]).unwrap();
        assert!(red01.max_abs_diff(&projector(&basis_state(2, 0))) < 1e-12);
    }

    #[test]
    fn partial_transpose_bell() {
        let bell = projector(&max_entangled(2));
        let dims = SubsystemDims::qubits(2);
        let pt = partial_transpose(&bell, &dims, 1).unwrap();
        let eigs = eigvalsh(&pt);
        assert!((eigs[0] + 0.5).abs() < 1e-12);

        let a = pauli_1q(2);
        let b = s_gate();
        let prod = kron(&a, &b).unwrap();
        let want = kron(&a, &b.transpose()).unwrap();
        assert!(partial_transpose(&prod, &dims, 1).unwrap().max_abs_diff(&want) < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn partial_transpose_involution(seed in 0u64..10_000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let h = DenseOperator::from_fn(4, 4, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let herm = h.add(&h.dagger());
            let dims = SubsystemDims::qubits(2);
            let twice = partial_transpose(&partial_transpose(&herm, &dims, 0).unwrap(), &dims, 0).unwrap();
            prop_assert!(twice.max_abs_diff(&herm) < 1e-14);
        }

        #[test]
        fn schmidt_reconstruction(seed in 0u64..10_000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let da = 2 + (seed % 3) as usize;
            let db = 2 + (seed % 2) as usize;
            let v = random_state(&mut rng, da * db);
            let dims = SubsystemDims::new(vec![da, db]);
            let sd = schmidt(&v, &dims).unwrap();
            let sq: f64 = sd.coeffs.iter().map(|s| s * s).sum();
            prop_assert!((sq - 1.0).abs() < 1e-9);
            let mut recon = DenseOperator::zeros(da * db, 1);
            for k in 0..sd.coeffs.len() {
                recon = recon.add(&kron(&sd.left[k], &sd.right[k]).unwrap().scale(cr(sd.coeffs[k])));
            }
            prop_assert!(recon.max_abs_diff(&v) < 1e-8);
        }

        #[test]
        fn operator_schmidt_reconstruction(seed in 0u64..10_000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let u = random_unitary(&mut rng, 4);
            let dims = SubsystemDims::qubits(2);
            let os = operator_schmidt(&u, &dims).unwrap();
            let sq: f64 = os.coeffs.iter().map(|s| s * s).sum();
            prop_assert!((sq - 1.0).abs() < 1e-8);
            let mut recon = DenseOperator::zeros(4, 4);
            for k in 0..os.coeffs.len() {
                recon = recon.add(&kron(&os.left[k], &os.right[k]).unwrap().scale(cr(os.coeffs[k])));
            }
            prop_assert!(recon.max_abs_diff(&u) < 1e-8);
        }
    }

    #[test]
    fn schmidt_examples() {
        let dims = SubsystemDims::qubits(2);
        let bell = max_entangled(2);
        let sd = schmidt(&bell, &dims).unwrap();
        assert!((sd.coeffs[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((sd.coeffs[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let prod = basis_state(4, 2);
        let sp = schmidt(&prod, &dims).unwrap();
        assert_eq!(sp.coeffs.len(), 1);
        assert!((sp.coeffs[0] - 1.0).abs() < 1e-12);

        let mut v = DenseOperator::zeros(4, 1);
        v.set(0, 0, cr(1.0 / 3.0));
        v.set(3, 0, cr(2.0 * 2.0f64.sqrt() / 3.0));
        let sv = schmidt(&v, &dims).unwrap();
        assert!((sv.coeffs[0] - 2.0 * 2.0f64.sqrt() / 3.0).abs() < 1e-12);
        assert!((sv.coeffs[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn operator_schmidt_examples() {
        let dims = SubsystemDims::qubits(2);
        let os = operator_schmidt(&cnot(), &dims).unwrap();
        assert_eq!(os.coeffs.len(), 2);
        for c in &os.coeffs {
            assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
        }

        let osw = operator_schmidt(&swap_gate(), &dims).unwrap();
        assert_eq!(osw.coeffs.len(), 4);
        for c in &osw.coeffs {
            assert!((c - 0.5).abs() < 1e-10);
        }

        let oi = operator_schmidt(&DenseOperator::identity(4), &dims).unwrap();
        assert_eq!(oi.coeffs.len(), 1);
        assert!((oi.coeffs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_norm_examples() {
        let mut rng = StdRng::seed_from_u64(3);
        let rho = projector(&random_state(&mut rng, 4));
        assert!((trace_norm(&rho) - 1.0).abs() < 1e-10);
        assert!((trace_norm(&pauli_1q(3)) - 2.0).abs() < 1e-12);
        let bell = projector(&max_entangled(2));
        let diff = bell.sub(&DenseOperator::identity(4).scale(cr(0.25)));
        assert!((trace_norm(&diff) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn symplectic_table() {
        // X vs Z anticommute, X vs X commute, anything vs I commutes.
        assert_eq!(symplectic(1, 1, 3), 1);
        assert_eq!(symplectic(1, 1, 1), 0);
        assert_eq!(symplectic(1, 0, 2), 0);
        // XX vs ZZ: two anticommuting slots -> commute overall.
        assert_eq!(symplectic(2, 5, 15), 0);
        // XI vs ZZ: one anticommuting slot.
        assert_eq!(symplectic(2, 4, 15), 1);
    }

    #[test]
    fn permute_systems_roundtrip() {
        let mut rng = StdRng::seed_from_u64(11);
        let v = random_state(&mut rng, 8);
        let dims = SubsystemDims::qubits(3);
        let p = permute_systems(&v, &dims, &[2, 0, 1]).unwrap();
        // slot0<-old2, slot1<-old0, slot2<-old1; inverse is [1, 2, 0].
        let back = permute_systems(&p, &dims, &[1, 2, 0]).unwrap();
        assert!(back.max_abs_diff(&v) < 1e-15);
    }
}
