//! Channel representations — Kraus, Choi, Pauli transfer matrix — and
//! weighted instruments.
//!
//! Conventions, fixed crate-wide:
//!
//! - Choi operators are trace-normalized: `Φ_E = (id ⊗ E)(|Ψ⟩⟨Ψ|)` with `|Ψ⟩`
//!   the normalized maximally entangled state, so `tr Φ_E = 1` for a
//!   trace-preserving `E`. Row index is `i·d_out + k` for input `i`, output
//!   `k` (input most significant).
//! - Pauli transfer matrices use `M_{ij} = (1/2ⁿ) tr[Qᵢ E(Qⱼ)]` with Pauli
//!   strings ordered lexicographically I,X,Y,Z per qubit, most significant
//!   qubit first.

use crate::tensor::{
    cr, eigh, kron, pauli_string, symplectic, DenseOperator, SubsystemDims, C, TOL_EQ,
};
use crate::{QknitError, Result};

/// Operator-sum representation `ρ ↦ Σᵢ Kᵢ ρ Kᵢ†`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    pub kraus_ops: Vec<DenseOperator>,
    pub dims_in: SubsystemDims,
    pub dims_out: SubsystemDims,
}

impl KrausChannel {
    pub fn new(kraus_ops: Vec<DenseOperator>, dims_in: SubsystemDims, dims_out: SubsystemDims) -> Result<Self> {
        let (din, dout) = (dims_in.total(), dims_out.total());
        if kraus_ops.is_empty() {
            return Err(QknitError::InvalidArgument("channel needs at least one Kraus operator".into()));
        }
        for k in &kraus_ops {
            if k.rows != dout || k.cols != din {
                return Err(QknitError::DimMismatch(format!(
                    "Kraus operator is {}x{}, expected {}x{}",
                    k.rows, k.cols, dout, din
                )));
            }
        }
        Ok(Self { kraus_ops, dims_in, dims_out })
    }

    /// Unitary conjugation channel on the given subsystems.
    pub fn unitary(u: &DenseOperator, dims: SubsystemDims) -> Result<Self> {
        if !u.is_unitary(1e-8) {
            return Err(QknitError::InvalidArgument("operator is not unitary".into()));
        }
        Self::new(vec![u.clone()], dims.clone(), dims)
    }

    pub fn identity(dims: SubsystemDims) -> Self {
        let d = dims.total();
        Self { kraus_ops: vec![DenseOperator::identity(d)], dims_in: dims.clone(), dims_out: dims }
    }

    pub fn d_in(&self) -> usize {
        self.dims_in.total()
    }

    pub fn d_out(&self) -> usize {
        self.dims_out.total()
    }

    /// Σ Kᵢ†Kᵢ.
    pub fn kraus_sum(&self) -> DenseOperator {
        let mut acc = DenseOperator::zeros(self.d_in(), self.d_in());
        for k in &self.kraus_ops {
            acc = acc.add(&k.dagger().matmul(k));
        }
        acc
    }

    pub fn is_tp(&self, tol: f64) -> bool {
        self.kraus_sum().max_abs_diff(&DenseOperator::identity(self.d_in())) <= tol
    }

    /// Trace-non-increasing check (Σ Kᵢ†Kᵢ ⪯ I).
    pub fn is_trace_nonincreasing(&self, tol: f64) -> bool {
        let gap = DenseOperator::identity(self.d_in()).sub(&self.kraus_sum());
        gap.is_psd(tol)
    }

    pub fn apply(&self, rho: &DenseOperator) -> Result<DenseOperator> {
        if rho.rows != self.d_in() || rho.cols != self.d_in() {
            return Err(QknitError::DimMismatch(format!(
                "state is {}x{}, channel input dim {}",
                rho.rows,
                rho.cols,
                self.d_in()
            )));
        }
        let mut out = DenseOperator::zeros(self.d_out(), self.d_out());
        for k in &self.kraus_ops {
            out = out.add(&k.matmul(rho).matmul(&k.dagger()));
        }
        Ok(out)
    }

    /// `later ∘ self` as Kraus products.
    pub fn then(&self, later: &KrausChannel) -> Result<KrausChannel> {
        if later.d_in() != self.d_out() {
            return Err(QknitError::DimMismatch("channel composition dims".into()));
        }
        let mut ops = Vec::with_capacity(self.kraus_ops.len() * later.kraus_ops.len());
        for l in &later.kraus_ops {
            for k in &self.kraus_ops {
                ops.push(l.matmul(k));
            }
        }
        KrausChannel::new(ops, self.dims_in.clone(), later.dims_out.clone())
    }

    pub fn tensor(&self, other: &KrausChannel) -> Result<KrausChannel> {
        let mut ops = Vec::with_capacity(self.kraus_ops.len() * other.kraus_ops.len());
        for a in &self.kraus_ops {
            for b in &other.kraus_ops {
                ops.push(kron(a, b)?);
            }
        }
        let mut din = self.dims_in.dims.clone();
        din.extend_from_slice(&other.dims_in.dims);
        let mut dout = self.dims_out.dims.clone();
        dout.extend_from_slice(&other.dims_out.dims);
        KrausChannel::new(ops, SubsystemDims::new(din), SubsystemDims::new(dout))
    }
}

/// Trace-normalized Choi operator of a map.
#[derive(Debug, Clone)]
pub struct ChoiOperator {
    pub matrix: DenseOperator,
    pub dims_in: SubsystemDims,
    pub dims_out: SubsystemDims,
}

impl ChoiOperator {
    pub fn dims_pair(&self) -> SubsystemDims {
        SubsystemDims::new(vec![self.dims_in.total(), self.dims_out.total()])
    }
}

/// Choi operator of a Kraus channel (trace-normalized).
pub fn choi_of(c: &KrausChannel) -> ChoiOperator {
    let (din, dout) = (c.d_in(), c.d_out());
    let mut m = DenseOperator::zeros(din * dout, din * dout);
    let scale = 1.0 / din as f64;
    for k in &c.kraus_ops {
        for i in 0..din {
            for kk in 0..dout {
                let a = k.get(kk, i);
                if a == C::ZERO {
                    continue;
                }
                for j in 0..din {
                    for l in 0..dout {
                        let v = m.get(i * dout + kk, j * dout + l) + a * k.get(l, j).conj() * cr(scale);
                        m.set(i * dout + kk, j * dout + l, v);
                    }
                }
            }
        }
    }
    ChoiOperator { matrix: m, dims_in: c.dims_in.clone(), dims_out: c.dims_out.clone() }
}

/// Kraus operators from a Choi operator; eigenvalues below 1e−10 are
/// discarded as numerical noise.
pub fn choi_to_kraus(choi: &ChoiOperator) -> Result<KrausChannel> {
    let (din, dout) = (choi.dims_in.total(), choi.dims_out.total());
    let (vals, vecs) = eigh(&choi.matrix);
    let mut ops = Vec::new();
    for (m, &lam) in vals.iter().enumerate() {
        if lam < 1e-10 {
            continue;
        }
        let s = (din as f64 * lam).sqrt();
        let k = DenseOperator::from_fn(dout, din, |kk, i| vecs.get(i * dout + kk, m) * cr(s));
        ops.push(k);
    }
    if ops.is_empty() {
        ops.push(DenseOperator::zeros(dout, din));
    }
    KrausChannel::new(ops, choi.dims_in.clone(), choi.dims_out.clone())
}

/// Real 4ⁿ×4ⁿ Pauli transfer matrix.
#[derive(Debug, Clone)]
pub struct PauliTransferMatrix {
    pub matrix: Vec<f64>,
    pub n: usize,
}

impl PauliTransferMatrix {
    pub fn dim(&self) -> usize {
        1 << (2 * self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    pub fn matmul(&self, other: &PauliTransferMatrix) -> PauliTransferMatrix {
        assert_eq!(self.n, other.n);
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.get(k, j);
                }
            }
        }
        PauliTransferMatrix { matrix: out, n: self.n }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }
}

/// Pauli transfer matrix of a qubit channel.
pub fn ptm_of(c: &KrausChannel) -> Result<PauliTransferMatrix> {
    if c.dims_in.dims.iter().any(|&d| d != 2) || c.dims_in.dims != c.dims_out.dims {
        return Err(QknitError::DimMismatch("ptm_of needs matching qubit systems".into()));
    }
    let n = c.dims_in.len();
    let dim = 1usize << (2 * n);
    let scale = 1.0 / (1 << n) as f64;
    let mut matrix = vec![0.0; dim * dim];
    for j in 0..dim {
        let qj = pauli_string(n, j);
        let eqj = c.apply(&qj)?;
        for i in 0..dim {
            let qi = pauli_string(n, i);
            let tr = qi.matmul(&eqj).trace();
            matrix[i * dim + j] = tr.re * scale;
        }
    }
    Ok(PauliTransferMatrix { matrix, n })
}

/// Symplectic Walsh–Hadamard transform: `(Wx)ᵢ = Σⱼ (−1)^{⟨Qᵢ,Qⱼ⟩} xⱼ`.
/// Applying twice multiplies by 4ⁿ.
pub fn walsh_hadamard(v: &[f64]) -> Result<Vec<f64>> {
    let len = v.len();
    let mut n = 0usize;
    let mut acc = 1usize;
    while acc < len {
        acc *= 4;
        n += 1;
    }
    if acc != len || len == 0 {
        return Err(QknitError::DimMismatch(format!("length {} is not a power of 4", len)));
    }
    let mut out = vec![0.0; len];
    for i in 0..len {
        let mut s = 0.0;
        for (j, &x) in v.iter().enumerate() {
            if symplectic(n, i, j) == 1 {
                s -= x;
            } else {
                s += x;
            }
        }
        out[i] = s;
    }
    Ok(out)
}

/// Quasiprobability coefficients and 1-norm of the inverse of a
/// Pauli-diagonal map: given the PTM diagonal `m`, returns `r` with
/// `E⁻¹ = Σᵢ rᵢ Qᵢ·Qᵢ` and `γ = ‖r‖₁`.
pub fn pauli_diagonal_inverse(m: &[f64]) -> Result<(Vec<f64>, f64)> {
    if m.iter().any(|&d| d.abs() < 1e-12) {
        return Err(QknitError::NotInvertible("Pauli-diagonal map has a zero diagonal entry".into()));
    }
    let inv: Vec<f64> = m.iter().map(|&d| 1.0 / d).collect();
    let w = walsh_hadamard(&inv)?;
    let scale = 1.0 / m.len() as f64;
    let r: Vec<f64> = w.iter().map(|&x| x * scale).collect();
    let gamma = r.iter().map(|x| x.abs()).sum();
    Ok((r, gamma))
}

/// An instrument whose branches carry classical side information as signed
/// weights `βᵢ ∈ [−1, 1]`; realizes the Hermitian-preserving map `Σᵢ βᵢ Eᵢ`.
#[derive(Debug, Clone)]
pub struct WeightedInstrument {
    pub branches: Vec<(KrausChannel, f64)>,
}

impl WeightedInstrument {
    pub fn new(branches: Vec<(KrausChannel, f64)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(QknitError::InvalidArgument("instrument needs at least one branch".into()));
        }
        for (_, w) in &branches {
            if w.abs() > 1.0 + 1e-12 {
                return Err(QknitError::InvalidArgument(format!("branch weight {} outside [-1,1]", w)));
            }
        }
        Ok(Self { branches })
    }

    /// Single-branch instrument with weight +1.
    pub fn deterministic(c: KrausChannel) -> Self {
        Self { branches: vec![(c, 1.0)] }
    }

    pub fn dims_in(&self) -> &SubsystemDims {
        &self.branches[0].0.dims_in
    }

    pub fn dims_out(&self) -> &SubsystemDims {
        &self.branches[0].0.dims_out
    }

    /// Σ Kᵢ†Kᵢ over all branches; I for a genuine instrument.
    pub fn branch_sum(&self) -> DenseOperator {
        let din = self.branches[0].0.d_in();
        let mut acc = DenseOperator::zeros(din, din);
        for (c, _) in &self.branches {
            acc = acc.add(&c.kraus_sum());
        }
        acc
    }

    pub fn is_tp(&self, tol: f64) -> bool {
        let din = self.branches[0].0.d_in();
        self.branch_sum().max_abs_diff(&DenseOperator::identity(din)) <= tol
    }

    /// The weighted map `ρ ↦ Σᵢ βᵢ Eᵢ(ρ)`.
    pub fn apply_weighted(&self, rho: &DenseOperator) -> Result<DenseOperator> {
        let dout = self.branches[0].0.d_out();
        let mut out = DenseOperator::zeros(dout, dout);
        for (c, w) in &self.branches {
            out = out.add(&c.apply(rho)?.scale(cr(*w)));
        }
        Ok(out)
    }
}

/// Choi operator of the weighted map `Σᵢ βᵢ Eᵢ` (Hermitian, generally
/// non-PSD).
pub fn reconstruct_superop(w: &WeightedInstrument) -> ChoiOperator {
    let dims_in = w.dims_in().clone();
    let dims_out = w.dims_out().clone();
    let (din, dout) = (dims_in.total(), dims_out.total());
    let mut m = DenseOperator::zeros(din * dout, din * dout);
    for (c, beta) in &w.branches {
        m = m.add(&choi_of(c).matrix.scale(cr(*beta)));
    }
    ChoiOperator { matrix: m, dims_in, dims_out }
}

/// PPT check of an operator across the given bipartition; the caller
/// supplies the grouped matrix and two-factor dims, and which factor to
/// transpose.
pub fn is_ppt(m: &DenseOperator, dims: &SubsystemDims, subsystem: usize, tol: f64) -> Result<bool> {
    let pt = crate::tensor::partial_transpose(m, dims, subsystem)?;
    let min = crate::tensor::eigvalsh(&pt).into_iter().fold(f64::INFINITY, f64::min);
    Ok(min >= -tol)
}

/// One-qubit depolarizing channel with probability `p`.
pub fn depolarizing(p: f64) -> KrausChannel {
    let i = crate::tensor::pauli_1q(0).scale(cr((1.0 - 3.0 * p / 4.0).sqrt()));
    let x = crate::tensor::pauli_1q(1).scale(cr((p / 4.0).sqrt()));
    let y = crate::tensor::pauli_1q(2).scale(cr((p / 4.0).sqrt()));
    let z = crate::tensor::pauli_1q(3).scale(cr((p / 4.0).sqrt()));
    KrausChannel::new(vec![i, x, y, z], SubsystemDims::qubits(1), SubsystemDims::qubits(1)).unwrap()
}

/// Prepare-state channel: traces its (trivial or nontrivial) input and
/// outputs the fixed pure state `|v⟩⟨v|`. Kraus ops are `|v⟩⟨i|`.
pub fn prepare_channel(v: &DenseOperator, dims_in: SubsystemDims) -> KrausChannel {
    let din = dims_in.total();
    let dout = v.rows;
    let ops = (0..din)
        .map(|i| DenseOperator::from_fn(dout, din, |k, j| if j == i { v.get(k, 0) } else { C::ZERO }))
        .collect();
    KrausChannel::new(ops, dims_in, SubsystemDims::new(vec![dout])).unwrap()
}

pub fn assert_is_tp(c: &KrausChannel) -> Result<()> {
    if !c.is_tp(TOL_EQ) {
        return Err(QknitError::InvalidArgument("channel is not trace-preserving".into()));
    }
    Ok(())
}
