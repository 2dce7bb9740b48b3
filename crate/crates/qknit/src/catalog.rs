//! Closed-form QPD constructors and extents.
//!
//! Every constructor returns a [`QuasiDecomposition`] whose validity is
//! independently checkable through the exact reconstruction oracle, together
//! with its closed-form 1-norm as `claimed_gamma`.
//!
//! | Constructor | Target | 1-norm |
//! |-------------|--------|--------|
//! | [`t_gate_qpd`] | T channel over Cliffords | √2 |
//! | [`magic_state_qpd`] | \|H⟩⟨H\| over stabilizers | √2 |
//! | [`pure_state_sep_qpd`] | bipartite pure state over products | 2(Σu)²−1 |
//! | [`kak_lo_qpd`], [`two_qubit_gate_qpd`] | bipartite unitary over local instruments | 2(Σu)²−1 |
//! | [`wirecut_mpc_qpd`] | n-wire identity, measure-and-prepare | 4ⁿ |
//! | [`wirecut_ebc_qpd`] | d-dim identity, entanglement-breaking | 2d−1 |
//! | [`transpose_qpd`] | transpose map | d |
//! | [`unot_qpd`] | universal NOT | 2 |
//! | [`pec_basis_and_inverse`] | depolarizing inverse over noisy Paulis | (1+δ/2)/(1−δ), δ=ε(2−ε) |
//! | [`clifford_gate_cut`] | Choi state of a Clifford gate | 2(Σu)²−1 |

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::channels::{choi_to_kraus, depolarizing, ChoiOperator, KrausChannel, WeightedInstrument};
use crate::qpd::QuasiDecomposition;
use crate::tensor::{
    basis_state, c, cr, eigh, kron, pauli_1q, pauli_string, permute_systems,
    s_gate, schmidt, DenseOperator, SubsystemDims, C,
};
use crate::{QknitError, Result};

/// Extent, regularized extent, and asymptotic (entropic) extent of a pure
/// state: γ ≥ γ̄ ≥ γ̃ ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtentTriple {
    pub gamma: f64,
    pub gamma_reg: f64,
    pub gamma_sreg: f64,
}

fn unitary_term(coeff: f64, u: &DenseOperator, dims: &SubsystemDims) -> (f64, WeightedInstrument) {
    let chan = KrausChannel::unitary(u, dims.clone()).expect("catalog unitaries are unitary");
    (coeff, WeightedInstrument::deterministic(chan))
}

fn prep_term(coeff: f64, state: &DenseOperator, dims_out: SubsystemDims) -> (f64, WeightedInstrument) {
    let chan = KrausChannel::new(vec![state.clone()], SubsystemDims::trivial(), dims_out)
        .expect("prep Kraus shape");
    (coeff, WeightedInstrument::deterministic(chan))
}

/// `T = ½·id + (1/√2)·S − ((√2−1)/2)·Z` as channels; 1-norm √2.
pub fn t_gate_qpd() -> QuasiDecomposition {
    let dims = SubsystemDims::qubits(1);
    let sq2 = std::f64::consts::SQRT_2;
    let terms = vec![
        unitary_term(0.5, &pauli_1q(0), &dims),
        unitary_term(1.0 / sq2, &s_gate(), &dims),
        unitary_term(-(sq2 - 1.0) / 2.0, &pauli_1q(3), &dims),
    ];
    QuasiDecomposition::new(terms, "T").with_gamma(sq2)
}

/// The magic state `|H⟩ = (|0⟩ + e^{iπ/4}|1⟩)/√2`, the T-gate resource
/// state `T|+⟩`.
pub fn magic_state() -> DenseOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DenseOperator::column(&[cr(s), Complex64::from_polar(s, PI / 4.0)])
}

/// `|H⟩⟨H| = ½|+⟩⟨+| + (1/√2)|i+⟩⟨i+| − ((√2−1)/2)|−⟩⟨−|`; 1-norm √2.
pub fn magic_state_qpd() -> QuasiDecomposition {
    let dims = SubsystemDims::qubits(1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sq2 = std::f64::consts::SQRT_2;
    let plus = DenseOperator::column(&[cr(s), cr(s)]);
    let iplus = DenseOperator::column(&[cr(s), c(0.0, s)]);
    let minus = DenseOperator::column(&[cr(s), cr(-s)]);
    let terms = vec![
        prep_term(0.5, &plus, dims.clone()),
        prep_term(1.0 / sq2, &iplus, dims.clone()),
        prep_term(-(sq2 - 1.0) / 2.0, &minus, dims),
    ];
    QuasiDecomposition::new(terms, "|H><H|").with_gamma(sq2)
}

fn check_schmidt_vector(u: &[f64]) -> Result<f64> {
    if u.is_empty() || u.iter().any(|&x| x < 0.0) {
        return Err(QknitError::InvalidArgument("Schmidt coefficients must be nonnegative".into()));
    }
    let sq: f64 = u.iter().map(|x| x * x).sum();
    if (sq - 1.0).abs() > 1e-8 {
        return Err(QknitError::InvalidArgument(format!("Schmidt coefficients not normalized: Σu² = {}", sq)));
    }
    Ok(u.iter().sum())
}

/// `(γ, γ̄, γ̃) = (2(Σu)²−1, (Σu)², 2^{H(u²)})` for a pure state with Schmidt
/// coefficients `u`.
pub fn pure_state_extents(u: &[f64]) -> Result<ExtentTriple> {
    let su = check_schmidt_vector(u)?;
    let h: f64 = u
        .iter()
        .map(|&x| {
            let p = x * x;
            if p > 0.0 {
                -p * p.log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok(ExtentTriple { gamma: 2.0 * su * su - 1.0, gamma_reg: su * su, gamma_sreg: h.exp2() })
}

/// Separable QPD of a bipartite pure state with Schmidt coefficients `u` in
/// the computational bases of two rank-sized systems; 1-norm `2(Σu)²−1`.
pub fn pure_state_sep_qpd(u: &[f64]) -> Result<QuasiDecomposition> {
    let r = u.iter().filter(|&&x| x > 1e-12).count();
    if r > 4 {
        return Err(QknitError::SizeCap(format!("Schmidt rank {} exceeds the σ⁺ product cap of 4", r)));
    }
    let f: Vec<DenseOperator> = (0..u.len()).map(|k| basis_state(u.len(), k)).collect();
    pure_state_sep_qpd_with_bases(u, &f, &f)
}

/// As [`pure_state_sep_qpd`] with explicit orthonormal Schmidt vectors
/// `left[k]`, `right[k]` of the two factors. Elements are explicit
/// product-state preparations: the 2^r−1 phased states of σ⁺ with positive
/// coefficient (Σu)²/(2^r−1) each, and the r(r−1) cross products of σ⁻ with
/// coefficient −uᵢuⱼ.
///
/// Unlike the public wrapper this constructor accepts any rank: the phase
/// multipliers 2^{k−1}−1 have pairwise distinct differences mod 2^r−1 for
/// every r (as bit strings, 2^a−2^b is a cyclically shifted run of ones, so
/// no two differences coincide), which is exactly what makes the phase
/// average of σ⁺ kill all cross terms.
pub fn pure_state_sep_qpd_with_bases(
    u: &[f64],
    left: &[DenseOperator],
    right: &[DenseOperator],
) -> Result<QuasiDecomposition> {
    // Drop zero coefficients so the effective rank drives the term count.
    let mut uu = Vec::new();
    let mut f = Vec::new();
    let mut g = Vec::new();
    for (k, &x) in u.iter().enumerate() {
        if x > 1e-12 {
            uu.push(x);
            f.push(left[k].clone());
            g.push(right[k].clone());
        }
    }
    let su = check_schmidt_vector(&uu)?;
    let r = uu.len();
    if r > 12 {
        return Err(QknitError::SizeCap(format!("Schmidt rank {} would create {} σ⁺ terms", r, (1u64 << r) - 1)));
    }
    let (da, db) = (f[0].rows, g[0].rows);
    let dims_out = SubsystemDims::new(vec![da, db]);
    if r == 1 {
        let state = kron(&f[0], &g[0])?;
        let terms = vec![prep_term(1.0, &state, dims_out)];
        return Ok(QuasiDecomposition::new(terms, "pure-state-sep").with_gamma(1.0));
    }
    let a_plus = su * su;
    let nn = (1usize << r) - 1;
    let mut terms = Vec::with_capacity(nn + r * (r - 1));
    for j in 1..=nn {
        let mut phi = DenseOperator::zeros(da, 1);
        let mut tau = DenseOperator::zeros(db, 1);
        for (k, &uk) in uu.iter().enumerate() {
            let m = (1usize << k) - 1;
            let angle = 2.0 * PI * (j as f64) * (m as f64) / (nn as f64);
            let amp = (uk / su).sqrt();
            phi = phi.add(&f[k].scale(Complex64::from_polar(amp, angle)));
            tau = tau.add(&g[k].scale(Complex64::from_polar(amp, -angle)));
        }
        terms.push(prep_term(a_plus / nn as f64, &kron(&phi, &tau)?, dims_out.clone()));
    }
    for i in 0..r {
        for j in 0..r {
            if i != j {
                terms.push(prep_term(-uu[i] * uu[j], &kron(&f[i], &g[j])?, dims_out.clone()));
            }
        }
    }
    Ok(QuasiDecomposition::new(terms, "pure-state-sep").with_gamma(2.0 * su * su - 1.0))
}

/// QPD of a bipartite unitary `U = Σⱼ uⱼ Lⱼ⊗Rⱼ` (unitary Schmidt form) into
/// local instruments; 1-norm `2(Σu)² − Σu² = 2(Σu)²−1`.
///
/// Elements are the diagonal unitary channels `uⱼ² Lⱼ⊗Rⱼ` and, per pair
/// `j<k` and phase `φ ∈ {0, π/2}`, a four-branch instrument with Kraus
/// `(Lⱼ ± e^{−iφ}Lₖ)/2 ⊗ (Rⱼ ± e^{−iφ}Rₖ)/2` and weight equal to the sign
/// product.
pub fn kak_lo_qpd(u: &[f64], left: &[DenseOperator], right: &[DenseOperator]) -> Result<QuasiDecomposition> {
    if u.len() != left.len() || u.len() != right.len() {
        return Err(QknitError::DimMismatch("coefficient/factor count mismatch".into()));
    }
    for m in left.iter().chain(right) {
        if !m.is_unitary(1e-8) {
            return Err(QknitError::NonUnitarySchmidtForm("Schmidt factor is not unitary".into()));
        }
    }
    check_schmidt_vector(u)?;
    let (da, db) = (left[0].rows, right[0].rows);
    let dims = SubsystemDims::new(vec![da, db]);
    let mut terms = Vec::new();
    for (j, &uj) in u.iter().enumerate() {
        terms.push(unitary_term(uj * uj, &kron(&left[j], &right[j])?, &dims));
    }
    for j in 0..u.len() {
        for k in (j + 1)..u.len() {
            for (phi, sign) in [(0.0, 1.0), (PI / 2.0, -1.0)] {
                let e = Complex64::from_polar(1.0, -phi);
                let mut branches = Vec::with_capacity(4);
                for s in [1.0, -1.0] {
                    for t in [1.0, -1.0] {
                        let a = left[j].add(&left[k].scale(e * cr(s))).scale(cr(0.5));
                        let b = right[j].add(&right[k].scale(e * cr(t))).scale(cr(0.5));
                        let chan = KrausChannel::new(vec![kron(&a, &b)?], dims.clone(), dims.clone())?;
                        branches.push((chan, s * t));
                    }
                }
                terms.push((sign * 2.0 * u[j] * u[k], WeightedInstrument::new(branches)?));
            }
        }
    }
    let su: f64 = u.iter().sum();
    Ok(QuasiDecomposition::new(terms, "kak-lo").with_gamma(2.0 * su * su - 1.0))
}

/// The magic basis as a column matrix: Bell states in which every
/// `SU(2)⊗SU(2)` operator is real orthogonal.
fn magic_basis() -> DenseOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DenseOperator::from_rows(&[
        &[cr(s), c(0.0, s), C::ZERO, C::ZERO],
        &[C::ZERO, C::ZERO, c(0.0, s), cr(s)],
        &[C::ZERO, C::ZERO, c(0.0, s), cr(-s)],
        &[cr(s), c(0.0, -s), C::ZERO, C::ZERO],
    ])
}

/// Factor a local (Schmidt-rank-1) two-qubit unitary into its tensor
/// factors by nearest-Kronecker extraction from the dominant 2×2 block.
fn split_local_unitary(k: &DenseOperator) -> Result<(DenseOperator, DenseOperator)> {
    let block = |i: usize, j: usize| DenseOperator::from_fn(2, 2, |a, b| k.get(i * 2 + a, j * 2 + b));
    let (mut bi, mut bj, mut best) = (0, 0, -1.0);
    for i in 0..2 {
        for j in 0..2 {
            let nrm = block(i, j).frobenius_norm();
            if nrm > best {
                best = nrm;
                bi = i;
                bj = j;
            }
        }
    }
    let b = block(bi, bj);
    let v2 = b.scale(cr(std::f64::consts::SQRT_2 / b.frobenius_norm()));
    let v2d = v2.dagger();
    let v1 = DenseOperator::from_fn(2, 2, |i, j| block(i, j).matmul(&v2d).trace() * cr(0.5));
    if !v1.is_unitary(1e-8) || !v2.is_unitary(1e-8) || kron(&v1, &v2)?.max_abs_diff(k) > 1e-8 {
        return Err(QknitError::NonUnitarySchmidtForm("local factor is not a tensor product of unitaries".into()));
    }
    Ok((v1, v2))
}

/// Unitary operator Schmidt decomposition of a two-qubit gate:
/// `U = Σₘ uₘ Lₘ⊗Rₘ` with `uₘ > 0` and `Lₘ, Rₘ` exactly unitary.
///
/// Computed through the KAK form in the magic basis: `M†UM = A D Bᵀ` with
/// real orthogonal `A, B` (found by simultaneously diagonalizing the real
/// and imaginary parts, whose cross products are symmetric for any unitary)
/// and unimodular diagonal `D`. After fixing `det A = det B = 1`, the outer
/// factors conjugate back to local unitaries `V₁⊗V₂`, `W₁⊗W₂` and the core
/// `M D M†` is a combination `Σ_P c_P P⊗P` over the commuting Pauli pairs,
/// giving `uₘ = |c_P|` with both factors exactly unitary.
pub fn unitary_schmidt(gate: &DenseOperator) -> Result<(Vec<f64>, Vec<DenseOperator>, Vec<DenseOperator>)> {
    if gate.rows != 4 || gate.cols != 4 {
        return Err(QknitError::DimMismatch("unitary_schmidt expects a 4×4 operator".into()));
    }
    if !gate.is_unitary(1e-8) {
        return Err(QknitError::InvalidArgument("operator is not unitary".into()));
    }
    let m = magic_basis();
    let um = m.dagger().matmul(gate).matmul(&m);
    let x = nalgebra::DMatrix::<f64>::from_fn(4, 4, |i, j| um.get(i, j).re);
    let y = nalgebra::DMatrix::<f64>::from_fn(4, 4, |i, j| um.get(i, j).im);

    // Real "bidiagonalization": X = Uₓ S Vₓᵀ; the cross-product symmetry of a
    // unitary forces Uₓᵀ Y Vₓ to be block diagonal over equal singular
    // values, with symmetric nonzero blocks.
    let mut svd = x.clone().svd(true, true);
    svd.sort_by_singular_values();
    let ux = svd.u.as_ref().expect("real svd u").clone();
    let vx = svd.v_t.as_ref().expect("real svd v_t").transpose();
    let sv = &svd.singular_values;
    let y2 = ux.transpose() * &y * &vx;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..4 {
        match groups.last_mut() {
            Some(g) if (sv[g[0]] - sv[i]).abs() <= 1e-8 => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut ql = nalgebra::DMatrix::<f64>::identity(4, 4);
    let mut qr = nalgebra::DMatrix::<f64>::identity(4, 4);
    for g in &groups {
        let k = g.len();
        if k == 1 {
            continue;
        }
        let blk = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| y2[(g[i], g[j])]);
        if sv[g[0]] > 1e-8 {
            let sym = (&blk + blk.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(sym);
            for (ci, &gc) in g.iter().enumerate() {
                for (ri, &gr) in g.iter().enumerate() {
                    ql[(gr, gc)] = eig.eigenvectors[(ri, ci)];
                    qr[(gr, gc)] = eig.eigenvectors[(ri, ci)];
                }
            }
        } else {
            let mut bsvd = blk.svd(true, true);
            bsvd.sort_by_singular_values();
            let bu = bsvd.u.as_ref().expect("block svd u");
            let bv = bsvd.v_t.as_ref().expect("block svd v_t").transpose();
            for (ci, &gc) in g.iter().enumerate() {
                for (ri, &gr) in g.iter().enumerate() {
                    ql[(gr, gc)] = bu[(ri, ci)];
                    qr[(gr, gc)] = bv[(ri, ci)];
                }
            }
        }
    }
    let a = &ux * &ql;
    let b = &vx * &qr;
    // Diagonal phases d_j with U_m = A D Bᵀ.
    let mut d: Vec<C> = (0..4)
        .map(|j| {
            let mut z = C::ZERO;
            for p in 0..4 {
                for q in 0..4 {
                    z += cr(a[(p, j)]) * um.get(p, q) * cr(b[(q, j)]);
                }
            }
            z
        })
        .collect();
    let mut a = a;
    let mut b = b;
    if a.determinant() < 0.0 {
        for p in 0..4 {
            a[(p, 0)] = -a[(p, 0)];
        }
        d[0] = -d[0];
    }
    if b.determinant() < 0.0 {
        for p in 0..4 {
            b[(p, 0)] = -b[(p, 0)];
        }
        d[0] = -d[0];
    }
    for z in &d {
        if (z.norm() - 1.0).abs() > 1e-7 {
            return Err(QknitError::NonUnitarySchmidtForm("magic-basis diagonalization failed".into()));
        }
    }
    let na_to = |r: &nalgebra::DMatrix<f64>| DenseOperator::from_fn(4, 4, |i, j| cr(r[(i, j)]));
    let k1 = m.matmul(&na_to(&a)).matmul(&m.dagger());
    let k2 = m.matmul(&na_to(&b.transpose())).matmul(&m.dagger());
    let mut core = DenseOperator::zeros(4, 4);
    for j in 0..4 {
        let mj = DenseOperator::from_fn(4, 1, |i, _| m.get(i, j));
        core = core.add(&mj.matmul(&mj.dagger()).scale(d[j]));
    }
    let (v1, v2) = split_local_unitary(&k1)?;
    let (w1, w2) = split_local_unitary(&k2)?;

    let mut entries: Vec<(f64, DenseOperator, DenseOperator)> = Vec::new();
    for p in 0..4usize {
        let pp = kron(&pauli_1q(p), &pauli_1q(p))?;
        let cp = pp.matmul(&core).trace() * cr(0.25);
        let upm = cp.norm();
        if upm < 1e-10 {
            continue;
        }
        let phase = cp / cr(upm);
        let lfac = v1.matmul(&pauli_1q(p)).matmul(&w1).scale(phase);
        let rfac = v2.matmul(&pauli_1q(p)).matmul(&w2);
        entries.push((upm, lfac, rfac));
    }
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut recon = DenseOperator::zeros(4, 4);
    for (u, l, r) in &entries {
        recon = recon.add(&kron(l, r)?.scale(cr(*u)));
    }
    if recon.max_abs_diff(gate) > 1e-8 {
        return Err(QknitError::NonUnitarySchmidtForm("recombined Schmidt form does not reproduce the gate".into()));
    }
    let (us, ls, rs) = entries.into_iter().fold((Vec::new(), Vec::new(), Vec::new()), |mut acc, (u, l, r)| {
        acc.0.push(u);
        acc.1.push(l);
        acc.2.push(r);
        acc
    });
    Ok((us, ls, rs))
}

/// Optimal local-instrument QPD of an arbitrary two-qubit unitary; 1-norm
/// `2(Σu)²−1` over its operator Schmidt coefficients.
pub fn two_qubit_gate_qpd(gate: &DenseOperator) -> Result<QuasiDecomposition> {
    let (u, l, r) = unitary_schmidt(gate)?;
    let su: f64 = u.iter().sum();
    let mut q = kak_lo_qpd(&u, &l, &r)?;
    q.target_label = "two-qubit-gate".into();
    Ok(q.with_gamma(2.0 * su * su - 1.0))
}

/// Measure-and-prepare QPD of the n-qubit identity wire (time-like cut);
/// 1-norm 4ⁿ. n=1 uses the eight ±½ computational/X/Y-basis terms; n ≥ 2
/// uses the 4ⁿ Pauli terms `ρ ↦ tr[Qρ]Q/2ⁿ` realized as weighted
/// eigenbasis measure-and-prepare instruments.
pub fn wirecut_mpc_qpd(n: usize) -> Result<QuasiDecomposition> {
    if n == 0 || n > 3 {
        return Err(QknitError::SizeCap(format!("wirecut_mpc_qpd supports 1 ≤ n ≤ 3, got {}", n)));
    }
    let dims = SubsystemDims::qubits(n);
    if n == 1 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = basis_state(2, 0);
        let one = basis_state(2, 1);
        let plus = DenseOperator::column(&[cr(s), cr(s)]);
        let minus = DenseOperator::column(&[cr(s), cr(-s)]);
        let iplus = DenseOperator::column(&[cr(s), c(0.0, s)]);
        let iminus = DenseOperator::column(&[cr(s), c(0.0, -s)]);
        // ρ ↦ tr[ρ]|v⟩⟨v| : measure any basis, always prepare |v⟩.
        let prep = |v: &DenseOperator| -> KrausChannel {
            let ops = vec![
                v.matmul(&zero.dagger()),
                v.matmul(&one.dagger()),
            ];
            KrausChannel::new(ops, dims.clone(), dims.clone()).unwrap()
        };
        // ρ ↦ tr[Bρ]|v⟩⟨v| for B = |b₊⟩⟨b₊| − |b₋⟩⟨b₋| : weighted branches.
        let meas_prep = |v: &DenseOperator, bp: &DenseOperator, bm: &DenseOperator| -> WeightedInstrument {
            let kp = KrausChannel::new(vec![v.matmul(&bp.dagger())], dims.clone(), dims.clone()).unwrap();
            let km = KrausChannel::new(vec![v.matmul(&bm.dagger())], dims.clone(), dims.clone()).unwrap();
            WeightedInstrument::new(vec![(kp, 1.0), (km, -1.0)]).unwrap()
        };
        let terms = vec![
            (0.5, WeightedInstrument::deterministic(prep(&zero))),
            (0.5, WeightedInstrument::deterministic(prep(&one))),
            (0.5, meas_prep(&plus, &plus, &minus)),
            (-0.5, meas_prep(&minus, &plus, &minus)),
            (0.5, meas_prep(&iplus, &iplus, &iminus)),
            (-0.5, meas_prep(&iminus, &iplus, &iminus)),
            (0.5, meas_prep(&zero, &zero, &one)),
            (-0.5, meas_prep(&one, &zero, &one)),
        ];
        return Ok(QuasiDecomposition::new(terms, "wirecut-mpc-1").with_gamma(4.0));
    }
    let d = 1usize << n;
    let scale = 1.0 / (d as f64).sqrt();
    let mut terms = Vec::with_capacity(1 << (2 * n));
    for q in 0..(1usize << (2 * n)) {
        let (evals, evecs) = eigh(&pauli_string(n, q));
        let mut branches = Vec::with_capacity(d * d);
        for m in 0..d {
            let em = DenseOperator::from_fn(d, 1, |i, _| evecs.get(i, m));
            for p in 0..d {
                let ep = DenseOperator::from_fn(d, 1, |i, _| evecs.get(i, p));
                let kraus = ep.matmul(&em.dagger()).scale(cr(scale));
                let chan = KrausChannel::new(vec![kraus], dims.clone(), dims.clone())?;
                branches.push((chan, evals[m] * evals[p]));
            }
        }
        terms.push((1.0, WeightedInstrument::new(branches)?));
    }
    Ok(QuasiDecomposition::new(terms, format!("wirecut-mpc-{}", n)).with_gamma((1usize << (2 * n)) as f64))
}

/// Entanglement-breaking QPD of the d-dimensional identity wire:
/// `id = d·E⁺ − (d−1)·E⁻` with measure-then-prepare elements; 1-norm 2d−1.
pub fn wirecut_ebc_qpd(d: usize) -> Result<QuasiDecomposition> {
    if !matches!(d, 2 | 4 | 8) {
        return Err(QknitError::SizeCap(format!("wirecut_ebc_qpd supports d ∈ {{2,4,8}}, got {}", d)));
    }
    let dims = SubsystemDims::new(vec![d]);
    // E⁻: measure |i⟩, prepare a uniformly random other basis state.
    let mut minus_branches = Vec::with_capacity(d * (d - 1));
    let w = 1.0 / ((d - 1) as f64).sqrt();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let kraus = basis_state(d, j).matmul(&basis_state(d, i).dagger()).scale(cr(w));
                minus_branches.push((KrausChannel::new(vec![kraus], dims.clone(), dims.clone())?, 1.0));
            }
        }
    }
    // E⁺: POVM against the σ⁺ phased states, prepare the conjugate-phased
    // partner: Kraus √(d/(2^d−1)) |τⱼ⟩⟨φⱼ*|.
    let nn = (1usize << d) - 1;
    let amp = (d as f64 / nn as f64).sqrt();
    let per = 1.0 / (d as f64).sqrt();
    let mut plus_branches = Vec::with_capacity(nn);
    for j in 1..=nn {
        let mut phi = DenseOperator::zeros(d, 1);
        let mut tau = DenseOperator::zeros(d, 1);
        for k in 0..d {
            let m = (1usize << k) - 1;
            let angle = 2.0 * PI * (j as f64) * (m as f64) / (nn as f64);
            phi = phi.add(&basis_state(d, k).scale(Complex64::from_polar(per, angle)));
            tau = tau.add(&basis_state(d, k).scale(Complex64::from_polar(per, -angle)));
        }
        let kraus = tau.matmul(&phi.conjugate().dagger()).scale(cr(amp));
        plus_branches.push((KrausChannel::new(vec![kraus], dims.clone(), dims.clone())?, 1.0));
    }
    let terms = vec![
        (d as f64, WeightedInstrument::new(plus_branches)?),
        (-((d - 1) as f64), WeightedInstrument::new(minus_branches)?),
    ];
    Ok(QuasiDecomposition::new(terms, format!("wirecut-ebc-{}", d)).with_gamma((2 * d - 1) as f64))
}

/// The d-dimensional SWAP operator.
pub fn swap_operator(d: usize) -> DenseOperator {
    DenseOperator::from_fn(d * d, d * d, |r, c_| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (c_ / d, c_ % d);
        if i == l && k == j {
            C::ONE
        } else {
            C::ZERO
        }
    })
}

/// QPD of the transpose map from the symmetric/antisymmetric projectors:
/// `T = ((d+1)/2)·Λ⁺/tr − ((d−1)/2)·Λ⁻/tr`, both elements CPTP; 1-norm d.
pub fn transpose_qpd(d: usize) -> Result<QuasiDecomposition> {
    if d < 2 {
        return Err(QknitError::InvalidArgument("transpose_qpd needs d ≥ 2".into()));
    }
    let dims = SubsystemDims::new(vec![d]);
    let swap = swap_operator(d);
    let id = DenseOperator::identity(d * d);
    let mut terms = Vec::new();
    for (sign, coeff) in [(1.0, (d as f64 + 1.0) / 2.0), (-1.0, -((d as f64 - 1.0) / 2.0))] {
        let lam = id.add(&swap.scale(cr(sign))).scale(cr(0.5));
        let tr = lam.trace().re;
        let choi = ChoiOperator { matrix: lam.scale(cr(1.0 / tr)), dims_in: dims.clone(), dims_out: dims.clone() };
        let chan = choi_to_kraus(&choi)?;
        terms.push((coeff, WeightedInstrument::deterministic(chan)));
    }
    Ok(QuasiDecomposition::new(terms, format!("transpose-{}", d)).with_gamma(d as f64))
}

/// The universal NOT: `UNOT = −½·id + ½·X + ½·Y + ½·Z`; 1-norm 2.
pub fn unot_qpd() -> QuasiDecomposition {
    let dims = SubsystemDims::qubits(1);
    let terms = vec![
        unitary_term(-0.5, &pauli_1q(0), &dims),
        unitary_term(0.5, &pauli_1q(1), &dims),
        unitary_term(0.5, &pauli_1q(2), &dims),
        unitary_term(0.5, &pauli_1q(3), &dims),
    ];
    QuasiDecomposition::new(terms, "UNOT").with_gamma(2.0)
}

/// Probabilistic error cancellation toy model: the noisy Pauli basis
/// `{N_ε, N_ε∘X, N_ε∘Y, N_ε∘Z}` and the exact QPD of `N_ε⁻¹` over it.
///
/// With δ = ε(2−ε) (so 1−δ = (1−ε)²):
/// `N_ε⁻¹ = ((4−δ)/(4(1−δ)))·N_ε − (δ/(4(1−δ)))·(N_ε∘X + N_ε∘Y + N_ε∘Z)`,
/// giving γ = (1+δ/2)/(1−δ) ≈ 1+3ε.
pub fn pec_basis_and_inverse(eps: f64) -> Result<(Vec<KrausChannel>, QuasiDecomposition)> {
    if !(0.0..0.5).contains(&eps) {
        return Err(QknitError::NotInvertible(format!("noise rate {} outside [0, 1/2)", eps)));
    }
    let dims = SubsystemDims::qubits(1);
    let noise = depolarizing(eps);
    let mut basis = Vec::with_capacity(4);
    for q in 0..4 {
        let pauli = KrausChannel::unitary(&pauli_1q(q), dims.clone())?;
        basis.push(pauli.then(&noise)?);
    }
    let delta = eps * (2.0 - eps);
    let a0 = (4.0 - delta) / (4.0 * (1.0 - delta));
    let ak = -delta / (4.0 * (1.0 - delta));
    let terms: Vec<(f64, WeightedInstrument)> = basis
        .iter()
        .enumerate()
        .map(|(q, chan)| {
            (if q == 0 { a0 } else { ak }, WeightedInstrument::deterministic(chan.clone()))
        })
        .collect();
    let gamma = (1.0 + delta / 2.0) / (1.0 - delta);
    Ok((basis, QuasiDecomposition::new(terms, "N_eps^-1").with_gamma(gamma)))
}

/// Choi resource state of a gate, subsystems ordered
/// `(A_in, A_out, B_in, B_out)` for an (n_a | n_b) qubit split.
pub fn choi_state_grouped(gate: &DenseOperator, n_a: usize, n_b: usize) -> Result<DenseOperator> {
    let n = n_a + n_b;
    let d = 1usize << n;
    if gate.rows != d || gate.cols != d {
        return Err(QknitError::DimMismatch("gate size does not match qubit split".into()));
    }
    let mut v = DenseOperator::zeros(d * d, 1);
    let scale = cr(1.0 / (d as f64).sqrt());
    for i in 0..d {
        for k in 0..d {
            let a = gate.get(k, i);
            if a != C::ZERO {
                v.set(i * d + k, 0, a * scale);
            }
        }
    }
    // Qubit order is [in(0..n), out(0..n)]; regroup to A_in A_out B_in B_out.
    let dims = SubsystemDims::qubits(2 * n);
    let mut perm = Vec::with_capacity(2 * n);
    perm.extend(0..n_a);
    perm.extend(n..n + n_a);
    perm.extend(n_a..n);
    perm.extend(n + n_a..2 * n);
    permute_systems(&v, &dims, &perm)
}

/// Gate-teleportation cut of a Clifford gate: extent `2(Σu)²−1` of its Choi
/// state across the (A_in A_out | B_in B_out) bipartition, and the
/// separable QPD of that resource state.
pub fn clifford_gate_cut(gate: &DenseOperator, n_a: usize, n_b: usize) -> Result<(f64, QuasiDecomposition)> {
    if n_a + n_b > 3 {
        return Err(QknitError::SizeCap(format!("clifford_gate_cut supports n+m ≤ 3, got {}", n_a + n_b)));
    }
    if !gate.is_unitary(1e-8) {
        return Err(QknitError::InvalidArgument("gate is not unitary".into()));
    }
    let v = choi_state_grouped(gate, n_a, n_b)?;
    let dims = SubsystemDims::new(vec![1 << (2 * n_a), 1 << (2 * n_b)]);
    let sd = schmidt(&v, &dims)?;
    let su: f64 = sd.coeffs.iter().sum();
    let extent = 2.0 * su * su - 1.0;
    let qpd = pure_state_sep_qpd_with_bases(&sd.coeffs, &sd.left, &sd.right)?;
    Ok((extent, qpd.with_gamma(extent)))
}

/// Controlled-rotation gates of the QFT circuit on n qubits, as
/// `(m, control, target)` with the control m−1 positions below the target.
fn qft_gates(n: usize) -> Vec<(usize, usize, usize)> {
    let mut gates = Vec::new();
    for i in 0..n {
        for m in 2..=(n - i) {
            gates.push((m, i + m - 1, i));
        }
    }
    gates
}

/// Extent of the controlled rotation CR_m (angle 2π/2^m): 1 + 2sin(π/2^m).
pub fn cr_m_extent(m: usize) -> f64 {
    1.0 + 2.0 * (PI / (1u64 << m) as f64).sin()
}

/// Upper bound on the sampling 1-norm of cutting the n-qubit QFT between
/// qubits `partition−1` and `partition`: the product of cut controlled-
/// rotation extents, with crossing counts taken from the generated circuit.
pub fn qft_cut_bound(n: usize, partition: usize) -> Result<f64> {
    if !(1..=64).contains(&n) || partition == 0 || partition >= n {
        return Err(QknitError::InvalidArgument(format!("need 1 ≤ partition < n ≤ 64, got n={}, partition={}", n, partition)));
    }
    let mut bound = 1.0;
    for (m, control, target) in qft_gates(n) {
        let (lo, hi) = (target.min(control), target.max(control));
        if lo < partition && partition <= hi {
            bound *= cr_m_extent(m);
        }
    }
    Ok(bound)
}

/// The n→∞ limit of the deep-cut QFT bound: Π_{m≥2} (1+2sin(π/2^m))^{m−1}.
pub fn qft_cut_bound_limit() -> f64 {
    let mut acc = 1.0;
    for m in 2..=60usize {
        acc *= cr_m_extent(m).powi((m - 1) as i32);
    }
    acc
}

/// The raw crossing-count product Π_{k≥1} (1+2sin(2π/2^{k+1}))^k.
pub fn qft_crossing_product() -> f64 {
    let mut acc = 1.0;
    for k in 1..=60usize {
        let factor = 1.0 + 2.0 * (2.0 * PI / (1u64 << (k + 1)) as f64).sin();
        acc *= factor.powi(k as i32);
    }
    acc
}

/// The 16 single-qubit Clifford weighted instruments spanning the
/// Hermitian-preserving superoperators; Choi operators are pairwise
/// orthogonal with Gram diagonal (¼ for the four unitary rows, ⅛ for the
/// rest) under `⟨A,B⟩ = tr[A†B]/4`.
pub fn modified_endo_basis() -> Vec<WeightedInstrument> {
    let dims = SubsystemDims::qubits(1);
    let chan = |k: DenseOperator| KrausChannel::new(vec![k], dims.clone(), dims.clone()).unwrap();
    let mut elems = Vec::with_capacity(16);
    // Rows 1–4: Pauli unitary channels.
    for q in 0..4 {
        elems.push(WeightedInstrument::deterministic(chan(pauli_1q(q))));
    }
    let s = cr(std::f64::consts::FRAC_1_SQRT_2);
    // Rows 5–7: ±π/2 rotations R_{±P} = (1 ± iP)/√2, weights ±1.
    for p in 1..4 {
        let rp = pauli_1q(0).add(&pauli_1q(p).scale(c(0.0, 1.0))).scale(s);
        let rm = pauli_1q(0).sub(&pauli_1q(p).scale(c(0.0, 1.0))).scale(s);
        elems.push(
            WeightedInstrument::new(vec![
                (chan(rp.scale(s)), 1.0),
                (chan(rm.scale(s)), -1.0),
            ])
            .unwrap(),
        );
    }
    // Rows 8–10: axis-swap rotations (Q₁±Q₂)/√2 for (Y,Z), (Z,X), (X,Y).
    for (q1, q2) in [(2, 3), (3, 1), (1, 2)] {
        let rp = pauli_1q(q1).add(&pauli_1q(q2)).scale(s);
        let rm = pauli_1q(q1).sub(&pauli_1q(q2)).scale(s);
        elems.push(
            WeightedInstrument::new(vec![
                (chan(rp.scale(s)), 1.0),
                (chan(rm.scale(s)), -1.0),
            ])
            .unwrap(),
        );
    }
    // Rows 11–13: projective measurements π_{±P} = (1 ± P)/2, weights ±1.
    for p in 1..4 {
        let pp = pauli_1q(0).add(&pauli_1q(p)).scale(cr(0.5));
        let pm = pauli_1q(0).sub(&pauli_1q(p)).scale(cr(0.5));
        elems.push(WeightedInstrument::new(vec![(chan(pp), 1.0), (chan(pm), -1.0)]).unwrap());
    }
    // Rows 14–16: skew projections (Q₁+iQ₂)/2 vs (Q₂+iQ₁)/2, weights ±1.
    for (q1, q2) in [(2, 3), (3, 1), (1, 2)] {
        let kp = pauli_1q(q1).add(&pauli_1q(q2).scale(c(0.0, 1.0))).scale(cr(0.5));
        let km = pauli_1q(q2).add(&pauli_1q(q1).scale(c(0.0, 1.0))).scale(cr(0.5));
        elems.push(WeightedInstrument::new(vec![(chan(kp), 1.0), (chan(km), -1.0)]).unwrap());
    }
    elems
}

// Two-qubit and three-qubit gate constructors shared by tests, the engine,
// and the CLI gate table.

/// Controlled-phase gate diag(1,1,1,e^{iθ}).
pub fn cr_gate(theta: f64) -> DenseOperator {
    let mut m = DenseOperator::identity(4);
    m.set(3, 3, Complex64::from_polar(1.0, theta));
    m
}

/// Two-qubit Pauli rotation exp(−i(θ/2)·P⊗P) for P ∈ {X, Y, Z}.
pub fn rotation_pp(pauli: usize, theta: f64) -> DenseOperator {
    assert!((1..=3).contains(&pauli));
    let pp = kron(&pauli_1q(pauli), &pauli_1q(pauli)).unwrap();
    let cos = DenseOperator::identity(4).scale(cr((theta / 2.0).cos()));
    cos.add(&pp.scale(c(0.0, -(theta / 2.0).sin())))
}

/// Toffoli gate (controls = qubits 0,1; target = qubit 2).
pub fn toffoli() -> DenseOperator {
    let mut m = DenseOperator::identity(8);
    m.set(6, 6, C::ZERO);
    m.set(7, 7, C::ZERO);
    m.set(6, 7, C::ONE);
    m.set(7, 6, C::ONE);
    m
}

/// Single-qubit Z rotation diag(e^{−iθ/2}, e^{iθ/2}).
pub fn rz_gate(theta: f64) -> DenseOperator {
    DenseOperator::from_rows(&[
        &[Complex64::from_polar(1.0, -theta / 2.0), C::ZERO],
        &[C::ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{choi_of, is_ppt, ptm_of};
    use crate::tensor::{cnot, hadamard, iswap_gate, max_entangled, projector, swap_gate, trace_norm};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn residual(q: &QuasiDecomposition, target: &DenseOperator) -> f64 {
        trace_norm(&q.reconstruct().matrix.sub(target))
    }

    fn unitary_choi(u: &DenseOperator) -> DenseOperator {
        let n = (u.rows.trailing_zeros()) as usize;
        choi_of(&KrausChannel::unitary(u, SubsystemDims::qubits(n)).unwrap()).matrix
    }

    fn random_unitary(rng: &mut StdRng, d: usize) -> DenseOperator {
        let g = DenseOperator::from_fn(d, d, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        DenseOperator::from_na(&g.to_na().qr().q())
    }

    #[test]
    fn t_gate_qpd_checks() {
        let q = t_gate_qpd();
        assert!((q.one_norm() - std::f64::consts::SQRT_2).abs() < 1e-12);
        let target = unitary_choi(&crate::tensor::t_gate());
        assert!(residual(&q, &target) < 1e-10);
        let report = q.validate(&q.reconstruct(), 1e-9);
        assert!((report.signed_sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn magic_state_qpd_checks() {
        let q = magic_state_qpd();
        assert!((q.one_norm() - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(residual(&q, &projector(&magic_state())) < 1e-10);
        for (_, inst) in &q.terms {
            for (chan, _) in &inst.branches {
                assert_eq!(chan.kraus_ops.len(), 1);
                assert_eq!(chan.kraus_ops[0].cols, 1);
                assert!((chan.kraus_ops[0].frobenius_norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_state_extents_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = pure_state_extents(&[s, s]).unwrap();
        assert!((bell.gamma - 3.0).abs() < 1e-12);
        assert!((bell.gamma_reg - 2.0).abs() < 1e-12);
        assert!((bell.gamma_sreg - 2.0).abs() < 1e-12);

        let prod = pure_state_extents(&[1.0, 0.0]).unwrap();
        assert!((prod.gamma - 1.0).abs() < 1e-12);
        assert!((prod.gamma_reg - 1.0).abs() < 1e-12);
        assert!((prod.gamma_sreg - 1.0).abs() < 1e-12);

        let u = [1.0 / 3.0, 2.0 * 2.0f64.sqrt() / 3.0];
        let t = pure_state_extents(&u).unwrap();
        assert!(t.gamma >= t.gamma_reg && t.gamma_reg > t.gamma_sreg);
        let su = u[0] + u[1];
        assert!((t.gamma_reg - su * su).abs() < 1e-12);
    }

    #[test]
    fn pure_state_sep_qpd_anchors() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = pure_state_sep_qpd(&[s, s]).unwrap();
        assert!((bell.one_norm() - 3.0).abs() < 1e-12);
        assert!(residual(&bell, &projector(&max_entangled(2))) < 1e-8);

        let single = pure_state_sep_qpd(&[1.0]).unwrap();
        assert_eq!(single.terms.len(), 1);
        assert!((single.one_norm() - 1.0).abs() < 1e-15);

        let u4 = [0.5; 4];
        let q4 = pure_state_sep_qpd(&u4).unwrap();
        assert!((q4.one_norm() - 7.0).abs() < 1e-12);
        assert!(residual(&q4, &projector(&max_entangled(4))) < 1e-8);

        assert!(matches!(
            pure_state_sep_qpd(&[0.5f64.sqrt().sqrt() * 0.6; 5]),
            Err(QknitError::InvalidArgument(_)) | Err(QknitError::SizeCap(_))
        ));
    }

    #[test]
    fn pure_state_sep_qpd_random() {
        let mut rng = StdRng::seed_from_u64(21);
        for trial in 0..12 {
            let r = 2 + trial % 3;
            let mut u: Vec<f64> = (0..r).map(|_| rng.gen::<f64>() + 0.05).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in u.iter_mut() {
                *x /= norm;
            }
            let q = pure_state_sep_qpd(&u).unwrap();
            let su: f64 = u.iter().sum();
            assert!((q.one_norm() - (2.0 * su * su - 1.0)).abs() < 1e-10);
            let mut psi = DenseOperator::zeros(r * r, 1);
            for (k, &uk) in u.iter().enumerate() {
                psi.set(k * r + k, 0, cr(uk));
            }
            assert!(residual(&q, &projector(&psi)) < 1e-8);
            // σ⁺ (the positively weighted part) is PSD with trace 1.
            let mut sigma_plus = DenseOperator::zeros(r * r, r * r);
            let mut total = 0.0;
            for (a, inst) in &q.terms {
                if *a > 0.0 {
                    let st = &inst.branches[0].0.kraus_ops[0];
                    sigma_plus = sigma_plus.add(&projector(st).scale(cr(*a)));
                    total += a;
                }
            }
            sigma_plus = sigma_plus.scale(cr(1.0 / total));
            assert!(sigma_plus.is_psd(1e-9));
            assert!((sigma_plus.trace().re - 1.0).abs() < 1e-9);
            // σ⁺ of a separable construction must be PPT.
            let dims = SubsystemDims::new(vec![r, r]);
            assert!(is_ppt(&sigma_plus, &dims, 1, 1e-9).unwrap());
        }
    }

    fn cr_z(theta: f64) -> DenseOperator {
        // |0⟩⟨0|⊗I + |1⟩⟨1|⊗R_Z(θ)
        let mut m = DenseOperator::identity(4);
        m.set(2, 2, Complex64::from_polar(1.0, -theta / 2.0));
        m.set(3, 3, Complex64::from_polar(1.0, theta / 2.0));
        m
    }

    #[test]
    fn kak_lo_qpd_controlled_rotation() {
        for &theta in &[0.3, 1.1, PI] {
            // CR_Z(θ) = (I⊗R_Z(θ/2))·(cos(θ/4)·I⊗I + i·sin(θ/4)·Z⊗Z)
            let u = [
                (theta / 4.0).cos(),
                (theta / 4.0).sin(),
            ];
            let rz = rz_gate(theta / 2.0);
            let l = [pauli_1q(0), pauli_1q(3)];
            let r = [rz.clone(), rz.matmul(&pauli_1q(3)).scale(c(0.0, 1.0))];
            let q = kak_lo_qpd(&u, &l, &r).unwrap();
            let want = 1.0 + 2.0 * (theta / 2.0).sin();
            assert!((q.one_norm() - want).abs() < 1e-10, "theta={}", theta);
            assert!(residual(&q, &unitary_choi(&cr_z(theta))) < 1e-8);
            // Branch structure: every element's unweighted branch sum is TP.
            for (_, inst) in &q.terms {
                assert!(inst.is_tp(1e-9));
            }
        }
    }

    #[test]
    fn kak_lo_qpd_rejects_nonunitary() {
        let bad = pauli_1q(0).scale(cr(0.5));
        let err = kak_lo_qpd(
            &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            &[bad, pauli_1q(3)],
            &[pauli_1q(0), pauli_1q(1)],
        );
        assert!(matches!(err, Err(QknitError::NonUnitarySchmidtForm(_))));
    }

    #[test]
    fn two_qubit_gate_extents() {
        let cases: Vec<(DenseOperator, f64)> = vec![
            (cnot(), 3.0),
            (swap_gate(), 7.0),
            (iswap_gate(), 7.0),
            (DenseOperator::identity(4), 1.0),
            (cr_gate(0.7), 1.0 + 2.0 * (0.35f64).sin()),
            (rotation_pp(3, 0.9), 1.0 + 2.0 * (0.9f64).sin()),
            (rotation_pp(1, 2.0), 1.0 + 2.0 * (2.0f64).sin().abs()),
        ];
        for (gate, want) in cases {
            let q = two_qubit_gate_qpd(&gate).unwrap();
            assert!((q.one_norm() - want).abs() < 1e-8, "gate extent {} vs {}", q.one_norm(), want);
            assert!(residual(&q, &unitary_choi(&gate)) < 1e-8);
        }
    }

    #[test]
    fn two_qubit_gate_qpd_random_products_of_locals() {
        // Local ⊗ local gates have extent 1.
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..5 {
            let a = random_unitary(&mut rng, 2);
            let b = random_unitary(&mut rng, 2);
            let gate = kron(&a, &b).unwrap();
            let q = two_qubit_gate_qpd(&gate).unwrap();
            assert!((q.one_norm() - 1.0).abs() < 1e-8);
            assert!(residual(&q, &unitary_choi(&gate)) < 1e-8);
        }
    }

    #[test]
    fn two_qubit_gate_qpd_random_entangling() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..5 {
            // Random circuit of locals and CNOTs: still a genuine unitary.
            let mut gate = kron(&random_unitary(&mut rng, 2), &random_unitary(&mut rng, 2)).unwrap();
            gate = cnot().matmul(&gate);
            gate = kron(&random_unitary(&mut rng, 2), &random_unitary(&mut rng, 2)).unwrap().matmul(&gate);
            let q = two_qubit_gate_qpd(&gate).unwrap();
            assert!(residual(&q, &unitary_choi(&gate)) < 1e-8);
            assert!(q.one_norm() <= 7.0 + 1e-8);
            assert!(q.one_norm() >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn wirecut_mpc_checks() {
        let q1 = wirecut_mpc_qpd(1).unwrap();
        assert!((q1.one_norm() - 4.0).abs() < 1e-12);
        assert!(residual(&q1, &projector(&max_entangled(2))) < 1e-10);
        for (_, inst) in &q1.terms {
            assert!(inst.is_tp(1e-9));
        }

        let q2 = wirecut_mpc_qpd(2).unwrap();
        assert!((q2.one_norm() - 16.0).abs() < 1e-12);
        assert!(residual(&q2, &projector(&max_entangled(4))) < 1e-9);
        for (_, inst) in &q2.terms {
            assert!(inst.is_tp(1e-9));
        }

        let q3 = wirecut_mpc_qpd(3).unwrap();
        assert!((q3.one_norm() - 64.0).abs() < 1e-12);
        for (_, inst) in &q3.terms {
            assert!(inst.is_tp(1e-9));
        }

        assert!(matches!(wirecut_mpc_qpd(4), Err(QknitError::SizeCap(_))));
    }

    #[test]
    fn wirecut_ebc_checks() {
        for &d in &[2usize, 4, 8] {
            let q = wirecut_ebc_qpd(d).unwrap();
            assert!((q.one_norm() - (2 * d - 1) as f64).abs() < 1e-12);
            for (_, inst) in &q.terms {
                assert!(inst.is_tp(1e-9), "d={}", d);
            }
            if d <= 4 {
                assert!(residual(&q, &projector(&max_entangled(d))) < 1e-8, "d={}", d);
            }
            // Measure-and-prepare structure: every branch Kraus is rank 1.
            for (_, inst) in &q.terms {
                for (chan, _) in &inst.branches {
                    assert_eq!(chan.kraus_ops.len(), 1);
                    let (s, _, _) = crate::tensor::svd(&chan.kraus_ops[0]);
                    assert!(s.iter().filter(|&&x| x > 1e-9).count() == 1);
                }
            }
        }
        assert!(matches!(wirecut_ebc_qpd(3), Err(QknitError::SizeCap(_))));
    }

    #[test]
    fn transpose_qpd_checks() {
        for d in 2..=4usize {
            let q = transpose_qpd(d).unwrap();
            assert!((q.one_norm() - d as f64).abs() < 1e-10);
            let target = swap_operator(d).scale(cr(1.0 / d as f64));
            assert!(residual(&q, &target) < 1e-8);
            for (_, inst) in &q.terms {
                let chan = &inst.branches[0].0;
                assert!(chan.is_tp(1e-9));
                assert!(choi_of(chan).matrix.is_psd(1e-9));
            }
        }
    }

    #[test]
    fn unot_qpd_checks() {
        let q = unot_qpd();
        assert!((q.one_norm() - 2.0).abs() < 1e-15);
        // Weighted channel application: |0⟩⟨0| maps to its Bloch antipode.
        let rho = projector(&basis_state(2, 0));
        let mut out = DenseOperator::zeros(2, 2);
        for (a, inst) in &q.terms {
            out = out.add(&inst.branches[0].0.apply(&rho).unwrap().scale(cr(*a)));
        }
        assert!(out.max_abs_diff(&projector(&basis_state(2, 1))) < 1e-12);
        // PTM of the reconstructed map is diag(1,−1,−1,−1).
        let mut kraus_terms = Vec::new();
        for (a, inst) in &q.terms {
            kraus_terms.push((a, inst));
        }
        let ptm_diag: Vec<f64> = (0..4)
            .map(|i| {
                let qi = pauli_1q(i);
                let mut acc = 0.0;
                for (a, inst) in &kraus_terms {
                    let img = inst.branches[0].0.apply(&qi).unwrap();
                    acc += **a * (pauli_1q(i).matmul(&img)).trace().re / 2.0;
                }
                acc
            })
            .collect();
        for (i, &v) in ptm_diag.iter().enumerate() {
            let want = if i == 0 { 1.0 } else { -1.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pec_checks() {
        for &eps in &[0.0, 0.001, 0.01, 0.05, 0.1] {
            let (basis, q) = pec_basis_and_inverse(eps).unwrap();
            assert_eq!(basis.len(), 4);
            let delta = eps * (2.0 - eps);
            let want = (1.0 + delta / 2.0) / (1.0 - delta);
            assert!((q.one_norm() - want).abs() < 1e-10, "eps={}", eps);
            // Composing the inverse after the noise yields the identity.
            let noisy = QuasiDecomposition::deterministic(depolarizing(eps), "N");
            let comp = QuasiDecomposition::compose(&q, &noisy, &[0]).unwrap();
            assert!(residual(&comp, &projector(&max_entangled(2))) < 1e-8, "eps={}", eps);
        }
        // First-order behavior γ ≈ 1+3ε.
        let (_, q) = pec_basis_and_inverse(1e-4).unwrap();
        assert!((q.one_norm() - (1.0 + 3.0e-4)).abs() < 1e-6);
        assert!(matches!(pec_basis_and_inverse(0.5), Err(QknitError::NotInvertible(_))));
        assert!(matches!(pec_basis_and_inverse(-0.1), Err(QknitError::NotInvertible(_))));
    }

    #[test]
    fn clifford_gate_cut_extents() {
        let (g_cnot, q_cnot) = clifford_gate_cut(&cnot(), 1, 1).unwrap();
        assert!((g_cnot - 3.0).abs() < 1e-10);
        let target = projector(&choi_state_grouped(&cnot(), 1, 1).unwrap());
        assert!(residual(&q_cnot, &target) < 1e-8);

        let (g_swap, _) = clifford_gate_cut(&swap_gate(), 1, 1).unwrap();
        assert!((g_swap - 7.0).abs() < 1e-8);

        let (g_tof, _) = clifford_gate_cut(&toffoli(), 2, 1).unwrap();
        assert!((g_tof - (1.0 + 3.0f64.sqrt())).abs() < 1e-8);

        // Consistency with the gate QPD for two-qubit gates.
        let q_gate = two_qubit_gate_qpd(&cnot()).unwrap();
        assert!((q_gate.one_norm() - g_cnot).abs() < 1e-10);

        assert!(matches!(
            clifford_gate_cut(&DenseOperator::identity(16), 2, 2),
            Err(QknitError::SizeCap(_))
        ));
    }

    #[test]
    fn toffoli_choi_schmidt() {
        let v = choi_state_grouped(&toffoli(), 2, 1).unwrap();
        let dims = SubsystemDims::new(vec![16, 4]);
        let sd = schmidt(&v, &dims).unwrap();
        assert_eq!(sd.coeffs.len(), 2);
        assert!((sd.coeffs[0] - 3.0f64.sqrt() / 2.0).abs() < 1e-10);
        assert!((sd.coeffs[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn qft_bounds() {
        assert!((qft_cut_bound(2, 1).unwrap() - (1.0 + std::f64::consts::SQRT_2)).abs() < 1e-12);
        // Monotone in n at a fixed deep cut and bounded by the limit.
        let limit = qft_cut_bound_limit();
        assert!((limit - 130.0331351951).abs() < 1e-6 * limit);
        let mut prev = 1.0;
        for n in 2..=24usize {
            let b = qft_cut_bound(n, n / 2).unwrap();
            assert!(b >= prev - 1e-12);
            assert!(b <= limit * (1.0 + 1e-12));
            prev = b;
        }
        let lit = qft_crossing_product();
        assert!((lit - 3343.5851045).abs() < 0.01 * lit);
        assert!(lit < (4.0 * PI).exp());
        assert!(matches!(qft_cut_bound(2, 2), Err(QknitError::InvalidArgument(_))));
    }

    #[test]
    fn modified_endo_basis_checks() {
        let elems = modified_endo_basis();
        assert_eq!(elems.len(), 16);
        for inst in &elems {
            assert!(inst.is_tp(1e-9));
        }
        for q in 0..4 {
            assert_eq!(elems[q].branches.len(), 1);
            assert!(elems[q].branches[0].0.kraus_ops[0].max_abs_diff(&pauli_1q(q)) < 1e-15);
        }
        // Gram matrix under tr[A†B]/4: diagonal, min eigenvalue 1/8.
        let chois: Vec<DenseOperator> = elems
            .iter()
            .map(|e| crate::channels::reconstruct_superop(e).matrix)
            .collect();
        for i in 0..16 {
            for j in 0..16 {
                let g = chois[i].hs_inner(&chois[j]).re / 4.0;
                if i == j {
                    let want = if i < 4 { 0.25 } else { 0.125 };
                    assert!((g - want).abs() < 1e-10, "diag {} = {}", i, g);
                } else {
                    assert!(g.abs() < 1e-10, "offdiag ({},{}) = {}", i, j, g);
                }
            }
        }
        // Row 13 realizes ρ ↦ ⟨0|ρ|0⟩|0⟩⟨0| − ⟨1|ρ|1⟩|1⟩⟨1|.
        let m13 = &elems[12];
        let rho = DenseOperator::from_rows(&[
            &[cr(0.7), c(0.1, 0.2)],
            &[c(0.1, -0.2), cr(0.3)],
        ]);
        let out = m13.apply_weighted(&rho).unwrap();
        let mut want = DenseOperator::zeros(2, 2);
        want.set(0, 0, cr(0.7));
        want.set(1, 1, cr(-0.3));
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn ptm_of_reconstructed_unot_matches() {
        // Cross-check unot against the channels module PTM path using the
        // Kraus mixture with signs folded into a direct superoperator sum.
        let q = unot_qpd();
        let choi = q.reconstruct();
        assert!(choi.matrix.is_hermitian(1e-12));
        let hadamard_sanity = ptm_of(&KrausChannel::unitary(&hadamard(), SubsystemDims::qubits(1)).unwrap()).unwrap();
        assert!((hadamard_sanity.get(1, 3) - 1.0).abs() < 1e-12);
    }
}
