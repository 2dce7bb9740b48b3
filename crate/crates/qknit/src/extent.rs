//! Quasiprobability extents over finite decomposition sets: the LP
//! formulation, the Clifford/stabilizer enumerations it runs over, and the
//! Hoeffding shot calculator.

use std::collections::HashMap;

use crate::channels::{reconstruct_superop, ChoiOperator, KrausChannel, WeightedInstrument};
use crate::simplex::{self, SimplexStatus};
use crate::tensor::{basis_state, cnot, hadamard, s_gate, DenseOperator, SubsystemDims};
use crate::{QknitError, Result};

/// A finite set S of implementable elements over which extents are
/// minimized.
#[derive(Debug, Clone)]
pub struct DecompositionSet {
    pub elements: Vec<WeightedInstrument>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LPStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LPResult {
    pub gamma: f64,
    pub coefficients: Vec<f64>,
    pub status: LPStatus,
}

/// Minimal 1-norm of coefficients `a` with `target = Σᵢ aᵢ Fᵢ` over the set,
/// as an LP in the split variables `a = a⁺ − a⁻`.
pub fn lp_extent(target: &ChoiOperator, set: &DecompositionSet, tol: f64) -> Result<LPResult> {
    if set.elements.is_empty() {
        return Err(QknitError::InvalidArgument("empty decomposition set".into()));
    }
    let vecs: Vec<Vec<f64>> = set
        .elements
        .iter()
        .map(|e| {
            let m = reconstruct_superop(e).matrix;
            if m.rows != target.matrix.rows {
                return Err(QknitError::DimMismatch("set element dims do not match target".into()));
            }
            let mut v = Vec::with_capacity(2 * m.entries.len());
            v.extend(m.entries.iter().map(|z| z.re));
            v.extend(m.entries.iter().map(|z| z.im));
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut tvec = Vec::with_capacity(2 * target.matrix.entries.len());
    tvec.extend(target.matrix.entries.iter().map(|z| z.re));
    tvec.extend(target.matrix.entries.iter().map(|z| z.im));

    let n_rows = tvec.len();
    let n_elems = vecs.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for r in 0..n_rows {
        let norm: f64 = vecs.iter().map(|v| v[r] * v[r]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            if tvec[r].abs() > tol.max(1e-9) {
                return Ok(LPResult { gamma: f64::NAN, coefficients: vec![0.0; n_elems], status: LPStatus::Infeasible });
            }
            continue;
        }
        let mut row = Vec::with_capacity(2 * n_elems);
        for v in &vecs {
            row.push(v[r]);
        }
        for v in &vecs {
            row.push(-v[r]);
        }
        rows.push(row);
        rhs.push(tvec[r]);
    }
    let cost = vec![1.0; 2 * n_elems];
    let sol = simplex::solve(&rows, &rhs, &cost)?;
    if sol.status == SimplexStatus::Infeasible {
        return Ok(LPResult { gamma: f64::NAN, coefficients: vec![0.0; n_elems], status: LPStatus::Infeasible });
    }
    let coefficients: Vec<f64> = (0..n_elems).map(|i| sol.x[i] - sol.x[n_elems + i]).collect();
    Ok(LPResult { gamma: sol.objective, coefficients, status: LPStatus::Optimal })
}

fn phase_fingerprint(m: &DenseOperator) -> String {
    // Canonical global phase: make the first entry of significant magnitude
    // real positive, then round.
    let mut phase = None;
    for z in &m.entries {
        if z.norm() > 1e-8 {
            phase = Some(z.conj() / z.norm());
            break;
        }
    }
    let p = phase.unwrap_or(num_complex::Complex64::ONE);
    let mut s = String::with_capacity(m.entries.len() * 20);
    for z in &m.entries {
        let w = z * p;
        s.push_str(&format!("{:.9},{:.9};", w.re + 0.0, w.im + 0.0));
    }
    s
}

/// Enumerate the 24 single-qubit Clifford unitaries (up to phase) by
/// generator closure over {H, S}.
pub fn clifford_unitaries_1q() -> Vec<DenseOperator> {
    let gens = [hadamard(), s_gate()];
    let mut seen: HashMap<String, DenseOperator> = HashMap::new();
    let id = DenseOperator::identity(2);
    let mut frontier = vec![id.clone()];
    seen.insert(phase_fingerprint(&id), id);
    while let Some(u) = frontier.pop() {
        for g in &gens {
            let next = g.matmul(&u);
            let key = phase_fingerprint(&next);
            if !seen.contains_key(&key) {
                seen.insert(key, next.clone());
                frontier.push(next);
            }
        }
    }
    let mut out: Vec<(String, DenseOperator)> = seen.into_iter().collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, u)| u).collect()
}

/// The 24 single-qubit Clifford channels as a decomposition set.
pub fn clifford_channels_1q() -> DecompositionSet {
    let dims = SubsystemDims::qubits(1);
    let elements = clifford_unitaries_1q()
        .into_iter()
        .map(|u| WeightedInstrument::deterministic(KrausChannel::unitary(&u, dims.clone()).unwrap()))
        .collect();
    DecompositionSet { elements, label: "clifford-1q".into() }
}

fn projector_fingerprint(v: &DenseOperator) -> String {
    let mut s = String::with_capacity(v.rows * v.rows * 20);
    for i in 0..v.rows {
        for j in 0..v.rows {
            let z = v.get(i, 0) * v.get(j, 0).conj();
            s.push_str(&format!("{:.9},{:.9};", z.re + 0.0, z.im + 0.0));
        }
    }
    s
}

/// All pure n-qubit stabilizer states (6 for n=1, 60 for n=2) as
/// state-preparation elements.
pub fn stabilizer_states(n: usize) -> Result<DecompositionSet> {
    if !(1..=2).contains(&n) {
        return Err(QknitError::SizeCap(format!("stabilizer_states supports n ∈ {{1,2}}, got {}", n)));
    }
    let d = 1usize << n;
    // One- and two-qubit Clifford generators acting on the full register.
    let mut gens: Vec<DenseOperator> = Vec::new();
    for q in 0..n {
        for g in [hadamard(), s_gate()] {
            let mut op = DenseOperator::identity(1);
            for slot in 0..n {
                let factor = if slot == q { g.clone() } else { DenseOperator::identity(2) };
                op = crate::tensor::kron(&op, &factor)?;
            }
            gens.push(op);
        }
    }
    if n == 2 {
        gens.push(cnot());
        let dims = SubsystemDims::qubits(2);
        gens.push(crate::tensor::permute_systems(
            &crate::tensor::permute_systems(&cnot(), &dims, &[1, 0])?,
            &dims,
            &[0, 1],
        )?);
    }
    let start = basis_state(d, 0);
    let mut seen: HashMap<String, DenseOperator> = HashMap::new();
    seen.insert(projector_fingerprint(&start), start.clone());
    let mut frontier = vec![start];
    while let Some(v) = frontier.pop() {
        for g in &gens {
            let next = g.matmul(&v);
            let key = projector_fingerprint(&next);
            if !seen.contains_key(&key) {
                seen.insert(key, next.clone());
                frontier.push(next);
            }
        }
    }
    let mut states: Vec<(String, DenseOperator)> = seen.into_iter().collect();
    states.sort_by(|a, b| a.0.cmp(&b.0));
    let dims_out = SubsystemDims::qubits(n);
    let elements = states
        .into_iter()
        .map(|(_, v)| {
            WeightedInstrument::deterministic(
                KrausChannel::new(vec![v], SubsystemDims::trivial(), dims_out.clone()).unwrap(),
            )
        })
        .collect();
    Ok(DecompositionSet { elements, label: format!("stabilizer-{}q", n) })
}

/// Stabilizer extent of an n-qubit Hermitian operator via the LP over the
/// pure stabilizer states.
pub fn stab_extent(rho: &DenseOperator, n: usize) -> Result<LPResult> {
    let d = 1usize << n;
    if rho.rows != d || rho.cols != d {
        return Err(QknitError::DimMismatch("state dims do not match qubit count".into()));
    }
    if !rho.is_hermitian(1e-8) {
        return Err(QknitError::InvalidArgument("stab_extent needs a Hermitian operator".into()));
    }
    let set = stabilizer_states(n)?;
    let target = ChoiOperator {
        matrix: rho.clone(),
        dims_in: SubsystemDims::trivial(),
        dims_out: SubsystemDims::qubits(n),
    };
    lp_extent(&target, &set, 1e-9)
}

/// Closed-form extent of a Pauli-diagonal superoperator: `‖W(m)‖₁ / 4ⁿ`.
pub fn pauli_diagonal_extent(m: &[f64]) -> Result<f64> {
    let w = crate::channels::walsh_hadamard(m)?;
    Ok(w.iter().map(|x| x.abs()).sum::<f64>() / m.len() as f64)
}

/// Hoeffding shot budget `⌈2(γ/ε)² ln(2/δ)⌉` for an ε-accurate estimate with
/// confidence 1−δ.
pub fn hoeffding_shots(gamma: f64, eps: f64, delta: f64) -> Result<u64> {
    if gamma < 1.0 || eps <= 0.0 || delta <= 0.0 || delta > 1.0 {
        return Err(QknitError::InvalidArgument(format!(
            "hoeffding_shots needs γ ≥ 1, ε > 0, 0 < δ ≤ 1 (got {}, {}, {})",
            gamma, eps, delta
        )));
    }
    Ok((2.0 * (gamma / eps).powi(2) * (2.0 / delta).ln()).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{choi_of, depolarizing};
    use crate::tensor::{c, cr, kron, pauli_1q, projector, t_gate, C};

    fn channel_choi(u: &DenseOperator) -> ChoiOperator {
        choi_of(&KrausChannel::unitary(u, SubsystemDims::qubits(1)).unwrap())
    }

    #[test]
    fn clifford_count_and_closure() {
        let us = clifford_unitaries_1q();
        assert_eq!(us.len(), 24);
        let keys: std::collections::HashSet<String> =
            us.iter().map(phase_fingerprint).collect();
        assert!(keys.contains(&phase_fingerprint(&DenseOperator::identity(2))));
        assert!(keys.contains(&phase_fingerprint(&s_gate())));
        assert!(keys.contains(&phase_fingerprint(&pauli_1q(3))));
        // Closure under composition up to phase.
        for a in &us {
            for b in us.iter().take(4) {
                assert!(keys.contains(&phase_fingerprint(&a.matmul(b))));
            }
        }
    }

    #[test]
    fn t_extent_over_cliffords() {
        let set = clifford_channels_1q();
        let res = lp_extent(&channel_choi(&t_gate()), &set, 1e-9).unwrap();
        assert_eq!(res.status, LPStatus::Optimal);
        assert!((res.gamma - std::f64::consts::SQRT_2).abs() < 1e-6, "gamma = {}", res.gamma);
        // The LP never beats any valid decomposition's 1-norm.
        assert!(res.gamma <= crate::catalog::t_gate_qpd().one_norm() + 1e-8);
    }

    #[test]
    fn identity_extent_is_one() {
        let set = clifford_channels_1q();
        let res = lp_extent(&channel_choi(&DenseOperator::identity(2)), &set, 1e-9).unwrap();
        assert!((res.gamma - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unot_extent_over_paulis() {
        let dims = SubsystemDims::qubits(1);
        let elements = (0..4)
            .map(|q| {
                WeightedInstrument::deterministic(KrausChannel::unitary(&pauli_1q(q), dims.clone()).unwrap())
            })
            .collect();
        let set = DecompositionSet { elements, label: "pauli".into() };
        // UNOT Choi from the catalog QPD oracle.
        let target = crate::catalog::unot_qpd().reconstruct();
        let res = lp_extent(&target, &set, 1e-9).unwrap();
        assert_eq!(res.status, LPStatus::Optimal);
        assert!((res.gamma - 2.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_target() {
        let dims = SubsystemDims::qubits(1);
        let set = DecompositionSet {
            elements: vec![WeightedInstrument::deterministic(KrausChannel::identity(dims))],
            label: "id-only".into(),
        };
        let res = lp_extent(&channel_choi(&pauli_1q(1)), &set, 1e-9).unwrap();
        assert_eq!(res.status, LPStatus::Infeasible);
    }

    #[test]
    fn scaling_law() {
        let set = clifford_channels_1q();
        let base = channel_choi(&t_gate());
        let scaled = ChoiOperator {
            matrix: base.matrix.scale(cr(2.5)),
            dims_in: base.dims_in.clone(),
            dims_out: base.dims_out.clone(),
        };
        let g1 = lp_extent(&base, &set, 1e-9).unwrap().gamma;
        let g2 = lp_extent(&scaled, &set, 1e-9).unwrap().gamma;
        assert!((g2 - 2.5 * g1).abs() < 1e-7);
    }

    #[test]
    fn pec_lp_agrees_with_closed_form() {
        let eps = 0.05;
        let (basis, qpd) = crate::catalog::pec_basis_and_inverse(eps).unwrap();
        let set = DecompositionSet {
            elements: basis.into_iter().map(WeightedInstrument::deterministic).collect(),
            label: "noisy-pauli".into(),
        };
        let res = lp_extent(&qpd.reconstruct(), &set, 1e-9).unwrap();
        assert_eq!(res.status, LPStatus::Optimal);
        assert!((res.gamma - qpd.one_norm()).abs() < 1e-6);
    }

    #[test]
    fn stabilizer_counts_and_overlaps() {
        let s1 = stabilizer_states(1).unwrap();
        assert_eq!(s1.elements.len(), 6);
        let s2 = stabilizer_states(2).unwrap();
        assert_eq!(s2.elements.len(), 60);
        assert!(matches!(stabilizer_states(3), Err(QknitError::SizeCap(_))));

        let states: Vec<&DenseOperator> =
            s1.elements.iter().map(|e| &e.branches[0].0.kraus_ops[0]).collect();
        for a in &states {
            for b in &states {
                let ov = a.hs_inner(b).norm_sqr();
                let ok = [0.0, 0.5, 1.0].iter().any(|&w| (ov - w).abs() < 1e-9);
                assert!(ok, "overlap {}", ov);
            }
        }
    }

    #[test]
    fn magic_state_stab_extent() {
        let h = projector(&crate::catalog::magic_state());
        let res = stab_extent(&h, 1).unwrap();
        assert_eq!(res.status, LPStatus::Optimal);
        assert!((res.gamma - std::f64::consts::SQRT_2).abs() < 1e-6);

        let zero = projector(&basis_state(2, 0));
        let res0 = stab_extent(&zero, 1).unwrap();
        assert!((res0.gamma - 1.0).abs() < 1e-8);
    }

    #[test]
    fn faithfulness_on_set_elements() {
        // Any stabilizer state has extent exactly 1 over the stabilizer set.
        let plus = DenseOperator::column(&[cr(std::f64::consts::FRAC_1_SQRT_2), c(0.5f64.sqrt(), 0.0)]);
        let res = stab_extent(&projector(&plus), 1).unwrap();
        assert!((res.gamma - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pauli_diagonal_extent_examples() {
        let p = 0.5;
        let inv_diag = vec![1.0, 1.0 / (1.0 - p), 1.0 / (1.0 - p), 1.0 / (1.0 - p)];
        assert!((pauli_diagonal_extent(&inv_diag).unwrap() - 2.5).abs() < 1e-12);
        assert!((pauli_diagonal_extent(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pauli_diagonal_extent(&[1.0, -1.0, -1.0, -1.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn depolarizing_inverse_extent_grid() {
        for k in 0..10 {
            let p = 0.1 * k as f64;
            let inv: Vec<f64> = vec![1.0, 1.0 / (1.0 - p), 1.0 / (1.0 - p), 1.0 / (1.0 - p)];
            let g = pauli_diagonal_extent(&inv).unwrap();
            let want = (1.0 + p / 2.0) / (1.0 - p);
            assert!((g - want).abs() < 1e-10, "p={}", p);
        }
        // Cross-check against the channels-module inverse path.
        let ptm = crate::channels::ptm_of(&depolarizing(0.3)).unwrap();
        let (_, gamma) = crate::channels::pauli_diagonal_inverse(&ptm.diagonal()).unwrap();
        assert!((gamma - (1.0 + 0.15) / 0.7).abs() < 1e-10);
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_shots(1.0, 0.1, 0.05).unwrap(), (200.0 * 40.0f64.ln()).ceil() as u64);
        assert_eq!(hoeffding_shots(1.0, 0.1, 0.05).unwrap(), 738);
        assert_eq!(hoeffding_shots(std::f64::consts::SQRT_2, 0.1, 0.05).unwrap(), 1476);
        assert_eq!(hoeffding_shots(3.0, 0.1, 0.05).unwrap(), (1800.0 * 40.0f64.ln()).ceil() as u64);
        assert!(hoeffding_shots(1.0, 0.1, 2.0).is_err());
        assert!(hoeffding_shots(0.5, 0.1, 0.05).is_err());
    }

    #[test]
    fn lp_never_beats_catalog_qpds() {
        let set = clifford_channels_1q();
        for (qpd, label) in [(crate::catalog::t_gate_qpd(), "T")] {
            let res = lp_extent(&qpd.reconstruct(), &set, 1e-9).unwrap();
            assert!(res.gamma <= qpd.one_norm() + 1e-6, "{}", label);
        }
        let _ = kron(&pauli_1q(0), &pauli_1q(0)).unwrap();
        let _: C = c(0.0, 0.0);
    }
}
