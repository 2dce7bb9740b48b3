//! Quasiprobability decompositions (QPDs) of quantum states and channels.
//!
//! A QPD expresses a target map or state as a real-weighted sum of
//! implementable elements, `E = Σᵢ aᵢ Fᵢ`, where the coefficients may be
//! negative. The 1-norm `‖a‖₁` of the coefficients (the *quasiprobability
//! extent* γ when minimal) governs the Monte Carlo sampling overhead: an
//! ε-accurate estimate with confidence 1−δ needs `n_s ≥ 2(γ/ε)² ln(2/δ)`
//! shots.
//!
//! This crate covers, at desk scale (≤ 8-qubit density matrices):
//!
//! - **Magic simulation**: T gates and |H⟩ magic states over Clifford /
//!   stabilizer decomposition sets, including the injection gadget.
//! - **Nonphysical maps**: transpose, universal-NOT, and Pauli-diagonal
//!   inverses via the symplectic Walsh–Hadamard transform.
//! - **Space-like cuts**: closed-form QPDs of two-qubit gates from their
//!   operator Schmidt decomposition, gate teleportation of Clifford gates,
//!   entanglement factories, and black-box cuts.
//! - **Time-like (wire) cuts**: measure-and-prepare and
//!   entanglement-breaking identity-channel QPDs.
//! - **Probabilistic error cancellation**: the four-noisy-Pauli toy model.
//! - **Extent LPs**: a dense revised simplex computing the minimal 1-norm
//!   over finite decomposition sets (Clifford channels, stabilizer states).
//! - **Monte Carlo engine**: exact and sampled quasiprobability estimators
//!   with classical side information, deterministic across thread counts.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`tensor`] | dense complex operators, Schmidt decompositions |
//! | [`channels`] | Kraus / Choi / PTM conversions, weighted instruments |
//! | [`qpd`] | the `QuasiDecomposition` type and its algebra |
//! | [`catalog`] | every closed-form QPD constructor |
//! | [`extent`] | LP extents, decomposition sets, Hoeffding budget |
//! | [`engine`] | circuits, exact oracles, the QPS estimator |

pub mod catalog;
pub mod channels;
pub mod engine;
pub mod extent;
pub mod qpd;
pub(crate) mod simplex;
pub mod tensor;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum QknitError {
    /// Operand dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    /// A configured size cap (register, term count, rank) was exceeded.
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    /// A map required to be invertible is not (zero diagonal, ε ≥ 1/2, …).
    #[error("not invertible: {0}")]
    NotInvertible(String),
    /// Operator Schmidt factors of a claimed unitary are not proportional to
    /// unitaries within tolerance.
    #[error("non-unitary Schmidt form: {0}")]
    NonUnitarySchmidtForm(String),
    /// The LP solver exceeded its iteration bound.
    #[error("solver stalled: {0}")]
    SolverStall(String),
    /// A QPD with zero 1-norm cannot be sampled.
    #[error("degenerate QPD: {0}")]
    DegenerateQpd(String),
    /// Malformed serialized input.
    #[error("parse error: {0}")]
    ParseError(String),
    /// A precondition on a numeric argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, QknitError>;
