//! The `QuasiDecomposition` value type: a signed mixture `E = Σᵢ aᵢ Fᵢ` of
//! weighted instruments, with its combination algebra (tensor, chaining),
//! sampling distribution, exact reconstruction oracle, and JSON
//! serialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{reconstruct_superop, ChoiOperator, KrausChannel, WeightedInstrument};
use crate::tensor::{cr, permute_systems, trace_norm, DenseOperator, SubsystemDims, C};
use crate::{QknitError, Result};

/// Term-count cap for eager combination (tensor / compose).
pub const TERM_CAP: usize = 1_000_000;
/// Coefficients below this magnitude are dropped during combination.
pub const COEFF_DROP: f64 = 1e-14;

/// A quasiprobability decomposition `Σᵢ aᵢ Fᵢ` of some target map.
#[derive(Debug, Clone)]
pub struct QuasiDecomposition {
    pub terms: Vec<(f64, WeightedInstrument)>,
    /// Claimed minimal 1-norm; metadata only, never trusted by `validate`.
    pub claimed_gamma: Option<f64>,
    pub target_label: String,
}

/// Output of [`QuasiDecomposition::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// `‖reconstruct(q) − target‖₁` (trace norm).
    pub residual: f64,
    pub one_norm: f64,
    /// `Σᵢ aᵢ · tr[Choi(Fᵢ)]`; 1 for a TP target.
    pub signed_sum: f64,
}

impl QuasiDecomposition {
    pub fn new(terms: Vec<(f64, WeightedInstrument)>, target_label: impl Into<String>) -> Self {
        Self { terms, claimed_gamma: None, target_label: target_label.into() }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.claimed_gamma = Some(gamma);
        self
    }

    /// Single-term QPD of a deterministic channel.
    pub fn deterministic(c: KrausChannel, label: impl Into<String>) -> Self {
        Self::new(vec![(1.0, WeightedInstrument::deterministic(c))], label)
    }

    pub fn one_norm(&self) -> f64 {
        self.terms.iter().map(|(a, _)| a.abs()).sum()
    }

    pub fn dims_in(&self) -> &SubsystemDims {
        self.terms[0].1.dims_in()
    }

    pub fn dims_out(&self) -> &SubsystemDims {
        self.terms[0].1.dims_out()
    }

    /// Tensor product: all pairwise term products; 1-norms multiply exactly.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let count = self.terms.len().saturating_mul(other.terms.len());
        if count > TERM_CAP {
            return Err(QknitError::SizeCap(format!("tensor would create {} terms (cap {})", count, TERM_CAP)));
        }
        let mut terms = Vec::with_capacity(count);
        for (a, fa) in &self.terms {
            for (b, fb) in &other.terms {
                let coeff = a * b;
                if coeff.abs() < COEFF_DROP {
                    continue;
                }
                let mut branches = Vec::with_capacity(fa.branches.len() * fb.branches.len());
                for (ca, wa) in &fa.branches {
                    for (cb, wb) in &fb.branches {
                        branches.push((ca.tensor(cb)?, wa * wb));
                    }
                }
                terms.push((coeff, WeightedInstrument::new(branches)?));
            }
        }
        Ok(Self::new(terms, format!("{} ⊗ {}", self.target_label, other.target_label)))
    }

    /// Chaining: `later ∘ wiring ∘ earlier`. `wiring[s]` names which output
    /// subsystem of `earlier` feeds input slot `s` of `later` (a
    /// permutation); pass `0..k` for the identity wiring.
    pub fn compose(later: &Self, earlier: &Self, wiring: &[usize]) -> Result<Self> {
        let out_dims = earlier.dims_out();
        let in_dims = later.dims_in();
        if wiring.len() != out_dims.len() {
            return Err(QknitError::DimMismatch("wiring length must match earlier output subsystems".into()));
        }
        let wired = SubsystemDims::new(wiring.iter().map(|&s| out_dims.dims[s]).collect());
        if wired != *in_dims {
            return Err(QknitError::DimMismatch(format!(
                "wired dims {:?} do not match later input dims {:?}",
                wired.dims, in_dims.dims
            )));
        }
        let d = out_dims.total();
        let perm = {
            let mut p = DenseOperator::zeros(d, d);
            let id = DenseOperator::identity(d);
            let permuted = permute_systems(&id, out_dims, wiring)?;
            for i in 0..d {
                for j in 0..d {
                    p.set(i, j, permuted.get(i, j));
                }
            }
            p
        };
        let count = later.terms.len().saturating_mul(earlier.terms.len());
        if count > TERM_CAP {
            return Err(QknitError::SizeCap(format!("compose would create {} terms (cap {})", count, TERM_CAP)));
        }
        let mut terms = Vec::with_capacity(count);
        for (a, fa) in &later.terms {
            for (b, fb) in &earlier.terms {
                let coeff = a * b;
                if coeff.abs() < COEFF_DROP {
                    continue;
                }
                let mut branches = Vec::new();
                for (ca, wa) in &fa.branches {
                    for (cb, wb) in &fb.branches {
                        let mut ops = Vec::with_capacity(ca.kraus_ops.len() * cb.kraus_ops.len());
                        for l in &ca.kraus_ops {
                            for k in &cb.kraus_ops {
                                ops.push(l.matmul(&perm).matmul(k));
                            }
                        }
                        let chan = KrausChannel::new(ops, earlier.dims_in().clone(), later.dims_out().clone())?;
                        branches.push((chan, wa * wb));
                    }
                }
                terms.push((coeff, WeightedInstrument::new(branches)?));
            }
        }
        Ok(Self::new(terms, format!("{} ∘ {}", later.target_label, earlier.target_label)))
    }

    /// Exact reconstruction oracle: `Σᵢ aᵢ · Choi(Fᵢ)`.
    pub fn reconstruct(&self) -> ChoiOperator {
        let dims_in = self.dims_in().clone();
        let dims_out = self.dims_out().clone();
        let (din, dout) = (dims_in.total(), dims_out.total());
        let mut m = DenseOperator::zeros(din * dout, din * dout);
        for (a, f) in &self.terms {
            m = m.add(&reconstruct_superop(f).matrix.scale(cr(*a)));
        }
        ChoiOperator { matrix: m, dims_in, dims_out }
    }

    pub fn validate(&self, target: &ChoiOperator, _tol: f64) -> ValidationReport {
        let recon = self.reconstruct();
        let residual = trace_norm(&recon.matrix.sub(&target.matrix));
        let signed_sum = self
            .terms
            .iter()
            .map(|(a, f)| a * reconstruct_superop_unsigned_trace(f))
            .sum();
        ValidationReport { residual, one_norm: self.one_norm(), signed_sum }
    }

    /// Draw a term index with probability `|aᵢ|/‖a‖₁`.
    pub fn sample_term<R: Rng>(&self, rng: &mut R) -> Result<(usize, f64, f64)> {
        let norm = self.one_norm();
        if norm <= 0.0 {
            return Err(QknitError::DegenerateQpd("cannot sample a QPD with zero 1-norm".into()));
        }
        let u: f64 = rng.gen::<f64>() * norm;
        let mut acc = 0.0;
        for (i, (a, _)) in self.terms.iter().enumerate() {
            acc += a.abs();
            if u < acc {
                return Ok((i, a.signum(), norm));
            }
        }
        let last = self.terms.len() - 1;
        Ok((last, self.terms[last].0.signum(), norm))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&QpdDoc::from(self)).expect("qpd serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: QpdDoc =
            serde_json::from_str(s).map_err(|e| QknitError::ParseError(format!("qpd json: {}", e)))?;
        doc.try_into()
    }
}

/// tr[Choi(Σ Eᵢ)] ignoring weights — 1 iff the unweighted branch sum is TP.
fn reconstruct_superop_unsigned_trace(w: &WeightedInstrument) -> f64 {
    let mut acc = 0.0;
    for (c, _) in &w.branches {
        acc += crate::channels::choi_of(c).matrix.trace().re;
    }
    acc
}

// JSON document shape: {target_label, terms:[{coeff, branches:[{kraus, weight}]}]}
// with each Kraus matrix a list of rows of [re, im] pairs.

#[derive(Serialize, Deserialize)]
struct QpdDoc {
    target_label: String,
    terms: Vec<TermDoc>,
}

#[derive(Serialize, Deserialize)]
struct TermDoc {
    coeff: f64,
    branches: Vec<BranchDoc>,
}

#[derive(Serialize, Deserialize)]
struct BranchDoc {
    kraus: Vec<Vec<Vec<[f64; 2]>>>,
    weight: f64,
}

impl From<&QuasiDecomposition> for QpdDoc {
    fn from(q: &QuasiDecomposition) -> Self {
        let terms = q
            .terms
            .iter()
            .map(|(coeff, inst)| TermDoc {
                coeff: *coeff,
                branches: inst
                    .branches
                    .iter()
                    .map(|(c, w)| BranchDoc {
                        kraus: c
                            .kraus_ops
                            .iter()
                            .map(|k| {
                                (0..k.rows)
                                    .map(|i| (0..k.cols).map(|j| [k.get(i, j).re, k.get(i, j).im]).collect())
                                    .collect()
                            })
                            .collect(),
                        weight: *w,
                    })
                    .collect(),
            })
            .collect();
        QpdDoc { target_label: q.target_label.clone(), terms }
    }
}

fn infer_dims(d: usize) -> SubsystemDims {
    if d == 1 {
        return SubsystemDims::trivial();
    }
    if d.is_power_of_two() {
        SubsystemDims::qubits(d.trailing_zeros() as usize)
    } else {
        SubsystemDims::new(vec![d])
    }
}

impl TryFrom<QpdDoc> for QuasiDecomposition {
    type Error = QknitError;

    fn try_from(doc: QpdDoc) -> Result<Self> {
        let mut terms = Vec::with_capacity(doc.terms.len());
        for t in doc.terms {
            let mut branches = Vec::with_capacity(t.branches.len());
            for b in t.branches {
                if b.kraus.is_empty() {
                    return Err(QknitError::ParseError("branch without Kraus operators".into()));
                }
                let rows = b.kraus[0].len();
                let cols = b.kraus[0].first().map_or(0, |r| r.len());
                if rows == 0 || cols == 0 {
                    return Err(QknitError::ParseError("empty Kraus matrix".into()));
                }
                let mut ops = Vec::with_capacity(b.kraus.len());
                for m in &b.kraus {
                    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                        return Err(QknitError::ParseError("ragged Kraus matrix".into()));
                    }
                    ops.push(DenseOperator::from_fn(rows, cols, |i, j| {
                        C::new(m[i][j][0], m[i][j][1])
                    }));
                }
                let chan = KrausChannel::new(ops, infer_dims(cols), infer_dims(rows))?;
                branches.push((chan, b.weight));
            }
            terms.push((t.coeff, WeightedInstrument::new(branches)?));
        }
        if terms.is_empty() {
            return Err(QknitError::ParseError("QPD document has no terms".into()));
        }
        Ok(QuasiDecomposition::new(terms, doc.target_label))
    }
}
