//! Circuit representation, exact density-matrix oracles, and the Monte
//! Carlo quasiprobability simulation (QPS) estimator with classical side
//! information.
//!
//! A [`Circuit`] is an ordered list of [`Site`]s acting on a register of at
//! most [`QUBIT_CAP`] qubits (qubit 0 is the most significant index bit).
//! Three execution paths share one compiled form:
//!
//! | Operation | Semantics |
//! |-----------|-----------|
//! | [`exact_expectation`] | dense density-matrix evolution; QPD sites are applied as their full signed sums |
//! | [`exact_qpd_expectation`] | the exact weighted sum over all QPD terms (unbiasedness oracle) |
//! | [`qps_estimate`] | the sampling estimator: terms drawn with probability \|aᵢ\|/‖a‖₁, instrument branches drawn by the mid-circuit Born rule, shots weighted by `‖a‖₁ · sgn(Πaᵢ) · Πβⱼ` |
//!
//! The estimator enumerates the finite term×branch path tree once, so each
//! shot is a cheap categorical draw; shots use a counter-based per-shot RNG
//! and pairwise summation, which makes reports bit-identical across thread
//! counts.
//!
//! Correlated decompositions (one sampled term parameterizing several
//! sites, the classical side information of the black-box protocols) are
//! expressed as [`QpdGroup`]s referenced by [`Site::GroupStage`] sites.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::catalog::{cr_gate, magic_state, magic_state_qpd, pure_state_sep_qpd_with_bases, rotation_pp, unitary_schmidt};
use crate::channels::{prepare_channel, KrausChannel, WeightedInstrument};
use crate::qpd::QuasiDecomposition;
use crate::tensor::{
    basis_state, c, cnot, cr, eigh, hadamard, iswap_gate, kron, pauli_1q, s_gate, swap_gate, symplectic, t_gate,
    DenseOperator, SubsystemDims, C,
};
use crate::{QknitError, Result};

/// Densest register the exact oracles and the path tree will evolve.
pub const QUBIT_CAP: usize = 8;
/// Cap on enumerated term/branch paths.
pub const PATH_CAP: usize = 1_000_000;
/// Confidence parameter baked into `hoeffding_eps_at_delta`.
pub const HOEFFDING_DELTA: f64 = 0.05;

/// Which black-box cutting rewrite a marker participates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    /// Clifford gate-teleportation cut (the marker gate must be a CNOT).
    Cnot,
    /// Generic two-qubit unitary cut via the joint KAK expansion.
    TwoQubit,
}

/// One element of a circuit.
#[derive(Debug, Clone)]
pub enum Site {
    /// Replace the target qubits by the pure state `state` (column vector).
    Prep { targets: Vec<usize>, state: DenseOperator },
    Gate { targets: Vec<usize>, unitary: DenseOperator },
    Channel { targets: Vec<usize>, channel: KrausChannel },
    /// One term is sampled per shot with probability `|aᵢ|/‖a‖₁`.
    Qpd { targets: Vec<usize>, qpd: QuasiDecomposition },
    Instrument { targets: Vec<usize>, instrument: WeightedInstrument },
    /// Stage `stage` of correlated group `group`; the term index was sampled
    /// at the group's stage 0.
    GroupStage { targets: Vec<usize>, group: usize, stage: usize },
    /// A nonlocal gate marked for black-box cutting; evaluated as `Gate` by
    /// the exact oracles until a rewrite replaces it.
    BlackBoxCut { targets: Vec<usize>, gate: DenseOperator, kind: CutKind },
}

impl Site {
    pub fn targets(&self) -> &[usize] {
        match self {
            Site::Prep { targets, .. }
            | Site::Gate { targets, .. }
            | Site::Channel { targets, .. }
            | Site::Qpd { targets, .. }
            | Site::Instrument { targets, .. }
            | Site::GroupStage { targets, .. }
            | Site::BlackBoxCut { targets, .. } => targets,
        }
    }
}

/// A correlated quasiprobability decomposition spanning several sites: one
/// term index is sampled per shot (probability `|aᵢ|/‖a‖₁`) and every
/// [`Site::GroupStage`] referencing the group applies that term's
/// instrument for its stage.
#[derive(Debug, Clone)]
pub struct QpdGroup {
    pub coefficients: Vec<f64>,
    /// `instruments[term][stage]`.
    pub instruments: Vec<Vec<WeightedInstrument>>,
    pub label: String,
}

impl QpdGroup {
    pub fn one_norm(&self) -> f64 {
        self.coefficients.iter().map(|a| a.abs()).sum()
    }

    pub fn stage_count(&self) -> usize {
        self.instruments.first().map_or(0, Vec::len)
    }
}

/// An ordered sequence of sites on `qubit_count` qubits, starting from
/// |0…0⟩.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub qubit_count: usize,
    pub sites: Vec<Site>,
    pub groups: Vec<QpdGroup>,
}

impl Circuit {
    pub fn new(qubit_count: usize) -> Self {
        Self { qubit_count, sites: Vec::new(), groups: Vec::new() }
    }

    pub fn prep(&mut self, targets: &[usize], state: DenseOperator) -> &mut Self {
        self.sites.push(Site::Prep { targets: targets.to_vec(), state });
        self
    }

    pub fn gate(&mut self, targets: &[usize], unitary: DenseOperator) -> &mut Self {
        self.sites.push(Site::Gate { targets: targets.to_vec(), unitary });
        self
    }

    pub fn channel(&mut self, targets: &[usize], channel: KrausChannel) -> &mut Self {
        self.sites.push(Site::Channel { targets: targets.to_vec(), channel });
        self
    }

    pub fn qpd(&mut self, targets: &[usize], qpd: QuasiDecomposition) -> &mut Self {
        self.sites.push(Site::Qpd { targets: targets.to_vec(), qpd });
        self
    }

    pub fn instrument(&mut self, targets: &[usize], instrument: WeightedInstrument) -> &mut Self {
        self.sites.push(Site::Instrument { targets: targets.to_vec(), instrument });
        self
    }

    pub fn blackbox_cut(&mut self, targets: &[usize], gate: DenseOperator, kind: CutKind) -> &mut Self {
        self.sites.push(Site::BlackBoxCut { targets: targets.to_vec(), gate, kind });
        self
    }

    /// Product of the 1-norms of every QPD site and group; the sampling
    /// overhead factor `‖a‖₁^{(total)}` of the whole circuit.
    pub fn one_norm(&self) -> f64 {
        let site_norm: f64 = self
            .sites
            .iter()
            .map(|s| match s {
                Site::Qpd { qpd, .. } => qpd.one_norm(),
                _ => 1.0,
            })
            .product();
        site_norm * self.groups.iter().map(QpdGroup::one_norm).product::<f64>()
    }
}

/// Which final value each shot records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    /// Draw one observable eigenvalue from the Born distribution (the
    /// literal algorithm; higher variance).
    Sampled,
    /// Use the exact final expectation `tr[O·ρ]` as the shot value.
    Analytic,
}

/// Outcome of [`qps_estimate`].
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub mean: f64,
    /// Sample standard deviation / √shots.
    pub stderr: f64,
    pub shots: u64,
    /// `‖a‖₁^{(total)}` of the circuit.
    pub one_norm: f64,
    /// Accuracy guaranteed with confidence 95% at this shot count:
    /// `‖a‖₁ √(2 ln(2/δ)/n)` with δ = 0.05.
    pub hoeffding_eps_at_delta: f64,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Local operator application by index manipulation.

/// Precomputed index scatter for a site's target/rest qubit split.
#[derive(Debug, Clone)]
struct Layout {
    /// Local dimension 2^t.
    d: usize,
    /// `ot[a]`: full-index bits contributed by local sub-index `a`.
    ot: Vec<usize>,
    /// `orr[x]`: full-index bits contributed by rest sub-index `x`.
    orr: Vec<usize>,
}

impl Layout {
    fn new(n: usize, targets: &[usize]) -> Result<Self> {
        let t = targets.len();
        let mut seen = vec![false; n];
        for &q in targets {
            if q >= n {
                return Err(QknitError::DimMismatch(format!("target qubit {} outside register of {}", q, n)));
            }
            if seen[q] {
                return Err(QknitError::InvalidArgument(format!("duplicate target qubit {}", q)));
            }
            seen[q] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&q| !seen[q]).collect();
        let (d, r_dim) = (1usize << t, 1usize << rest.len());
        let mut ot = vec![0usize; d];
        for (a, slot) in ot.iter_mut().enumerate() {
            for (j, &q) in targets.iter().enumerate() {
                *slot |= ((a >> (t - 1 - j)) & 1) << (n - 1 - q);
            }
        }
        let mut orr = vec![0usize; r_dim];
        for (x, slot) in orr.iter_mut().enumerate() {
            for (j, &q) in rest.iter().enumerate() {
                *slot |= ((x >> (rest.len() - 1 - j)) & 1) << (n - 1 - q);
            }
        }
        Ok(Self { d, ot, orr })
    }

    /// `ρ ↦ K ρ K†` for a single Kraus operator on the layout's targets;
    /// `K` is either d×d or d×1 (a preparation: trace out, then prepare).
    fn apply_kraus(&self, rho: &DenseOperator, k: &DenseOperator) -> DenseOperator {
        let nn = rho.rows;
        let mut out = DenseOperator::zeros(nn, nn);
        if k.cols == 1 {
            // S[x,y] = Σᵢ ρ[(i,x),(i,y)], then out = (KK†) ⊗ S.
            for &ox in &self.orr {
                for &oy in &self.orr {
                    let mut s = C::ZERO;
                    for &oi in &self.ot {
                        s += rho.entries[(oi | ox) * nn + (oi | oy)];
                    }
                    if s.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (a, &oa) in self.ot.iter().enumerate() {
                        let ka = k.entries[a];
                        if ka.norm_sqr() == 0.0 {
                            continue;
                        }
                        for (b, &ob) in self.ot.iter().enumerate() {
                            out.entries[(oa | ox) * nn + (ob | oy)] += ka * k.entries[b].conj() * s;
                        }
                    }
                }
            }
            return out;
        }
        // tmp = (K ⊗ I) ρ, out = tmp (K ⊗ I)†, written with explicit index
        // scatter so no full-size embedding is ever built.
        let mut tmp = DenseOperator::zeros(nn, nn);
        for &ox in &self.orr {
            for (a, &oa) in self.ot.iter().enumerate() {
                let row_out = (oa | ox) * nn;
                for (ap, &oap) in self.ot.iter().enumerate() {
                    let kv = k.entries[a * k.cols + ap];
                    if kv.norm_sqr() == 0.0 {
                        continue;
                    }
                    let row_in = (oap | ox) * nn;
                    for col in 0..nn {
                        tmp.entries[row_out + col] += kv * rho.entries[row_in + col];
                    }
                }
            }
        }
        for &oy in &self.orr {
            for (b, &ob) in self.ot.iter().enumerate() {
                let col_out = ob | oy;
                for (bp, &obp) in self.ot.iter().enumerate() {
                    let kv = k.entries[b * k.cols + bp].conj();
                    if kv.norm_sqr() == 0.0 {
                        continue;
                    }
                    let col_in = obp | oy;
                    for row in 0..nn {
                        out.entries[row * nn + col_out] += kv * tmp.entries[row * nn + col_in];
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Compiled circuit.

#[derive(Debug, Clone)]
struct CChan {
    layout: Layout,
    kraus: Vec<DenseOperator>,
}

impl CChan {
    fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        let mut out = DenseOperator::zeros(rho.rows, rho.cols);
        for k in &self.kraus {
            out = out.add(&self.layout.apply_kraus(rho, k));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct CInstr {
    branches: Vec<(CChan, f64)>,
}

impl CInstr {
    /// Full weighted sum `Σⱼ βⱼ Eⱼ(ρ)`.
    fn apply_weighted(&self, rho: &DenseOperator) -> DenseOperator {
        let mut out = DenseOperator::zeros(rho.rows, rho.cols);
        for (chan, w) in &self.branches {
            out = out.add(&chan.apply(rho).scale(cr(*w)));
        }
        out
    }
}

#[derive(Debug)]
enum CSite {
    Chan(CChan),
    Instr(CInstr),
    Qpd { terms: Vec<(f64, CInstr)>, norm: f64 },
    Stage { group: usize, stage: usize },
}

#[derive(Debug)]
struct CGroup {
    coefficients: Vec<f64>,
    norm: f64,
    /// `instr[term][stage]`.
    instr: Vec<Vec<CInstr>>,
}

#[derive(Debug)]
struct Compiled {
    n: usize,
    sites: Vec<CSite>,
    groups: Vec<CGroup>,
    one_norm: f64,
}

fn compile_channel(n: usize, targets: &[usize], chan: &KrausChannel) -> Result<CChan> {
    let layout = Layout::new(n, targets)?;
    if chan.d_out() != layout.d {
        return Err(QknitError::DimMismatch(format!(
            "channel output dimension {} does not match {} target qubits",
            chan.d_out(),
            targets.len()
        )));
    }
    if chan.d_in() != layout.d && chan.d_in() != 1 {
        return Err(QknitError::DimMismatch(format!(
            "channel input dimension {} is neither 1 nor {}",
            chan.d_in(),
            layout.d
        )));
    }
    Ok(CChan { layout, kraus: chan.kraus_ops.clone() })
}

fn compile_instrument(n: usize, targets: &[usize], inst: &WeightedInstrument) -> Result<CInstr> {
    let branches = inst
        .branches
        .iter()
        .map(|(chan, w)| Ok((compile_channel(n, targets, chan)?, *w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CInstr { branches })
}

fn compile(c: &Circuit) -> Result<Compiled> {
    let n = c.qubit_count;
    if n == 0 || n > QUBIT_CAP {
        return Err(QknitError::SizeCap(format!("register of {} qubits (cap {})", n, QUBIT_CAP)));
    }
    let mut sites = Vec::with_capacity(c.sites.len());
    let mut stage_seen: Vec<usize> = vec![0; c.groups.len()];
    for (idx, site) in c.sites.iter().enumerate() {
        let err = |e: QknitError| QknitError::InvalidArgument(format!("site {}: {}", idx, e));
        let compiled = match site {
            Site::Prep { targets, state } => {
                let layout = Layout::new(n, targets).map_err(err)?;
                if state.rows != layout.d || state.cols != 1 {
                    return Err(QknitError::DimMismatch(format!(
                        "site {}: prep state is {}x{}, expected {}x1",
                        idx, state.rows, state.cols, layout.d
                    )));
                }
                let nrm = state.frobenius_norm();
                if (nrm - 1.0).abs() > 1e-9 {
                    return Err(QknitError::InvalidArgument(format!("site {}: prep state is not normalized", idx)));
                }
                CSite::Chan(CChan { layout, kraus: vec![state.clone()] })
            }
            Site::Gate { targets, unitary } | Site::BlackBoxCut { targets, gate: unitary, .. } => {
                if !unitary.is_unitary(1e-8) {
                    return Err(QknitError::InvalidArgument(format!("site {}: gate is not unitary", idx)));
                }
                let layout = Layout::new(n, targets).map_err(err)?;
                if unitary.rows != layout.d {
                    return Err(QknitError::DimMismatch(format!(
                        "site {}: gate dimension {} does not match {} target qubits",
                        idx,
                        unitary.rows,
                        targets.len()
                    )));
                }
                CSite::Chan(CChan { layout, kraus: vec![unitary.clone()] })
            }
            Site::Channel { targets, channel } => CSite::Chan(compile_channel(n, targets, channel).map_err(err)?),
            Site::Instrument { targets, instrument } => {
                CSite::Instr(compile_instrument(n, targets, instrument).map_err(err)?)
            }
            Site::Qpd { targets, qpd } => {
                let norm = qpd.one_norm();
                if norm <= 0.0 {
                    return Err(QknitError::DegenerateQpd(format!("site {}: QPD has zero 1-norm", idx)));
                }
                let terms = qpd
                    .terms
                    .iter()
                    .map(|(a, inst)| Ok((*a, compile_instrument(n, targets, inst).map_err(err)?)))
                    .collect::<Result<Vec<_>>>()?;
                CSite::Qpd { terms, norm }
            }
            Site::GroupStage { targets: _, group, stage } => {
                let g = c.groups.get(*group).ok_or_else(|| {
                    QknitError::InvalidArgument(format!("site {}: group {} does not exist", idx, group))
                })?;
                if *stage != stage_seen[*group] {
                    return Err(QknitError::InvalidArgument(format!(
                        "site {}: group {} stage {} out of order (expected {})",
                        idx, group, stage, stage_seen[*group]
                    )));
                }
                stage_seen[*group] += 1;
                let _ = g;
                CSite::Stage { group: *group, stage: *stage }
            }
        };
        sites.push(compiled);
    }
    let mut groups = Vec::with_capacity(c.groups.len());
    for (gi, g) in c.groups.iter().enumerate() {
        if g.coefficients.len() != g.instruments.len() || g.coefficients.is_empty() {
            return Err(QknitError::InvalidArgument(format!("group {}: term/coefficient count mismatch", gi)));
        }
        let stages = g.stage_count();
        if stage_seen[gi] != stages {
            return Err(QknitError::InvalidArgument(format!(
                "group {}: {} stages declared but {} referenced",
                gi, stages, stage_seen[gi]
            )));
        }
        let norm = g.one_norm();
        if norm <= 0.0 {
            return Err(QknitError::DegenerateQpd(format!("group {}: zero 1-norm", gi)));
        }
        // Stage targets come from the referencing sites, in stage order.
        let mut stage_targets: Vec<&[usize]> = vec![&[]; stages];
        for site in &c.sites {
            if let Site::GroupStage { targets, group, stage } = site {
                if *group == gi {
                    stage_targets[*stage] = targets;
                }
            }
        }
        let mut instr = Vec::with_capacity(g.instruments.len());
        for (ti, term) in g.instruments.iter().enumerate() {
            if term.len() != stages {
                return Err(QknitError::InvalidArgument(format!("group {}: term {} has wrong stage count", gi, ti)));
            }
            instr.push(
                term.iter()
                    .zip(&stage_targets)
                    .map(|(inst, targets)| compile_instrument(n, targets, inst))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        groups.push(CGroup { coefficients: g.coefficients.clone(), norm, instr });
    }
    Ok(Compiled { n, sites, groups, one_norm: c.one_norm() })
}

fn check_observable(obs: &DenseOperator, n: usize) -> Result<()> {
    if obs.rows != (1 << n) || obs.cols != (1 << n) {
        return Err(QknitError::DimMismatch(format!(
            "observable is {}x{}, expected {}",
            obs.rows,
            obs.cols,
            1usize << n
        )));
    }
    if !obs.is_hermitian(1e-9) {
        return Err(QknitError::InvalidArgument("observable is not Hermitian".into()));
    }
    let max_abs = crate::tensor::eigvalsh(obs).into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 1.0 + 1e-9 {
        return Err(QknitError::InvalidArgument(format!("observable operator norm {} exceeds 1", max_abs)));
    }
    Ok(())
}

fn initial_state(n: usize) -> DenseOperator {
    let mut rho = DenseOperator::zeros(1 << n, 1 << n);
    rho.set(0, 0, C::ONE);
    rho
}

fn expectation(obs: &DenseOperator, rho: &DenseOperator) -> f64 {
    let nn = rho.rows;
    let mut acc = C::ZERO;
    for i in 0..nn {
        for j in 0..nn {
            acc += obs.entries[i * nn + j] * rho.entries[j * nn + i];
        }
    }
    acc.re
}

// ---------------------------------------------------------------------------
// Exact oracles.

struct ExactEval<'a> {
    comp: &'a Compiled,
    obs: &'a DenseOperator,
    expand: bool,
    acc: f64,
    paths: usize,
}

impl ExactEval<'_> {
    fn go(&mut self, idx: usize, coeff: f64, rho: DenseOperator, choices: &mut Vec<usize>) -> Result<()> {
        if idx == self.comp.sites.len() {
            self.paths += 1;
            if self.paths > PATH_CAP {
                return Err(QknitError::SizeCap(format!("more than {} QPD term paths", PATH_CAP)));
            }
            self.acc += coeff * expectation(self.obs, &rho);
            return Ok(());
        }
        match &self.comp.sites[idx] {
            CSite::Chan(chan) => self.go(idx + 1, coeff, chan.apply(&rho), choices),
            CSite::Instr(inst) => self.go(idx + 1, coeff, inst.apply_weighted(&rho), choices),
            CSite::Qpd { terms, .. } => {
                if self.expand {
                    for (a, inst) in terms {
                        self.go(idx + 1, coeff * a, inst.apply_weighted(&rho), choices)?;
                    }
                    Ok(())
                } else {
                    let mut out = DenseOperator::zeros(rho.rows, rho.cols);
                    for (a, inst) in terms {
                        out = out.add(&inst.apply_weighted(&rho).scale(cr(*a)));
                    }
                    self.go(idx + 1, coeff, out, choices)
                }
            }
            CSite::Stage { group, stage } => {
                let g = &self.comp.groups[*group];
                if *stage == 0 {
                    for t in 0..g.coefficients.len() {
                        choices[*group] = t;
                        let out = g.instr[t][0].apply_weighted(&rho);
                        self.go(idx + 1, coeff * g.coefficients[t], out, choices)?;
                    }
                    Ok(())
                } else {
                    let t = choices[*group];
                    self.go(idx + 1, coeff, g.instr[t][*stage].apply_weighted(&rho), choices)
                }
            }
        }
    }
}

/// Ground-truth expectation value `tr[O ρ_final]` by dense density-matrix
/// evolution; QPD sites are applied as their full signed superoperator sums.
pub fn exact_expectation(c: &Circuit, obs: &DenseOperator) -> Result<f64> {
    exact_eval(c, obs, false)
}

/// The exact weighted sum over all QPD terms and group terms; equals
/// [`exact_expectation`] for every valid QPD (unbiasedness oracle).
pub fn exact_qpd_expectation(c: &Circuit, obs: &DenseOperator) -> Result<f64> {
    exact_eval(c, obs, true)
}

fn exact_eval(c: &Circuit, obs: &DenseOperator, expand: bool) -> Result<f64> {
    let comp = compile(c)?;
    check_observable(obs, comp.n)?;
    let mut eval = ExactEval { comp: &comp, obs, expand, acc: 0.0, paths: 0 };
    let mut choices = vec![0usize; comp.groups.len()];
    eval.go(0, 1.0, initial_state(comp.n), &mut choices)?;
    Ok(eval.acc)
}

// ---------------------------------------------------------------------------
// QPS estimator.

struct Leaf {
    /// Cumulative probability (upper edge).
    cum: f64,
    /// `‖a‖₁ · sgn(Πaᵢ) · Πβⱼ`.
    weight: f64,
    /// Exact conditional expectation `tr[O ρ]/tr[ρ]`.
    mean: f64,
    /// Cumulative Born distribution over the observable eigenvalues
    /// (sampled mode only).
    born: Vec<f64>,
}

struct TreeBuilder<'a> {
    comp: &'a Compiled,
    obs: &'a DenseOperator,
    evecs: Option<&'a DenseOperator>,
    leaves: Vec<(f64, f64, f64, Vec<f64>)>,
    total_prob: f64,
}

impl TreeBuilder<'_> {
    fn instrument_branches(
        &mut self,
        idx: usize,
        inst: &CInstr,
        rho: &DenseOperator,
        prob: f64,
        weight: f64,
        choices: &mut Vec<usize>,
    ) -> Result<()> {
        for (chan, beta) in &inst.branches {
            let out = chan.apply(rho);
            if out.trace().re <= 1e-15 {
                continue;
            }
            self.go(idx + 1, out, prob, weight * beta, choices)?;
        }
        Ok(())
    }

    fn go(&mut self, idx: usize, rho: DenseOperator, prob: f64, weight: f64, choices: &mut Vec<usize>) -> Result<()> {
        if idx == self.comp.sites.len() {
            if self.leaves.len() >= PATH_CAP {
                return Err(QknitError::SizeCap(format!("more than {} sampling paths", PATH_CAP)));
            }
            let tr = rho.trace().re;
            let p = prob * tr;
            if p <= 0.0 {
                return Ok(());
            }
            let mean = expectation(self.obs, &rho) / tr;
            let born = match self.evecs {
                None => Vec::new(),
                Some(v) => {
                    let nn = rho.rows;
                    let w = rho.matmul(v);
                    let mut cdf = Vec::with_capacity(nn);
                    let mut acc = 0.0;
                    for k in 0..nn {
                        let mut pk = C::ZERO;
                        for i in 0..nn {
                            pk += v.entries[i * nn + k].conj() * w.entries[i * nn + k];
                        }
                        acc += (pk.re / tr).max(0.0);
                        cdf.push(acc);
                    }
                    cdf
                }
            };
            self.total_prob += p;
            self.leaves.push((p, weight, mean, born));
            return Ok(());
        }
        match &self.comp.sites[idx] {
            CSite::Chan(chan) => self.go(idx + 1, chan.apply(&rho), prob, weight, choices),
            CSite::Instr(inst) => self.instrument_branches(idx, inst, &rho, prob, weight, choices),
            CSite::Qpd { terms, norm } => {
                for (a, inst) in terms {
                    if a.abs() <= 0.0 {
                        continue;
                    }
                    self.instrument_branches(idx, inst, &rho, prob * a.abs() / norm, weight * a.signum(), choices)?;
                }
                Ok(())
            }
            CSite::Stage { group, stage } => {
                let g = &self.comp.groups[*group];
                if *stage == 0 {
                    for t in 0..g.coefficients.len() {
                        let a = g.coefficients[t];
                        if a.abs() <= 0.0 {
                            continue;
                        }
                        choices[*group] = t;
                        self.instrument_branches(
                            idx,
                            &g.instr[t][0],
                            &rho,
                            prob * a.abs() / g.norm,
                            weight * a.signum(),
                            choices,
                        )?;
                    }
                    Ok(())
                } else {
                    let t = choices[*group];
                    self.instrument_branches(idx, &g.instr[t][*stage], &rho, prob, weight, choices)
                }
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(shot)))
}

/// Order-stable pairwise summation of `f(shot)` and `f(shot)²` over
/// `lo..hi`; the split points depend only on the range, so the result is
/// bit-identical for any rayon thread count.
fn pairwise_sums<F: Fn(u64) -> f64 + Sync>(lo: u64, hi: u64, f: &F) -> (f64, f64) {
    const SEQ_BLOCK: u64 = 4096;
    if hi - lo <= SEQ_BLOCK {
        let mut s = 0.0;
        let mut q = 0.0;
        for shot in lo..hi {
            let v = f(shot);
            s += v;
            q += v * v;
        }
        (s, q)
    } else {
        let mid = lo + (hi - lo) / 2;
        let ((s1, q1), (s2, q2)) = rayon::join(|| pairwise_sums(lo, mid, f), || pairwise_sums(mid, hi, f));
        (s1 + s2, q1 + q2)
    }
}

/// The quasiprobability simulation estimator. Per shot: one term per QPD
/// site/group is drawn with probability `|aᵢ|/‖a‖₁`, instrument branches
/// are drawn by the mid-circuit Born rule, and the recorded value is
/// `‖a‖₁ · sgn(Πaᵢ) · Πβⱼ` times either one Born-sampled observable
/// eigenvalue (`Sampled`) or the exact conditional expectation
/// (`Analytic`). Deterministic in `(circuit, obs, shots, seed)` across
/// thread counts.
pub fn qps_estimate(
    c: &Circuit,
    obs: &DenseOperator,
    shots: u64,
    seed: u64,
    mode: EstimateMode,
) -> Result<EstimateReport> {
    if shots == 0 {
        return Err(QknitError::InvalidArgument("shots must be ≥ 1".into()));
    }
    let comp = compile(c)?;
    check_observable(obs, comp.n)?;
    let eig = match mode {
        EstimateMode::Analytic => None,
        EstimateMode::Sampled => Some(eigh(obs)),
    };
    let mut builder = TreeBuilder {
        comp: &comp,
        obs,
        evecs: eig.as_ref().map(|(_, v)| v),
        leaves: Vec::new(),
        total_prob: 0.0,
    };
    let mut choices = vec![0usize; comp.groups.len()];
    builder.go(0, initial_state(comp.n), 1.0, 1.0, &mut choices)?;
    if builder.leaves.is_empty() {
        return Err(QknitError::DegenerateQpd("every sampling path has zero probability".into()));
    }
    let mut leaves: Vec<Leaf> = Vec::with_capacity(builder.leaves.len() + 1);
    let mut cum = 0.0;
    for (p, weight, mean, born) in builder.leaves {
        cum += p;
        leaves.push(Leaf { cum, weight, mean, born });
    }
    // Numerically dropped probability mass becomes a zero-valued sentinel.
    leaves.push(Leaf { cum: f64::INFINITY, weight: 0.0, mean: 0.0, born: Vec::new() });
    let evals = eig.as_ref().map(|(vals, _)| vals.clone()).unwrap_or_default();
    let gamma = comp.one_norm;

    let shot_value = |shot: u64| -> f64 {
        let mut rng = shot_rng(seed, shot);
        let u: f64 = rng.gen::<f64>() * cum.max(1.0);
        let li = leaves.partition_point(|l| l.cum <= u);
        let leaf = &leaves[li.min(leaves.len() - 1)];
        match mode {
            EstimateMode::Analytic => gamma * leaf.weight * leaf.mean,
            EstimateMode::Sampled => {
                if leaf.born.is_empty() {
                    return 0.0;
                }
                let total = *leaf.born.last().unwrap();
                let ub: f64 = rng.gen::<f64>() * total;
                let k = leaf.born.partition_point(|&cp| cp <= ub);
                gamma * leaf.weight * evals[k.min(evals.len() - 1)]
            }
        }
    };
    let (sum, sumsq) = pairwise_sums(0, shots, &shot_value);
    let nf = shots as f64;
    let mean = sum / nf;
    let var = if shots > 1 { ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let stderr = (var / nf).sqrt();
    Ok(EstimateReport {
        mean,
        stderr,
        shots,
        one_norm: gamma,
        hoeffding_eps_at_delta: gamma * (2.0 * (2.0 / HOEFFDING_DELTA).ln() / nf).sqrt(),
        seed,
    })
}

// ---------------------------------------------------------------------------
// Magic-state injection.

/// Rewrite every listed T-gate site into the injection gadget: prepare the
/// magic state `|H⟩ = T|+⟩` on a fresh ancilla, entangle with a CNOT from
/// the ancilla, measure the data qubit in Z with a conditional `S·X` fix-up
/// on the ancilla, and SWAP the qubits back into place. With `use_qpd` the
/// resource preparation is the stabilizer QPD of `|H⟩⟨H|` instead of the
/// ideal state.
pub fn magic_injection_circuit(base: &Circuit, t_sites: &[usize], use_qpd: bool) -> Result<Circuit> {
    for &i in t_sites {
        match base.sites.get(i) {
            Some(Site::Gate { targets, unitary }) if targets.len() == 1 && unitary.max_abs_diff(&t_gate()) < 1e-9 => {}
            _ => {
                return Err(QknitError::InvalidArgument(format!("site {} is not a single-qubit T gate", i)));
            }
        }
    }
    if t_sites.is_empty() {
        return Ok(base.clone());
    }
    let n = base.qubit_count;
    let anc = n;
    let mut out = Circuit::new(n + 1);
    out.groups = base.groups.clone();
    let sx = s_gate().matmul(&pauli_1q(1));
    let fix0 = kron(&DenseOperator::from_fn(2, 2, |r, c_| if r == 0 && c_ == 0 { C::ONE } else { C::ZERO }), &DenseOperator::identity(2))?;
    let fix1 = kron(&DenseOperator::from_fn(2, 2, |r, c_| if r == 0 && c_ == 1 { C::ONE } else { C::ZERO }), &sx)?;
    for (i, site) in base.sites.iter().enumerate() {
        if let Some(_) = t_sites.iter().find(|&&t| t == i) {
            let q = site.targets()[0];
            if use_qpd {
                out.qpd(&[anc], magic_state_qpd());
            } else {
                out.prep(&[anc], magic_state());
            }
            out.gate(&[anc, q], cnot());
            out.channel(
                &[q, anc],
                KrausChannel::new(vec![fix0.clone(), fix1.clone()], SubsystemDims::qubits(2), SubsystemDims::qubits(2))?,
            );
            out.gate(&[q, anc], swap_gate());
        } else {
            out.sites.push(site.clone());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Black-box cutting.

/// The Bell-measurement byproduct compensation sign
/// `f(i,j,α,β) = (−1)^{⟨Qᵢ,Q_α⟩+⟨Qⱼ,Q_α⟩+⟨Qᵢ,Q_β⟩+⟨Qⱼ,Q_β⟩}`; symmetric
/// under `i↔j` and `α↔β`.
pub fn teleport_sign(i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
    assert!(i < 4 && j < 4 && alpha < 4 && beta < 4, "Pauli indices must be in 0..4");
    let parity =
        symplectic(1, i, alpha) ^ symplectic(1, j, alpha) ^ symplectic(1, i, beta) ^ symplectic(1, j, beta);
    if parity & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Joint QPD of `b` Bell pairs laid out as `[eA₀…eA_{b−1}, eB₀…eB_{b−1}]`;
/// 1-norm `2^{b+1} − 1`.
fn joint_bell_qpd(b: usize) -> Result<QuasiDecomposition> {
    let rank = 1usize << b;
    let u = vec![1.0 / (rank as f64).sqrt(); rank];
    let basis: Vec<DenseOperator> = (0..rank).map(|x| basis_state(rank, x)).collect();
    pure_state_sep_qpd_with_bases(&u, &basis, &basis)
}

/// Rewrite every `CutKind::Cnot` marker into the gate-teleportation gadget,
/// consuming one simulated Bell pair per CNOT. Markers are batched greedily
/// in circuit order into factories of `factory_size ∈ {1,2,3}` pairs; each
/// batch shares one joint Bell QPD of 1-norm `2^{b+1}−1`, so the total
/// 1-norm is `(2^{K+1}−1)^{⌈k/K⌉}` for `k` CNOTs in full batches.
pub fn blackbox_clifford_cut(base: &Circuit, factory_size: usize) -> Result<Circuit> {
    if !(1..=3).contains(&factory_size) {
        return Err(QknitError::InvalidArgument(format!("factory size must be 1..=3, got {}", factory_size)));
    }
    let markers: Vec<usize> = base
        .sites
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Site::BlackBoxCut { kind: CutKind::Cnot, .. } => Some(i),
            _ => None,
        })
        .collect();
    for &i in &markers {
        if let Site::BlackBoxCut { targets, gate, .. } = &base.sites[i] {
            if targets.len() != 2 || gate.max_abs_diff(&cnot()) > 1e-9 {
                return Err(QknitError::InvalidArgument(format!("site {}: CNOT cut marker is not a CNOT", i)));
            }
        }
    }
    if markers.is_empty() {
        return Ok(base.clone());
    }
    let n = base.qubit_count;
    let b_max = factory_size.min(markers.len());
    let mut out = Circuit::new(n + 2 * b_max);
    out.groups = base.groups.clone();
    // measure eA in Z, apply X on eB on outcome 1
    let zx_fix = KrausChannel::new(
        vec![
            kron(&projector(&basis_state(2, 0)), &DenseOperator::identity(2))?,
            kron(
                &DenseOperator::from_fn(2, 2, |r, c_| if r == 1 && c_ == 1 { C::ONE } else { C::ZERO }),
                &pauli_1q(1),
            )?,
        ],
        SubsystemDims::qubits(2),
        SubsystemDims::qubits(2),
    )?;
    // measure eB in X, apply Z on the control on outcome −
    let plus = DenseOperator::column(&[cr(FRAC_1_SQRT_2), cr(FRAC_1_SQRT_2)]);
    let minus = DenseOperator::column(&[cr(FRAC_1_SQRT_2), cr(-FRAC_1_SQRT_2)]);
    let xz_fix = KrausChannel::new(
        vec![
            kron(&projector(&plus), &DenseOperator::identity(2))?,
            kron(&projector(&minus), &pauli_1q(3))?,
        ],
        SubsystemDims::qubits(2),
        SubsystemDims::qubits(2),
    )?;
    let batches: Vec<&[usize]> = markers.chunks(factory_size).collect();
    let mut next_batch = 0usize;
    let mut pair_in_batch = 0usize;
    for (i, site) in base.sites.iter().enumerate() {
        let is_marker = markers.contains(&i);
        if is_marker {
            if pair_in_batch == 0 {
                let b = batches[next_batch].len();
                let targets: Vec<usize> =
                    (0..b).map(|p| n + 2 * p).chain((0..b).map(|p| n + 2 * p + 1)).collect();
                out.qpd(&targets, joint_bell_qpd(b)?);
            }
            let (ctrl, tgt) = match site {
                Site::BlackBoxCut { targets, .. } => (targets[0], targets[1]),
                _ => unreachable!(),
            };
            let ea = n + 2 * pair_in_batch;
            let eb = ea + 1;
            out.gate(&[ctrl, ea], cnot());
            out.channel(&[ea, eb], zx_fix.clone());
            out.gate(&[eb, tgt], cnot());
            out.channel(&[eb, ctrl], xz_fix.clone());
            pair_in_batch += 1;
            if pair_in_batch == batches[next_batch].len() {
                next_batch += 1;
                pair_in_batch = 0;
            }
        } else {
            out.sites.push(site.clone());
        }
    }
    Ok(out)
}

fn projector(v: &DenseOperator) -> DenseOperator {
    crate::tensor::projector(v)
}

/// Rewrite every `CutKind::TwoQubit` marker (at most two) into the joint
/// coherent-control protocol: one control qubit per partition side is
/// prepared per sampled term, each cut gate becomes the local selection
/// unitary between its two operator-Schmidt factors, and a final
/// term-independent instrument measures both controls in the X basis with
/// branch weight `s·t`. The single [`QpdGroup`] carries the joint 1-norm
/// `2(Σ_𝐤 u_𝐤)² − Σ_𝐤 u_𝐤²` over the product Schmidt coefficients
/// `u_𝐤 = Πᵢ u^{(i)}_{kᵢ}`, which black-box channels between the gates
/// cannot increase.
pub fn blackbox_twoqubit_cut(base: &Circuit) -> Result<Circuit> {
    let markers: Vec<usize> = base
        .sites
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Site::BlackBoxCut { kind: CutKind::TwoQubit, .. } => Some(i),
            _ => None,
        })
        .collect();
    if markers.is_empty() {
        return Ok(base.clone());
    }
    if markers.len() > 2 {
        return Err(QknitError::SizeCap(format!("at most 2 two-qubit cut markers supported, got {}", markers.len())));
    }
    let n = base.qubit_count;
    let (ca, cb) = (n, n + 1);
    let mut schmidt = Vec::new();
    for &i in &markers {
        if let Site::BlackBoxCut { targets, gate, .. } = &base.sites[i] {
            if targets.len() != 2 || gate.rows != 4 {
                return Err(QknitError::InvalidArgument(format!("site {}: two-qubit cut marker is not 4x4", i)));
            }
            schmidt.push(unitary_schmidt(gate)?);
        }
    }
    let ranks: Vec<usize> = schmidt.iter().map(|(u, _, _)| u.len()).collect();
    let joint: usize = ranks.iter().product();
    let decode = |mut flat: usize| -> Vec<usize> {
        let mut ks = vec![0usize; ranks.len()];
        for m in (0..ranks.len()).rev() {
            ks[m] = flat % ranks[m];
            flat /= ranks[m];
        }
        ks
    };
    let joint_u = |ks: &[usize]| -> f64 { ks.iter().enumerate().map(|(m, &k)| schmidt[m].0[k]).product() };

    let stages = 1 + markers.len();
    // Selection unitary on (control, data): |0⟩⟨0|⊗F[k] + |1⟩⟨1|⊗F[l].
    let selection = |factors: &[DenseOperator], k: usize, l: usize| -> Result<DenseOperator> {
        let p0 = projector(&basis_state(2, 0));
        let p1 = projector(&basis_state(2, 1));
        Ok(kron(&p0, &factors[k])?.add(&kron(&p1, &factors[l])?))
    };
    let control_prep = |phi: f64| -> DenseOperator {
        DenseOperator::column(&[cr(FRAC_1_SQRT_2), Complex64::from_polar(FRAC_1_SQRT_2, -phi)])
    };
    let mut coefficients = Vec::new();
    let mut instruments: Vec<Vec<WeightedInstrument>> = Vec::new();
    let mut push_term = |coeff: f64, ks: &[usize], ls: &[usize], phi: f64| -> Result<()> {
        let mut term = Vec::with_capacity(stages);
        let prep = kron(&control_prep(phi), &control_prep(phi))?;
        term.push(WeightedInstrument::deterministic(prepare_channel(&prep, SubsystemDims::qubits(2))));
        for m in 0..markers.len() {
            let (_, left, right) = &schmidt[m];
            let w = kron(&selection(left, ks[m], ls[m])?, &selection(right, ks[m], ls[m])?)?;
            term.push(WeightedInstrument::deterministic(KrausChannel::unitary(&w, SubsystemDims::qubits(4))?));
        }
        coefficients.push(coeff);
        instruments.push(term);
        Ok(())
    };
    for kf in 0..joint {
        let ks = decode(kf);
        let u = joint_u(&ks);
        push_term(u * u, &ks, &ks, 0.0)?;
    }
    for kf in 0..joint {
        for lf in (kf + 1)..joint {
            let (ks, ls) = (decode(kf), decode(lf));
            let coeff = 2.0 * joint_u(&ks) * joint_u(&ls);
            push_term(coeff, &ks, &ls, 0.0)?;
            push_term(-coeff, &ks, &ls, PI / 2.0)?;
        }
    }
    let group_index = base.groups.len();
    let label = format!("blackbox-twoqubit-{}", markers.len());

    let mut out = Circuit::new(n + 2);
    out.groups = base.groups.clone();
    out.groups.push(QpdGroup { coefficients, instruments, label });
    out.sites.push(Site::GroupStage { targets: vec![ca, cb], group: group_index, stage: 0 });
    let mut stage = 1usize;
    for (i, site) in base.sites.iter().enumerate() {
        if markers.contains(&i) {
            let (a, b) = match site {
                Site::BlackBoxCut { targets, .. } => (targets[0], targets[1]),
                _ => unreachable!(),
            };
            out.sites.push(Site::GroupStage { targets: vec![ca, a, cb, b], group: group_index, stage });
            stage += 1;
        } else {
            out.sites.push(site.clone());
        }
    }
    // Final weighted X-basis readout of both controls (branch weight s·t).
    let plus = DenseOperator::column(&[cr(FRAC_1_SQRT_2), cr(FRAC_1_SQRT_2)]);
    let minus = DenseOperator::column(&[cr(FRAC_1_SQRT_2), cr(-FRAC_1_SQRT_2)]);
    let reset = |v: &DenseOperator| -> DenseOperator {
        DenseOperator::from_fn(2, 2, |r, c_| if r == 0 { v.entries[c_].conj() } else { C::ZERO })
    };
    let mut branches = Vec::new();
    for (s, vs) in [(1.0, &plus), (-1.0, &minus)] {
        for (t, vt) in [(1.0, &plus), (-1.0, &minus)] {
            let k = kron(&reset(vs), &reset(vt))?;
            branches.push((KrausChannel::new(vec![k], SubsystemDims::qubits(2), SubsystemDims::qubits(2))?, s * t));
        }
    }
    out.instrument(&[ca, cb], WeightedInstrument::new(branches)?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Circuit JSON.

/// Look up a gate matrix from the fixed name table; rotation gates take the
/// angle in radians.
pub fn gate_by_name(name: &str, theta: Option<f64>) -> Result<DenseOperator> {
    let need_theta = || theta.ok_or_else(|| QknitError::ParseError(format!("gate {} requires \"theta\"", name)));
    Ok(match name {
        "I" => DenseOperator::identity(2),
        "X" => pauli_1q(1),
        "Y" => pauli_1q(2),
        "Z" => pauli_1q(3),
        "H" => hadamard(),
        "S" => s_gate(),
        "Sdg" => s_gate().dagger(),
        "T" => t_gate(),
        "Tdg" => t_gate().dagger(),
        "CNOT" => cnot(),
        "SWAP" => swap_gate(),
        "iSWAP" => iswap_gate(),
        "CR" => cr_gate(need_theta()?),
        "RXX" => rotation_pp(1, need_theta()?),
        "RYY" => rotation_pp(2, need_theta()?),
        "RZZ" => rotation_pp(3, need_theta()?),
        _ => return Err(QknitError::ParseError(format!("unknown gate name {:?}", name))),
    })
}

fn infer_dims(d: usize) -> SubsystemDims {
    if d == 1 {
        SubsystemDims::trivial()
    } else if d.is_power_of_two() {
        SubsystemDims::qubits(d.trailing_zeros() as usize)
    } else {
        SubsystemDims::new(vec![d])
    }
}

fn json_matrix(v: &serde_json::Value, what: &str) -> Result<DenseOperator> {
    let rows = v
        .as_array()
        .ok_or_else(|| QknitError::ParseError(format!("{} must be an array of rows", what)))?;
    let mut entries = Vec::new();
    let mut cols = None;
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| QknitError::ParseError(format!("{} rows must be arrays", what)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(w) if w == row.len() => {}
            _ => return Err(QknitError::ParseError(format!("{} rows have unequal lengths", what))),
        }
        for z in row {
            let pair = z
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| QknitError::ParseError(format!("{} entries must be [re, im]", what)))?;
            let re = pair[0].as_f64().ok_or_else(|| QknitError::ParseError(format!("{}: non-numeric entry", what)))?;
            let im = pair[1].as_f64().ok_or_else(|| QknitError::ParseError(format!("{}: non-numeric entry", what)))?;
            entries.push(c(re, im));
        }
    }
    let cols = cols.unwrap_or(0);
    if entries.is_empty() {
        return Err(QknitError::ParseError(format!("{} is empty", what)));
    }
    Ok(DenseOperator { rows: rows.len(), cols, entries })
}

fn json_column(v: &serde_json::Value, what: &str) -> Result<DenseOperator> {
    let arr = v
        .as_array()
        .ok_or_else(|| QknitError::ParseError(format!("{} must be an array of [re, im]", what)))?;
    let mut amps = Vec::with_capacity(arr.len());
    for z in arr {
        let pair = z
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| QknitError::ParseError(format!("{} entries must be [re, im]", what)))?;
        let re = pair[0].as_f64().ok_or_else(|| QknitError::ParseError(format!("{}: non-numeric entry", what)))?;
        let im = pair[1].as_f64().ok_or_else(|| QknitError::ParseError(format!("{}: non-numeric entry", what)))?;
        amps.push(c(re, im));
    }
    Ok(DenseOperator::column(&amps))
}

fn json_gate(payload: &serde_json::Value, what: &str) -> Result<DenseOperator> {
    if let Some(name) = payload.get("name").and_then(|v| v.as_str()) {
        let theta = payload.get("theta").and_then(|v| v.as_f64());
        gate_by_name(name, theta)
    } else if let Some(m) = payload.get("matrix") {
        json_matrix(m, what)
    } else {
        Err(QknitError::ParseError(format!("{} needs \"name\" or \"matrix\"", what)))
    }
}

fn json_kraus_channel(payload: &serde_json::Value, what: &str) -> Result<KrausChannel> {
    let list = payload
        .get("kraus")
        .and_then(|v| v.as_array())
        .ok_or_else(|| QknitError::ParseError(format!("{} needs a \"kraus\" array", what)))?;
    let ops = list
        .iter()
        .map(|m| json_matrix(m, what))
        .collect::<Result<Vec<_>>>()?;
    let first = ops
        .first()
        .ok_or_else(|| QknitError::ParseError(format!("{}: empty Kraus list", what)))?;
    let (d_out, d_in) = (first.rows, first.cols);
    KrausChannel::new(ops, infer_dims(d_in), infer_dims(d_out))
}

/// Parse the circuit JSON schema
/// `{"qubits": n, "sites": [{"kind": …, "targets": […], "payload": …}]}`.
pub fn circuit_from_json(s: &str) -> Result<Circuit> {
    let doc: serde_json::Value =
        serde_json::from_str(s).map_err(|e| QknitError::ParseError(format!("invalid JSON: {}", e)))?;
    let qubits = doc
        .get("qubits")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| QknitError::ParseError("missing integer \"qubits\"".into()))? as usize;
    let sites = doc
        .get("sites")
        .and_then(|v| v.as_array())
        .ok_or_else(|| QknitError::ParseError("missing \"sites\" array".into()))?;
    let mut circuit = Circuit::new(qubits);
    for (idx, site) in sites.iter().enumerate() {
        let err = |msg: String| QknitError::ParseError(format!("site {}: {}", idx, msg));
        let kind = site
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| err("missing \"kind\"".into()))?;
        let targets: Vec<usize> = site
            .get("targets")
            .and_then(|v| v.as_array())
            .ok_or_else(|| err("missing \"targets\"".into()))?
            .iter()
            .map(|t| t.as_u64().map(|x| x as usize).ok_or_else(|| err("non-integer target".into())))
            .collect::<Result<Vec<_>>>()?;
        let payload = site.get("payload").unwrap_or(&serde_json::Value::Null);
        let what = format!("site {}", idx);
        match kind {
            "prep" => {
                let state = payload
                    .get("state")
                    .ok_or_else(|| err("prep needs \"state\"".into()))
                    .and_then(|v| json_column(v, &what))?;
                circuit.prep(&targets, state);
            }
            "gate" => {
                let g = json_gate(payload, &what).map_err(|e| err(e.to_string()))?;
                circuit.gate(&targets, g);
            }
            "channel" => {
                let chan = json_kraus_channel(payload, &what).map_err(|e| err(e.to_string()))?;
                circuit.channel(&targets, chan);
            }
            "qpd" => {
                let text = serde_json::to_string(payload).expect("re-serialize payload");
                let qpd = QuasiDecomposition::from_json(&text).map_err(|e| err(e.to_string()))?;
                circuit.qpd(&targets, qpd);
            }
            "instrument" => {
                let list = payload
                    .get("branches")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| err("instrument needs \"branches\"".into()))?;
                let mut branches = Vec::new();
                for b in list {
                    let chan = json_kraus_channel(b, &what).map_err(|e| err(e.to_string()))?;
                    let w = b
                        .get("weight")
                        .and_then(|v| v.as_f64())
                        .ok_or_else(|| err("branch needs numeric \"weight\"".into()))?;
                    branches.push((chan, w));
                }
                let inst = WeightedInstrument::new(branches).map_err(|e| err(e.to_string()))?;
                circuit.instrument(&targets, inst);
            }
            "blackbox_cut" => {
                let g = json_gate(payload, &what).map_err(|e| err(e.to_string()))?;
                let kind = match payload.get("cut").and_then(|v| v.as_str()) {
                    Some("cnot") => CutKind::Cnot,
                    Some("twoqubit") => CutKind::TwoQubit,
                    other => return Err(err(format!("unknown cut kind {:?}", other))),
                };
                circuit.blackbox_cut(&targets, g, kind);
            }
            other => return Err(err(format!("unknown site kind {:?}", other))),
        }
    }
    Ok(circuit)
}
