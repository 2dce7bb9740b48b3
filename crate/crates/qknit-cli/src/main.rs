//! `qknit` — quasiprobability decompositions, extents, and circuit
//! estimation from the command line.
//!
//! | Command | Output |
//! |---------|--------|
//! | `extent` | LP extent γ of a target over a decomposition set (JSON) |
//! | `decompose` | a catalog QPD with its validation residual (JSON) |
//! | `estimate` | QPS estimate of an observable on a circuit file (JSON) |
//! | `sweep` | parameter grids as regression-diffable CSV |
//!
//! Exit codes: 0 success, 1 domain error, 2 usage/parse error, 3 resource
//! cap. The RNG seed (flag, else `QKNIT_SEED`, else 0) is recorded in every
//! output; reruns with the same seed are byte-identical apart from the
//! `wall_time_ms` field.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use qknit::catalog::{
    cr_gate, magic_state, magic_state_qpd, pure_state_sep_qpd, rotation_pp, t_gate_qpd, transpose_qpd,
    two_qubit_gate_qpd, unot_qpd, wirecut_ebc_qpd, wirecut_mpc_qpd,
};
use qknit::channels::{choi_of, pauli_diagonal_inverse, prepare_channel, ChoiOperator, KrausChannel};
use qknit::engine::{
    blackbox_clifford_cut, blackbox_twoqubit_cut, circuit_from_json, exact_expectation, gate_by_name, qps_estimate,
    Circuit, CutKind, EstimateMode, Site,
};
use qknit::extent::{clifford_channels_1q, lp_extent, stabilizer_states, DecompositionSet, LPStatus};
use qknit::qpd::QuasiDecomposition;
use qknit::tensor::{kron, pauli_string, trace_norm, DenseOperator, SubsystemDims};
use qknit::{QknitError, Result};

#[derive(Parser)]
#[command(name = "qknit", version, about = "Quasiprobability decomposition toolkit")]
struct Cli {
    /// RNG seed (fallback: QKNIT_SEED env var, then 0); recorded in output
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for shot parallelism (default: machine parallelism;
    /// 1 does not change results)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// LP extent of a target over a decomposition set
    Extent(ExtentArgs),
    /// Emit a catalog QPD as JSON with its validation residual
    Decompose(DecomposeArgs),
    /// QPS-estimate an observable on a circuit JSON file
    Estimate(EstimateArgs),
    /// Parameter sweeps as CSV (param, gamma_closed_form,
    /// gamma_lp_or_reconstructed, residual)
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ExtentArgs {
    /// Gate name (I, X, …, T), H_state, ptm:<comma diagonal>, or
    /// choi:<file> (JSON: {"qubits_in": n, "qubits_out": n, "matrix": rows
    /// of [re, im] pairs})
    #[arg(long)]
    target: String,
    /// clifford1q | stab1 | stab2 | pauli | endo16 | custom:<QPD JSON file>
    #[arg(long)]
    set: String,
    /// Also print the achieving coefficient vector
    #[arg(long)]
    coefficients: bool,
    /// Angle for parametric gate targets
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// t | magic_state | pure_state | cnot | swap | iswap | cr | rxx | ryy
    /// | rzz | wirecut_mpc | wirecut_ebc | transpose | unot
    /// | depolarizing_inverse
    #[arg(long)]
    kind: String,
    /// Qubit count (wirecut_mpc)
    #[arg(long)]
    n: Option<usize>,
    /// Local dimension (wirecut_ebc, transpose)
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated Schmidt coefficients (pure_state)
    #[arg(long)]
    schmidt: Option<String>,
    /// Gate angle in radians (cr, rxx, ryy, rzz)
    #[arg(long)]
    theta: Option<f64>,
    /// Depolarizing strength (depolarizing_inverse)
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Circuit JSON file
    #[arg(long)]
    circuit: PathBuf,
    /// Observable as a Pauli string over the circuit qubits, e.g. ZZ or XI
    #[arg(long)]
    obs: String,
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    /// sampled | analytic
    #[arg(long, default_value = "analytic")]
    mode: String,
    /// Entanglement-factory size for CNOT cut markers
    #[arg(long, default_value_t = 1)]
    factory_size: usize,
    /// Also compute the exact expectation and the deviation
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// depolarizing | cr | factory
    #[arg(long)]
    kind: String,
    /// Grid point count (cr)
    #[arg(long, default_value_t = 20)]
    points: usize,
}

/// Usage-level failures (unknown names, missing parameters): exit code 2.
struct Usage(String);

enum CmdError {
    Usage(String),
    Domain(QknitError),
}

impl From<QknitError> for CmdError {
    fn from(e: QknitError) -> Self {
        CmdError::Domain(e)
    }
}

impl From<Usage> for CmdError {
    fn from(u: Usage) -> Self {
        CmdError::Usage(u.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(1);
        }
    }
    let seed = cli
        .seed
        .or_else(|| std::env::var("QKNIT_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    let out = match &cli.command {
        Command::Extent(a) => cmd_extent(a, seed),
        Command::Decompose(a) => cmd_decompose(a, seed),
        Command::Estimate(a) => cmd_estimate(a, seed),
        Command::Sweep(a) => cmd_sweep(a, seed),
    };
    match out {
        Ok(text) => {
            let payload = if text.ends_with('\n') { text } else { format!("{}\n", text) };
            match &cli.output {
                Some(path) => {
                    if let Err(e) = fs::write(path, &payload) {
                        eprintln!("error: cannot write {}: {}", path.display(), e);
                        return ExitCode::from(1);
                    }
                }
                None => print!("{}", payload),
            }
            ExitCode::SUCCESS
        }
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
        Err(CmdError::Domain(e)) => {
            eprintln!("error: {}", e);
            let code = match e {
                QknitError::ParseError(_) => 2,
                QknitError::SizeCap(_) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

/// 12 significant digits, '.' decimal, positional notation.
fn fmt12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{}", v);
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    format!("{:.*}", decimals, v)
}

fn choi_from_ptm_diag(m: &[f64]) -> Result<ChoiOperator> {
    let mut n = 0usize;
    let mut acc = 1usize;
    while acc < m.len() {
        acc *= 4;
        n += 1;
    }
    if acc != m.len() {
        return Err(QknitError::InvalidArgument(format!("PTM diagonal length {} is not a power of 4", m.len())));
    }
    let d = 1usize << n;
    let mut choi = DenseOperator::zeros(d * d, d * d);
    for (i, &mi) in m.iter().enumerate() {
        let p = pauli_string(n, i);
        let term = kron(&p.transpose(), &p)?.scale(Complex64::new(mi / (d * d) as f64, 0.0));
        choi = choi.add(&term);
    }
    Ok(ChoiOperator { matrix: choi, dims_in: SubsystemDims::qubits(n), dims_out: SubsystemDims::qubits(n) })
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, Usage> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Usage(format!("cannot parse number {:?}", t))))
        .collect()
}

fn extent_target(spec: &ExtentArgs) -> std::result::Result<ChoiOperator, CmdError> {
    if spec.target == "H_state" {
        let state = magic_state();
        return Ok(ChoiOperator {
            matrix: state.matmul(&state.dagger()),
            dims_in: SubsystemDims::trivial(),
            dims_out: SubsystemDims::qubits(1),
        });
    }
    if let Some(diag) = spec.target.strip_prefix("ptm:") {
        return Ok(choi_from_ptm_diag(&parse_floats(diag)?)?);
    }
    if let Some(path) = spec.target.strip_prefix("choi:") {
        let text = fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read {}: {}", path, e)))?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CmdError::Domain(QknitError::ParseError(format!("invalid Choi JSON: {}", e))))?;
        let get_n = |key: &str| {
            doc.get(key)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| CmdError::Domain(QknitError::ParseError(format!("missing integer {:?}", key))))
        };
        let (n_in, n_out) = (get_n("qubits_in")? as usize, get_n("qubits_out")? as usize);
        let rows = doc
            .get("matrix")
            .and_then(|v| v.as_array())
            .ok_or_else(|| CmdError::Domain(QknitError::ParseError("missing \"matrix\"".into())))?;
        let dim = rows.len();
        let mut m = DenseOperator::zeros(dim, dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row
                .as_array()
                .filter(|r| r.len() == dim)
                .ok_or_else(|| CmdError::Domain(QknitError::ParseError("matrix rows must be square".into())))?;
            for (j, z) in row.iter().enumerate() {
                let pair = z.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                    CmdError::Domain(QknitError::ParseError("matrix entries must be [re, im]".into()))
                })?;
                let re = pair[0].as_f64().unwrap_or(f64::NAN);
                let im = pair[1].as_f64().unwrap_or(f64::NAN);
                m.set(i, j, Complex64::new(re, im));
            }
        }
        return Ok(ChoiOperator {
            matrix: m,
            dims_in: SubsystemDims::qubits(n_in),
            dims_out: SubsystemDims::qubits(n_out),
        });
    }
    match gate_by_name(&spec.target, spec.theta) {
        Ok(g) => {
            let n = g.rows.trailing_zeros() as usize;
            Ok(choi_of(&KrausChannel::unitary(&g, SubsystemDims::qubits(n))?))
        }
        Err(_) => Err(Usage(format!("unknown target {:?}", spec.target)).into()),
    }
}

fn extent_set(name: &str) -> std::result::Result<DecompositionSet, CmdError> {
    match name {
        "clifford1q" => Ok(clifford_channels_1q()),
        "stab1" => Ok(stabilizer_states(1)?),
        "stab2" => Ok(stabilizer_states(2)?),
        "pauli" => {
            let dims = SubsystemDims::qubits(1);
            let elements = (0..4)
                .map(|i| {
                    qknit::channels::WeightedInstrument::deterministic(
                        KrausChannel::unitary(&qknit::tensor::pauli_1q(i), dims.clone()).unwrap(),
                    )
                })
                .collect();
            Ok(DecompositionSet { elements, label: "pauli-1q".into() })
        }
        "endo16" => Ok(DecompositionSet { elements: qknit::catalog::modified_endo_basis(), label: "endo-16".into() }),
        other => {
            if let Some(path) = other.strip_prefix("custom:") {
                let text = fs::read_to_string(path)
                    .map_err(|e| Usage(format!("cannot read {}: {}", path, e)))?;
                let qpd = QuasiDecomposition::from_json(&text)?;
                let elements = qpd.terms.into_iter().map(|(_, inst)| inst).collect();
                Ok(DecompositionSet { elements, label: format!("custom:{}", path) })
            } else {
                Err(Usage(format!("unknown set {:?}", other)).into())
            }
        }
    }
}

fn cmd_extent(args: &ExtentArgs, seed: u64) -> std::result::Result<String, CmdError> {
    let target = extent_target(args)?;
    let set = extent_set(&args.set)?;
    let result = lp_extent(&target, &set, 1e-9)?;
    let status = match result.status {
        LPStatus::Optimal => "optimal",
        LPStatus::Infeasible => "infeasible",
    };
    let mut doc = json!({
        "target": args.target,
        "set": args.set,
        "set_size": set.elements.len(),
        "gamma": result.gamma,
        "status": status,
        "seed": seed,
    });
    if args.coefficients {
        doc["coefficients"] = json!(result.coefficients);
    }
    Ok(serde_json::to_string_pretty(&doc).expect("json"))
}

fn gate_choi(g: &DenseOperator) -> Result<ChoiOperator> {
    let n = g.rows.trailing_zeros() as usize;
    Ok(choi_of(&KrausChannel::unitary(g, SubsystemDims::qubits(n))?))
}

fn cmd_decompose(args: &DecomposeArgs, seed: u64) -> std::result::Result<String, CmdError> {
    let need = |opt: Option<f64>, name: &str| opt.ok_or_else(|| Usage(format!("--{} is required for this kind", name)));
    let (qpd, target): (QuasiDecomposition, ChoiOperator) = match args.kind.as_str() {
        "t" => (t_gate_qpd(), gate_choi(&qknit::tensor::t_gate())?),
        "magic_state" => {
            let state = magic_state();
            let target = choi_of(&prepare_channel(&state, SubsystemDims::trivial()));
            (magic_state_qpd(), target)
        }
        "pure_state" => {
            let mut u =
                parse_floats(args.schmidt.as_deref().ok_or_else(|| Usage("--schmidt is required".into()))?)?;
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Usage("Schmidt coefficients must have positive norm".into()).into());
            }
            u.iter_mut().for_each(|x| *x /= norm);
            let r = u.len();
            let mut psi = DenseOperator::zeros(r * r, 1);
            for (k, &uk) in u.iter().enumerate() {
                psi.set(k * r + k, 0, Complex64::new(uk, 0.0));
            }
            let target = choi_of(&prepare_channel(&psi, SubsystemDims::trivial()));
            (pure_state_sep_qpd(&u)?, target)
        }
        "cnot" => (two_qubit_gate_qpd(&qknit::tensor::cnot())?, gate_choi(&qknit::tensor::cnot())?),
        "swap" => (two_qubit_gate_qpd(&qknit::tensor::swap_gate())?, gate_choi(&qknit::tensor::swap_gate())?),
        "iswap" => (two_qubit_gate_qpd(&qknit::tensor::iswap_gate())?, gate_choi(&qknit::tensor::iswap_gate())?),
        "cr" => {
            let g = cr_gate(need(args.theta, "theta")?);
            (two_qubit_gate_qpd(&g)?, gate_choi(&g)?)
        }
        "rxx" | "ryy" | "rzz" => {
            let p = match args.kind.as_str() {
                "rxx" => 1,
                "ryy" => 2,
                _ => 3,
            };
            let g = rotation_pp(p, need(args.theta, "theta")?);
            (two_qubit_gate_qpd(&g)?, gate_choi(&g)?)
        }
        "wirecut_mpc" => {
            let n = args.n.ok_or_else(|| Usage("--n is required".into()))?;
            let dims = SubsystemDims::qubits(n);
            (wirecut_mpc_qpd(n)?, choi_of(&KrausChannel::identity(dims)))
        }
        "wirecut_ebc" => {
            let d = args.d.ok_or_else(|| Usage("--d is required".into()))?;
            let dims = SubsystemDims::new(vec![d]);
            (wirecut_ebc_qpd(d)?, choi_of(&KrausChannel::identity(dims)))
        }
        "transpose" => {
            let d = args.d.ok_or_else(|| Usage("--d is required".into()))?;
            let target = ChoiOperator {
                matrix: qknit::catalog::swap_operator(d).scale(Complex64::new(1.0 / d as f64, 0.0)),
                dims_in: SubsystemDims::new(vec![d]),
                dims_out: SubsystemDims::new(vec![d]),
            };
            (transpose_qpd(d)?, target)
        }
        "unot" => (unot_qpd(), choi_from_ptm_diag(&[1.0, -1.0, -1.0, -1.0])?),
        "depolarizing_inverse" => {
            let p = need(args.p, "p")?;
            let m = [1.0, 1.0 - p, 1.0 - p, 1.0 - p];
            let (coeffs, gamma) = pauli_diagonal_inverse(&m)?;
            let dims = SubsystemDims::qubits(1);
            let terms = coeffs
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let chan = KrausChannel::unitary(&qknit::tensor::pauli_1q(i), dims.clone())?;
                    Ok((a, qknit::channels::WeightedInstrument::deterministic(chan)))
                })
                .collect::<Result<Vec<_>>>()?;
            let inv_diag: Vec<f64> = m.iter().map(|&x| 1.0 / x).collect();
            let qpd = QuasiDecomposition::new(terms, "depolarizing-inverse").with_gamma(gamma);
            (qpd, choi_from_ptm_diag(&inv_diag)?)
        }
        other => return Err(Usage(format!("unknown kind {:?}", other)).into()),
    };
    let report = qpd.validate(&target, 1e-8);
    let qpd_json: serde_json::Value = serde_json::from_str(&qpd.to_json()).expect("qpd json");
    let doc = json!({
        "kind": args.kind,
        "term_count": qpd.terms.len(),
        "one_norm": qpd.one_norm(),
        "residual": report.residual,
        "signed_sum": report.signed_sum,
        "qpd": qpd_json,
        "seed": seed,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("json"))
}

fn parse_obs(s: &str, n: usize) -> std::result::Result<DenseOperator, CmdError> {
    if s.len() != n {
        return Err(Usage(format!("observable {:?} must have one Pauli letter per qubit ({})", s, n)).into());
    }
    let mut index = 0usize;
    for ch in s.chars() {
        let digit = match ch {
            'I' => 0,
            'X' => 1,
            'Y' => 2,
            'Z' => 3,
            _ => return Err(Usage(format!("unknown Pauli letter {:?}", ch)).into()),
        };
        index = index * 4 + digit;
    }
    Ok(pauli_string(n, index))
}

fn cmd_estimate(args: &EstimateArgs, seed: u64) -> std::result::Result<String, CmdError> {
    let text = fs::read_to_string(&args.circuit)
        .map_err(|e| QknitError::ParseError(format!("cannot read {}: {}", args.circuit.display(), e)))?;
    let base = circuit_from_json(&text)?;
    let obs = parse_obs(&args.obs, base.qubit_count)?;
    let mode = match args.mode.as_str() {
        "sampled" => EstimateMode::Sampled,
        "analytic" => EstimateMode::Analytic,
        other => return Err(Usage(format!("unknown mode {:?} (sampled | analytic)", other)).into()),
    };
    let has_kind = |kind: CutKind| {
        base.sites
            .iter()
            .any(|s| matches!(s, Site::BlackBoxCut { kind: k, .. } if *k == kind))
    };
    let mut circuit: Circuit = base.clone();
    if has_kind(CutKind::TwoQubit) {
        circuit = blackbox_twoqubit_cut(&circuit)?;
    }
    if has_kind(CutKind::Cnot) {
        circuit = blackbox_clifford_cut(&circuit, args.factory_size)?;
    }
    let full_obs = if circuit.qubit_count > base.qubit_count {
        kron(&obs, &DenseOperator::identity(1 << (circuit.qubit_count - base.qubit_count)))?
    } else {
        obs.clone()
    };
    let start = Instant::now();
    let report = qps_estimate(&circuit, &full_obs, args.shots, seed, mode)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut doc = json!({
        "mean": report.mean,
        "stderr": report.stderr,
        "shots": report.shots,
        "one_norm": report.one_norm,
        "hoeffding_eps_at_delta": report.hoeffding_eps_at_delta,
        "seed": report.seed,
        "mode": args.mode,
        "wall_time_ms": wall_ms,
    });
    if args.oracle {
        let exact = exact_expectation(&base, &obs)?;
        doc["exact"] = json!(exact);
        doc["deviation"] = json!(report.mean - exact);
    }
    Ok(serde_json::to_string_pretty(&doc).expect("json"))
}

fn cmd_sweep(args: &SweepArgs, _seed: u64) -> std::result::Result<String, CmdError> {
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    match args.kind.as_str() {
        "depolarizing" => {
            for i in 0..10 {
                let p = i as f64 / 10.0;
                let closed = (1.0 + p / 2.0) / (1.0 - p);
                let m = [1.0, 1.0 - p, 1.0 - p, 1.0 - p];
                let (_, gamma) = pauli_diagonal_inverse(&m)?;
                rows.push((p, closed, gamma, (closed - gamma).abs()));
            }
        }
        "cr" => {
            let n = args.points.max(2);
            for i in 0..n {
                let theta = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                let closed = 1.0 + 2.0 * (theta / 2.0).sin();
                let g = cr_gate(theta);
                let qpd = two_qubit_gate_qpd(&g)?;
                let residual = trace_norm(&qpd.reconstruct().matrix.sub(&gate_choi(&g)?.matrix));
                rows.push((theta, closed, qpd.one_norm(), residual));
            }
        }
        "factory" => {
            let k_gates = 6usize;
            for cap in 1..=3usize {
                let per_gate = ((1u64 << (cap + 1)) - 1) as f64;
                let closed = per_gate.powf(1.0 / cap as f64);
                let mut base = Circuit::new(2);
                for _ in 0..k_gates {
                    base.blackbox_cut(&[0, 1], qknit::tensor::cnot(), CutKind::Cnot);
                }
                let cut = blackbox_clifford_cut(&base, cap)?;
                let effective = cut.one_norm().powf(1.0 / k_gates as f64);
                rows.push((cap as f64, closed, effective, (closed - effective).abs()));
            }
        }
        other => return Err(Usage(format!("unknown sweep kind {:?}", other)).into()),
    }
    let mut csv = String::from("param,gamma_closed_form,gamma_lp_or_reconstructed,residual\n");
    for (p, a, b, r) in rows {
        csv.push_str(&format!("{},{},{},{}\n", fmt12(p), fmt12(a), fmt12(b), fmt12(r)));
    }
    Ok(csv)
}
