//! `rsep`: command-line front end for building generalized-separable PEPS,
//! certifying them, sampling the local hidden variable model and checking
//! the samples against brute-force quantum statistics.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or validation
//! error, 3 positivity violation or failed verification, 4 instance not
//! trace-factorizable.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rsep_core::basis::{gram_error, verify_decomposition, OperatorBasis, VirtualSpaceTag};
use rsep_core::config::{
    anchor_from_name, read_json, resolve_basis, resolve_measurements, resolve_state, write_json, BasisFile,
    InstanceConfig, InstanceSpec, LatticeFile, MapSpec, Overrides, PlanFile, RecipeTag, Ref,
};
use rsep_core::decomposition::{
    class_tables, edge_distribution_from_tables, max_epsilon_search, reconstruct_mixture, rv_positivity_from_tables,
    trace_factorization, PositivityOutcome,
};
use rsep_core::dual::{admissible_povm, dual_margin, unflatten, Povm};
use rsep_core::lattice::Lattice;
use rsep_core::linalg::HermitianOperator;
use rsep_core::oracle::{
    conditional_independence_test, frequency_test, instance_joint_distribution, max_deviation,
    mixture_joint_distribution, tv_distance, DEFAULT_CONFIDENCE,
};
use rsep_core::peps::{assemble_exact_state, choi_check, entanglement_certificate, PepsInstance};
use rsep_core::sampling::{read_shots, run_shots, write_shots, MeasurementPlan, Sampler};
use rsep_core::Error;

/// Exact-equality tolerance for mixture verification.
const EXACT_TOL: f64 = 1e-10;

/// Largest physical dimension for which `peps check` also assembles the state.
const ASSEMBLY_LIMIT: f64 = 65536.0;

/// Largest tuple count for which `dual admissible` lists every value.
const VALUE_LIST_LIMIT: usize = 4096;

#[derive(Parser)]
#[command(name = "rsep", version, about = "Generalized-separable PEPS and their local hidden variable sampler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator bases for the bond decomposition.
    #[command(subcommand)]
    Basis(BasisCmd),
    /// Dual-set margins and admissibility.
    #[command(subcommand)]
    Dual(DualCmd),
    /// Lattice generators.
    #[command(subcommand)]
    Lattice(LatticeCmd),
    /// Build, certify and tune PEPS instances.
    #[command(subcommand)]
    Peps(PepsCmd),
    /// Sample shots from the hidden variable model as JSON lines.
    Sample(SampleArgs),
    /// Compare the mixture or the sampler against exact statistics.
    Verify(VerifyArgs),
    /// Time the sampler across lattice sizes.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum BasisCmd {
    Gen {
        /// Bond dimension of an aligned basis.
        #[arg(long = "D", default_value_t = 2)]
        bond_dim: usize,
        /// Anchor state: zero or plus-diag.
        #[arg(long, default_value = "zero")]
        anchor: String,
        /// Emit the qubit phase-point basis instead.
        #[arg(long)]
        phase_point: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Verify {
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum DualCmd {
    /// Margin of a pure state against a measurement set.
    Margin {
        #[arg(long)]
        state: String,
        #[arg(long)]
        measurements: String,
    },
    /// Extreme-point admissibility of one POVM for a head/tail pattern.
    Admissible {
        #[arg(long)]
        measurements: String,
        #[arg(long)]
        povm: String,
        #[arg(long, default_value = "phase_point")]
        basis: String,
        /// One letter per virtual particle: h (head) or t (tail).
        #[arg(long, default_value = "ht")]
        pattern: String,
    },
}

#[derive(Subcommand)]
enum LatticeCmd {
    Gen {
        /// chain:N, cycle:N or torus:LxxLy.
        #[arg(long)]
        shape: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PepsCmd {
    /// Write an instance file after validating that it builds.
    Build(BuildArgs),
    /// Complete positivity, (R,V)-positivity and factorization report.
    Check {
        instance: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bracket the largest ε that keeps the instance positive.
    EpsilonMax {
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps_hi: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    lattice: String,
    /// 1, 2 or identity.
    #[arg(long)]
    recipe: String,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    measurements: String,
    /// Interior state (shorthand, file or omitted for identity maps).
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Workers {
    /// Worker threads (0 = all cores).
    #[arg(long, env = "RSEP_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SampleArgs {
    instance: PathBuf,
    /// Plan file, or uniform:<label>.
    #[arg(long)]
    plan: String,
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    emit_hidden: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mixture,
    Sampler,
    Independence,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    #[arg(long)]
    plan: String,
    #[arg(long, value_enum, default_value = "mixture")]
    mode: Mode,
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use previously sampled JSONL shots instead of sampling.
    #[arg(long)]
    shots_file: Option<PathBuf>,
    /// Threshold multiplier k in k·√(K/n).
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
    /// Smallest hidden-assignment group tested for independence.
    #[arg(long, default_value_t = 2000)]
    min_group: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args)]
struct BenchArgs {
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    sites: Vec<usize>,
    #[arg(long)]
    plan: String,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

enum Outcome {
    Ok,
    /// A failed check that is not an error in the input.
    Fail(Value),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Basis(c) => basis(c),
        Command::Dual(c) => dual(c),
        Command::Lattice(c) => lattice(c),
        Command::Peps(c) => peps(c),
        Command::Sample(a) => sample(a).map(|()| Outcome::Ok),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(report)) => {
            eprintln!("check failed: {report}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::Positivity(_) => 3,
        Error::NotFactorizable { .. } => 4,
        _ => 2,
    }
}

fn emit(value: &Value, out: Option<&Path>) -> rsep_core::Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn finish(report: Value, pass: bool, out: Option<&Path>) -> rsep_core::Result<Outcome> {
    emit(&report, out)?;
    Ok(if pass { Outcome::Ok } else { Outcome::Fail(report) })
}

fn here() -> PathBuf {
    PathBuf::from(".")
}

fn init_workers(w: &Workers) {
    if w.workers > 0 {
        // A second initialization only happens in tests that call main twice; ignore it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.workers).build_global();
    }
}

fn basis(cmd: BasisCmd) -> rsep_core::Result<Outcome> {
    match cmd {
        BasisCmd::Gen {
            bond_dim,
            anchor,
            phase_point,
            out,
        } => {
            let b = if phase_point {
                OperatorBasis::phase_point()
            } else {
                OperatorBasis::aligned(bond_dim, anchor_from_name(&anchor, bond_dim)?)?
            };
            let file = serde_json::to_value(BasisFile::from_basis(&b))?;
            emit(&file, out.as_deref())?;
            Ok(Outcome::Ok)
        }
        BasisCmd::Verify { file } => {
            let raw: BasisFile = read_json(&file)?;
            let b = raw.to_basis()?;
            let err = verify_decomposition(&b);
            let overlaps = b.anchor_overlaps();
            let min_overlap = overlaps.as_ref().map(|o| o.iter().cloned().fold(f64::INFINITY, f64::min));
            let ok = err <= EXACT_TOL;
            let report = json!({
                "D": b.bond_dim(),
                "reconstruction_error": err,
                "gram_error": gram_error(b.bond_dim(), b.elements()),
                "anchor_overlaps": overlaps,
                "min_anchor_overlap": min_overlap,
                "ok": ok,
            });
            emit(&report, None)?;
            if ok {
                Ok(Outcome::Ok)
            } else {
                Err(Error::Construction(format!("reconstruction error {err:e}")))
            }
        }
    }
}

fn dual(cmd: DualCmd) -> rsep_core::Result<Outcome> {
    match cmd {
        DualCmd::Margin { state, measurements } => {
            let psi = resolve_state(&Ref::Name(state), &here())?;
            let set = resolve_measurements(&Ref::Name(measurements), &here())?;
            let m = dual_margin(&HermitianOperator::projector(&psi), &set)?;
            let report = json!({
                "min_overlap": m.min_overlap,
                "max_overlap": m.max_overlap,
                "strict_margin": m.strict_margin,
                "worst_povm": m.worst_element.0,
                "worst_element": m.worst_element.1,
                "in_dual": m.in_dual(rsep_core::dual::MEMBERSHIP_TOL),
                "strict": m.is_strict(),
            });
            emit(&report, None)?;
            Ok(Outcome::Ok)
        }
        DualCmd::Admissible {
            measurements,
            povm,
            basis,
            pattern,
        } => {
            let set = resolve_measurements(&Ref::Name(measurements), &here())?;
            let b = resolve_basis(&Ref::Name(basis), &here())?;
            let idx = set
                .find(&povm)
                .ok_or_else(|| Error::Usage(format!("unknown POVM label '{povm}'")))?;
            let spaces = pattern
                .chars()
                .map(|ch| match ch {
                    'h' => Ok(b.space(false)),
                    't' => Ok(b.space(true)),
                    _ => Err(Error::Usage(format!("pattern letters must be h or t, got '{ch}'"))),
                })
                .collect::<rsep_core::Result<Vec<_>>>()?;
            let target = &set.povms()[idx];
            let r = admissible_povm(target, &spaces)?;
            let values = (r.n_values <= VALUE_LIST_LIMIT).then(|| overlap_values(target, &spaces)).transpose()?;
            let report = json!({
                "values": values,
                "pattern": pattern,
                "admissible": r.admissible,
                "min_value": r.min_value,
                "max_value": r.max_value,
                "n_values": r.n_values,
                "witness_tuple": r.witness_tuple,
                "witness_element": r.witness_element,
                "witness_value": r.witness_value,
            });
            finish(report, r.admissible, None)
        }
    }
}

/// `tr(V X)` for every extreme-point tuple (first space most significant) and element.
fn overlap_values(povm: &Povm, spaces: &[VirtualSpaceTag<'_>]) -> rsep_core::Result<Vec<f64>> {
    let sizes: Vec<usize> = spaces.iter().map(|s| s.basis.len()).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total * povm.len());
    for flat in 0..total {
        let factors: Vec<&HermitianOperator> = unflatten(flat, &sizes)
            .into_iter()
            .zip(spaces)
            .map(|(k, s)| s.element(k))
            .collect();
        let v = HermitianOperator::tensor(&factors)?;
        out.extend(povm.elements().iter().map(|x| v.overlap(x)));
    }
    Ok(out)
}

fn lattice(cmd: LatticeCmd) -> rsep_core::Result<Outcome> {
    let LatticeCmd::Gen { shape, out } = cmd;
    let l = Lattice::from_shorthand(&shape)?;
    let file = serde_json::to_value(LatticeFile::from_lattice(&l))?;
    emit(&file, out.as_deref())?;
    Ok(Outcome::Ok)
}

fn load_instance(path: &Path, overrides: &Overrides) -> rsep_core::Result<(InstanceConfig, PepsInstance)> {
    let cfg = InstanceConfig::load(path)?;
    let inst = cfg.build_with(overrides)?;
    Ok((cfg, inst))
}

fn peps(cmd: PepsCmd) -> rsep_core::Result<Outcome> {
    match cmd {
        PepsCmd::Build(a) => {
            let recipe = match a.recipe.parse::<u8>() {
                Ok(n) => RecipeTag::Number(n),
                Err(_) => RecipeTag::Name(a.recipe.clone()),
            };
            let spec = InstanceSpec {
                lattice: Ref::Name(a.lattice),
                basis: a.basis.map(Ref::Name),
                measurement_set: Ref::Name(a.measurements),
                physical_dim: None,
                psi: a.psi.map(Ref::Name),
                site_map: Some(MapSpec::uniform(recipe, a.epsilon, a.seed)),
                site_maps: None,
            };
            // Relative references must resolve from where the file will live.
            let base = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
            let cfg = InstanceConfig { spec, base_dir: base };
            let inst = cfg.build()?;
            write_json(&a.out, &cfg.spec)?;
            let report = json!({
                "out": a.out,
                "n_sites": inst.n_sites(),
                "n_edges": inst.lattice().n_edges(),
                "physical_dim": inst.phys_dim(),
                "site_classes": inst.class_representatives().len(),
            });
            emit(&report, None)?;
            Ok(Outcome::Ok)
        }
        PepsCmd::Check { instance, epsilon, out } => {
            let (_, inst) = load_instance(
                &instance,
                &Overrides {
                    epsilon,
                    lattice: None,
                },
            )?;
            let choi_min = inst
                .class_representatives()
                .iter()
                .map(|&s| choi_check(&inst.site_maps()[s]))
                .fold(f64::INFINITY, f64::min);
            let tables = class_tables(&inst)?;
            let positivity = rv_positivity_from_tables(&inst, &tables);
            let n_basis = inst.basis().len();
            let factorization = tables
                .iter()
                .map(|t| trace_factorization(&t.traces, t.virtual_count, n_basis).ok())
                .collect::<Vec<_>>();
            let edges = edge_distribution_from_tables(&inst, &tables).ok();
            let certified = positivity.is_certified() && choi_min >= -1e-9;
            let mut report = json!({
                "certified": certified,
                "choi_min_eigenvalue": choi_min,
                "positivity": positivity,
                "site_classes": inst.class_representatives(),
                "factorization": factorization,
                "factorizable": edges.is_some(),
            });
            if let Some(e) = &edges {
                report["t"] = json!(e.t);
                report["log_t"] = json!(e.log_t);
                report["edge_probabilities"] = json!(e.probs);
            }
            let small = (inst.phys_dim() as f64).powi(inst.n_sites() as i32) <= ASSEMBLY_LIMIT;
            if small {
                let exact = assemble_exact_state(&inst)?;
                report["t_assembled"] = json!(exact.norm_sq);
                if let Some(e) = &edges {
                    report["t_relative_error"] = json!((e.t - exact.norm_sq).abs() / exact.norm_sq);
                }
                report["entropies"] = json!(entanglement_certificate(&inst)?);
            }
            if let PositivityOutcome::Violated(w) = &positivity {
                eprintln!("witness: {w}");
            }
            finish(report, certified, out.as_deref())
        }
        PepsCmd::EpsilonMax { instance, eps_hi, out } => {
            let cfg = InstanceConfig::load(&instance)?;
            let bracket = max_epsilon_search(
                |eps| {
                    cfg.build_with(&Overrides {
                        epsilon: Some(eps),
                        lattice: None,
                    })
                },
                eps_hi,
            )?;
            let report = json!({
                "low": bracket.low,
                "high": bracket.high,
                "width": bracket.high.map(|h| h - bracket.low),
                "evaluations": bracket.evaluations,
            });
            emit(&report, out.as_deref())?;
            Ok(Outcome::Ok)
        }
    }
}

fn plan_for(arg: &str, inst: &PepsInstance) -> rsep_core::Result<MeasurementPlan> {
    PlanFile::resolve(arg)?.to_plan(inst.measurement_set(), inst.n_sites())
}

fn sample(a: SampleArgs) -> rsep_core::Result<()> {
    init_workers(&a.workers);
    let (_, inst) = load_instance(&a.instance, &Overrides::default())?;
    let plan = plan_for(&a.plan, &inst)?;
    let sampler = Sampler::new(&inst, plan)?;
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_shots(&sampler, a.shots, a.seed, a.emit_hidden, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_shots(&sampler, a.shots, a.seed, a.emit_hidden, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> rsep_core::Result<Outcome> {
    init_workers(&a.workers);
    let (_, inst) = load_instance(&a.instance, &Overrides::default())?;
    let plan = plan_for(&a.plan, &inst)?;
    let out = a.out.as_deref();
    match a.mode {
        Mode::Mixture => {
            let exact = instance_joint_distribution(&inst, &plan)?;
            let mixture = mixture_joint_distribution(&inst, &plan)?;
            let recon = reconstruct_mixture(&inst)?;
            let tv = tv_distance(&exact, &mixture)?;
            let pass = tv <= EXACT_TOL
                && recon.trace_distance <= EXACT_TOL
                && (recon.weight_sum - 1.0).abs() <= EXACT_TOL
                && (recon.t_enumerated - recon.t_exact).abs() <= EXACT_TOL * recon.t_exact;
            let report = json!({
                "mode": "mixture",
                "tv": tv,
                "threshold": EXACT_TOL,
                "pass": pass,
                "K": exact.outcome_count(),
                "max_deviation": max_deviation(&exact, &mixture)?,
                "trace_distance": recon.trace_distance,
                "weight_sum": recon.weight_sum,
                "t_exact": recon.t_exact,
                "t_enumerated": recon.t_enumerated,
                "n_terms": recon.n_terms,
                "entropies": entanglement_certificate(&inst)?,
            });
            finish(report, pass, out)
        }
        Mode::Sampler | Mode::Independence => {
            let independence = matches!(a.mode, Mode::Independence);
            let records = match &a.shots_file {
                Some(path) => read_shots(&std::fs::read_to_string(path)?)?,
                None => {
                    let sampler = Sampler::new(&inst, plan.clone())?;
                    run_shots(&sampler, a.shots, a.seed, independence)?
                }
            };
            if independence {
                let arities = plan.arities(inst.measurement_set());
                let r = conditional_independence_test(&records, &arities, a.confidence, a.min_group)?;
                let report = json!({
                    "mode": "independence",
                    "pass": r.pass,
                    "groups": r.groups,
                    "groups_tested": r.groups_tested,
                    "worst_ratio": r.worst_ratio,
                    "tv": r.worst_tv,
                    "threshold": r.worst_threshold,
                    "n_shots": r.n_shots,
                });
                return finish(report, r.pass, out);
            }
            let exact = instance_joint_distribution(&inst, &plan)?;
            let r = frequency_test(&records, &exact, a.confidence)?;
            let report = json!({
                "mode": "sampler",
                "tv": r.tv,
                "threshold": r.threshold,
                "pass": r.pass,
                "K": r.k,
                "n_shots": r.n_shots,
            });
            finish(report, r.pass, out)
        }
    }
}

fn bench(a: BenchArgs) -> rsep_core::Result<Outcome> {
    init_workers(&a.workers);
    let cfg = InstanceConfig::load(&a.instance)?;
    let kind = match &cfg.spec.lattice {
        Ref::Name(s) if s.starts_with("chain:") => "chain",
        Ref::Name(s) if s.starts_with("cycle:") => "cycle",
        _ => return Err(Error::Usage("bench needs a chain:N or cycle:N template lattice".into())),
    };
    let mut rows = Vec::new();
    for &n in &a.sites {
        let lattice = Lattice::from_shorthand(&format!("{kind}:{n}"))?;
        let inst = cfg.build_with(&Overrides {
            epsilon: None,
            lattice: Some(lattice),
        })?;
        let plan = plan_for(&a.plan, &inst)?;
        let sampler = Sampler::new(&inst, plan)?;
        let mut times = Vec::with_capacity(a.repeats.max(1));
        for _ in 0..a.repeats.max(1) {
            let start = Instant::now();
            let shots = run_shots(&sampler, a.shots, a.seed, false)?;
            times.push(start.elapsed().as_secs_f64());
            debug_assert_eq!(shots.len() as u64, a.shots);
        }
        times.sort_by(f64::total_cmp);
        rows.push(json!({
            "sites": n,
            "edges": inst.lattice().n_edges(),
            "shots": a.shots,
            "median_seconds": times[times.len() / 2],
            "times": times,
        }));
    }
    let report = json!({ "lattice": kind, "rows": rows });
    emit(&report, a.out.as_deref())?;
    Ok(Outcome::Ok)
}
