//! Command-line driver.
//!
//! Exit status: 0 on success, 1 for a domain failure (invalid description,
//! infeasible schedule, execution mismatch), 2 for usage and I/O errors.
//! Every command is deterministic given the same files and flags; all
//! randomness comes from `--seed`, which has a fixed default.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use gemmap_core::costmodel::rank_candidates;
use gemmap_core::diag::has_errors;
use gemmap_core::mapspace::{check_all, MemoryShares};
use gemmap_core::pipeline::{compile_graph_with, prepare, run_compiled, Layer, PipelineOptions};
use gemmap_core::solver::{solve, SolveError};
use gemmap_core::spacegen::{generate_space, padded_shape, tuning_point_count, DEFAULT_GRANULARITY};
use gemmap_core::workload::{execute_graph, Graph, TensorData};
use gemmap_core::{ArchSpec, Diagnostic, Mapping, TensorValue};

use crate::formats::arch::parse_arch;
use crate::formats::cost::{apply_overrides, parse_overrides};
use crate::formats::mapping::{parse_mappings, render_mapping, shares_from_doc, to_text};
use crate::formats::report::{layer_report, ExploreReport};
use crate::formats::workload::{parse_inputs, parse_workload, random_inputs};
use crate::formats::{format_rational, parse_rational, to_yaml, OperandName, Ratio};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "gemmap", version, about = "Map quantized GEMM workloads onto dataflow accelerators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Architecture description (YAML).
    pub arch: PathBuf,
    /// Workload (YAML): an operator graph or a `gemm:` shorthand.
    pub workload: PathBuf,
    /// Seed for generated weights and inputs.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Keep constant preprocessing in the graph instead of folding it.
    #[arg(long)]
    pub no_fold: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate an architecture and, optionally, a workload.
    Validate {
        arch: PathBuf,
        workload: Option<PathBuf>,
    },
    /// Solve one tuning point and write the ranked mappings.
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Dataflow name (default: the architecture's first).
        #[arg(long)]
        dataflow: Option<String>,
        /// Shares as `level.operand=ratio,...` (default: even split).
        #[arg(long)]
        shares: Option<String>,
        /// Double-buffer every on-chip level.
        #[arg(long)]
        db: bool,
        /// Number of mappings to keep.
        #[arg(short = 'k', default_value_t = 1)]
        k: usize,
        /// Accelerated operator to schedule (required for multi-layer graphs).
        #[arg(long)]
        layer: Option<String>,
        /// Write the mapping file here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate and rank the whole schedule space.
    Explore {
        #[command(flatten)]
        common: Common,
        /// Share-grid granularity g (shares are multiples of 1/g).
        #[arg(long, default_value_t = DEFAULT_GRANULARITY)]
        granularity: u64,
        /// Mappings kept per tuning point.
        #[arg(short = 'k', default_value_t = 1)]
        k: usize,
        /// Cost-parameter overrides (YAML).
        #[arg(long)]
        cost_params: Option<PathBuf>,
        /// Write the YAML report here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Lower, tensorize and interpret the workload; compare with the reference.
    Run {
        #[command(flatten)]
        common: Common,
        /// Mapping file; layers it does not cover use the best explored mapping.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Input tensors (YAML map of name to tensor) instead of seeded random ones.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write the intrinsic trace here.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Share-grid granularity used when searching for mappings.
        #[arg(long, default_value_t = DEFAULT_GRANULARITY)]
        granularity: u64,
    },
}

/// Why a command failed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Domain(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) | Failure::Io(_) => 2,
        }
    }

    fn diags(context: &str, d: Vec<Diagnostic>) -> Self {
        Failure::Domain(d.into_iter().map(|d| format!("{context}: {d}")).collect())
    }

    fn domain(msg: impl Into<String>) -> Self {
        Failure::Domain(vec![msg.into()])
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit status.
pub fn run_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Validate { arch, workload } => validate(&arch, workload.as_deref(), out, err),
        Command::Schedule { common, dataflow, shares, db, k, layer, out: path } => {
            schedule(&common, dataflow.as_deref(), shares.as_deref(), db, k, layer.as_deref(), path.as_deref(), out, err)
        }
        Command::Explore { common, granularity, k, cost_params, out: path } => {
            explore(&common, granularity, k, cost_params.as_deref(), path.as_deref(), out, err)
        }
        Command::Run { common, mapping, input, emit_trace, granularity } => {
            run(&common, mapping.as_deref(), input.as_deref(), emit_trace.as_deref(), granularity, out, err)
        }
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) => {
                    let _ = writeln!(err, "usage error: {m}");
                }
                Failure::Io(m) => {
                    let _ = writeln!(err, "I/O error: {m}");
                }
                Failure::Domain(lines) => {
                    for l in lines {
                        let _ = writeln!(err, "{l}");
                    }
                }
            }
            f.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn warn(err: &mut dyn Write, context: &str, diags: &[Diagnostic]) {
    for d in diags {
        let _ = writeln!(err, "{context}: {d}");
    }
}

fn load_arch(path: &Path, cost: Option<&Path>, err: &mut dyn Write) -> Result<ArchSpec, Failure> {
    let ctx = path.display().to_string();
    let (mut arch, warnings) = parse_arch(&read(path)?).map_err(|d| Failure::diags(&ctx, d))?;
    warn(err, &ctx, &warnings);
    if let Some(p) = cost {
        let pctx = p.display().to_string();
        let o = parse_overrides(&read(p)?).map_err(|d| Failure::diags(&pctx, d))?;
        apply_overrides(&mut arch, &o).map_err(|d| Failure::diags(&pctx, d))?;
        let diags = gemmap_core::arch::validate_arch(&arch);
        if has_errors(&diags) {
            return Err(Failure::diags(&pctx, diags));
        }
    }
    Ok(arch)
}

fn load_graph(path: &Path, seed: u64) -> Result<Graph, Failure> {
    let ctx = path.display().to_string();
    parse_workload(&read(path)?, seed).map_err(|d| Failure::diags(&ctx, d))
}

fn prepared(common: &Common, err: &mut dyn Write) -> Result<(Graph, Vec<Layer>, usize), Failure> {
    let graph = load_graph(&common.workload, common.seed)?;
    let (g, diags, layers) = prepare(&graph, !common.no_fold).map_err(|e| Failure::domain(format!("{}: {e}", common.workload.display())))?;
    warn(err, &common.workload.display().to_string(), &diags);
    let host = g.ops.iter().filter(|o| o.kind.is_preprocessing()).count();
    Ok((graph, layers, host))
}

fn validate(arch: &Path, workload: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let a = load_arch(arch, None, err)?;
    let _ = writeln!(out, "arch: {}", a.name);
    let _ = writeln!(out, "levels: {}", a.num_levels());
    let _ = writeln!(out, "dataflows: {}", a.dataflows.len());
    let _ = writeln!(out, "tuning_points: {}", tuning_point_count(&a, DEFAULT_GRANULARITY));
    if let Some(w) = workload {
        let graph = load_graph(w, DEFAULT_SEED)?;
        let (g, diags, layers) = prepare(&graph, true).map_err(|e| Failure::domain(format!("{}: {e}", w.display())))?;
        warn(err, &w.display().to_string(), &diags);
        let _ = writeln!(out, "operators: {}", g.ops.len());
        let _ = writeln!(out, "accelerated_layers: {}", layers.len());
        for l in &layers {
            let _ = writeln!(out, "layer: {} {}", l.op.id, shape_str(l.shape));
        }
    }
    let _ = writeln!(out, "status: ok");
    Ok(())
}

fn shape_str(s: gemmap_core::GemmShape) -> String {
    format!("{}x{}x{}", s.n, s.c, s.k)
}

fn pick_layer<'a>(layers: &'a [Layer], wanted: Option<&str>) -> Result<&'a Layer, Failure> {
    match (wanted, layers) {
        (Some(id), _) => layers.iter().find(|l| l.op.id == id).ok_or_else(|| {
            let ids: Vec<_> = layers.iter().map(|l| l.op.id.as_str()).collect();
            Failure::Usage(format!("no accelerated layer `{id}` (layers: {})", ids.join(", ")))
        }),
        (None, [one]) => Ok(one),
        (None, []) => Err(Failure::domain("the workload has no accelerated layer")),
        (None, many) => Err(Failure::Usage(format!("the workload has {} accelerated layers; choose one with --layer", many.len()))),
    }
}

/// `level.operand=ratio,...`; every share level's operands must be given.
fn parse_shares_flag(s: &str, arch: &ArchSpec) -> Result<MemoryShares, Failure> {
    let mut doc: BTreeMap<String, BTreeMap<OperandName, Ratio>> = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let bad = || Failure::Usage(format!("share `{item}` is not of the form level.operand=ratio"));
        let (key, value) = item.split_once('=').ok_or_else(bad)?;
        let (level, operand) = key.trim().rsplit_once('.').ok_or_else(bad)?;
        let op = match operand {
            "input" => OperandName::Input,
            "weight" => OperandName::Weight,
            "output" => OperandName::Output,
            _ => return Err(bad()),
        };
        let r = parse_rational(value).ok_or_else(bad)?;
        doc.entry(level.to_string()).or_default().insert(op, Ratio(r));
    }
    shares_from_doc(&doc, arch, "--shares").map_err(|d| Failure::Usage(d.iter().map(|d| format!("{}: {}", d.path, d.message)).collect::<Vec<_>>().join("; ")))
}

#[allow(clippy::too_many_arguments)]
fn schedule(
    common: &Common,
    dataflow: Option<&str>,
    shares: Option<&str>,
    db: bool,
    k: usize,
    layer: Option<&str>,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let arch = load_arch(&common.arch, None, err)?;
    let (_, layers, _) = prepared(common, err)?;
    let layer = pick_layer(&layers, layer)?;
    let df = match dataflow {
        None => &arch.dataflows[0],
        Some(name) => arch.dataflow(name).ok_or_else(|| {
            let names: Vec<_> = arch.dataflows.iter().map(|d| d.name.as_str()).collect();
            Failure::Usage(format!("unknown dataflow `{name}` (available: {})", names.join(", ")))
        })?,
    };
    let shares = match shares {
        Some(s) => parse_shares_flag(s, &arch)?,
        None => MemoryShares::even(&arch),
    };
    if db && !arch.supports_double_buffering {
        return Err(Failure::Usage(format!("`{}` does not support double buffering", arch.name)));
    }
    if k == 0 {
        return Err(Failure::Usage("-k must be at least 1".into()));
    }
    let solved = padded_shape(layer.shape, &arch);
    let found = match solve(solved, &arch, df, &shares, db, k) {
        Ok(v) => v,
        Err(SolveError::Infeasible(why)) => {
            let [pe, cap, dfl] = why.rejections;
            return Err(Failure::domain(format!(
                "infeasible: no mapping of {} satisfies the {} constraints at this tuning point (rejections: pe_bound={pe}, capacity={cap}, dataflow={dfl})",
                shape_str(layer.shape),
                why.family.name()
            )));
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    let docs: Vec<_> = found.iter().map(|s| render_mapping(&s.mapping, &arch, Some(&layer.op.id), Some(solved), Some(s.proxy_cost))).collect();
    let text = to_text(&docs);
    match path {
        Some(p) => {
            write_file(p, &text)?;
            let _ = writeln!(out, "layer: {}", layer.op.id);
            let _ = writeln!(out, "shape: {}", shape_str(layer.shape));
            let _ = writeln!(out, "mappings: {}", found.len());
            let _ = writeln!(out, "best_proxy_cost: {}", found[0].proxy_cost);
        }
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(())
}

/// Builds the explore report; `Err` lists layers whose whole space is infeasible.
pub fn explore_report(arch: &ArchSpec, layers: &[Layer], host: usize, granularity: u64, k: usize) -> (ExploreReport, Vec<String>) {
    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for l in layers {
        let space = generate_space(l.shape, arch, granularity, k);
        let mut ranked = space.candidates.clone();
        rank_candidates(&mut ranked, l.shape, arch);
        if ranked.is_empty() {
            failed.push(format!("layer `{}` ({}): every tuning point is infeasible", l.op.id, shape_str(l.shape)));
        }
        reports.push(layer_report(&l.op.id, l.shape, &space, &ranked, arch));
    }
    let report = ExploreReport { arch: arch.name.clone(), granularity, k, host_preprocessing_ops: host, layers: reports };
    (report, failed)
}

fn explore(common: &Common, granularity: u64, k: usize, cost: Option<&Path>, path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    if granularity == 0 || k == 0 {
        return Err(Failure::Usage("--granularity and -k must be at least 1".into()));
    }
    let arch = load_arch(&common.arch, cost, err)?;
    let (_, layers, host) = prepared(common, err)?;
    let (report, failed) = explore_report(&arch, &layers, host, granularity, k);
    if let Some(p) = path {
        write_file(p, &to_yaml(&report))?;
    }
    let _ = writeln!(out, "arch: {}", report.arch);
    let _ = writeln!(out, "granularity: {granularity}");
    let _ = writeln!(out, "host_preprocessing_ops: {host}");
    for l in &report.layers {
        let _ = writeln!(out, "layer: {}", l.id);
        let _ = writeln!(out, "  shape: {}x{}x{}", l.shape.n, l.shape.c, l.shape.k);
        let _ = writeln!(out, "  tuning_points: {}", l.tuning_points);
        let _ = writeln!(out, "  feasible_points: {}", l.feasible_points);
        let _ = writeln!(out, "  candidates: {}", l.candidates.len());
        let _ = writeln!(out, "  compute_lower_bound: {}", format_rational(l.compute_lower_bound_cycles.0));
        if let Some(best) = l.candidates.first() {
            let _ = writeln!(out, "  best_dataflow: {}", best.tuning.dataflow);
            let _ = writeln!(out, "  best_double_buffered: {}", best.tuning.double_buffered);
            if let Some(c) = &best.cost {
                let _ = writeln!(out, "  best_cycles: {}", format_rational(c.total_cycles.0));
            }
            let _ = writeln!(out, "  best_proxy_cost: {}", best.proxy_cost);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Domain(failed))
    }
}

fn as_i64(t: &TensorValue) -> Vec<i64> {
    match &t.data {
        TensorData::I8(v) => v.iter().map(|&x| x as i64).collect(),
        TensorData::I32(v) => v.iter().map(|&x| x as i64).collect(),
    }
}

fn run(
    common: &Common,
    mapping: Option<&Path>,
    input: Option<&Path>,
    trace_path: Option<&Path>,
    granularity: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let arch = load_arch(&common.arch, None, err)?;
    let (graph, layers, _) = prepared(common, err)?;
    let mut fixed: BTreeMap<String, Mapping> = BTreeMap::new();
    if let Some(p) = mapping {
        let ctx = p.display().to_string();
        for (doc, m) in parse_mappings(&read(p)?, &arch).map_err(|d| Failure::diags(&ctx, d))? {
            let layer = match &doc.layer {
                Some(id) => pick_layer(&layers, Some(id))?,
                None => pick_layer(&layers, None)?,
            };
            if fixed.contains_key(&layer.op.id) {
                continue; // a ranked list: the first mapping wins
            }
            // feasibility is checked before anything executes
            if m.double_buffered && !arch.supports_double_buffering {
                return Err(Failure::domain(format!("{ctx}: `{}` does not support double buffering", arch.name)));
            }
            if !m.covers(layer.shape) {
                return Err(Failure::domain(format!("{ctx}: mapping does not cover layer `{}` ({})", layer.op.id, shape_str(layer.shape))));
            }
            let df = arch.dataflow(&m.dataflow).expect("checked while parsing");
            if let Err(family) = check_all(&m, &arch, layer.shape, df) {
                return Err(Failure::domain(format!(
                    "{ctx}: infeasible mapping for layer `{}`: violates the {} constraints",
                    layer.op.id,
                    family.name()
                )));
            }
            fixed.insert(layer.op.id.clone(), m);
        }
    }
    let inputs = match input {
        Some(p) => {
            let ctx = p.display().to_string();
            parse_inputs(&read(p)?).map_err(|d| Failure::diags(&ctx, d))?
        }
        None => random_inputs(&graph, common.seed),
    };
    let expected = execute_graph(&graph, &inputs).map_err(|e| Failure::domain(format!("reference execution: {e}")))?;
    let opts = PipelineOptions { fold_constants: !common.no_fold, granularity, k: 1 };
    let compiled = compile_graph_with(&graph, &arch, opts, |l| fixed.get(&l.op.id).cloned()).map_err(|e| Failure::domain(e.to_string()))?;
    let (got, trace) = run_compiled(&compiled, &arch, &inputs).map_err(|e| Failure::domain(format!("execution error: {e}")))?;
    if let Some(p) = trace_path {
        write_file(p, &trace)?;
    }
    let _ = writeln!(out, "layers: {}", layers.len());
    let _ = writeln!(out, "host_preprocessing_ops: {}", compiled.host_preprocessing());
    let _ = writeln!(out, "trace_lines: {}", trace.lines().count());
    for name in &graph.outputs {
        let (e, g) = (&expected[name], &got[name]);
        let mismatch = if e.shape != g.shape {
            Some(format!("output={name} shape expected={:?} got={:?}", e.shape, g.shape))
        } else {
            let (ev, gv) = (as_i64(e), as_i64(g));
            ev.iter().zip(&gv).position(|(a, b)| a != b).map(|i| format!("output={name} index={i} expected={} got={}", ev[i], gv[i]))
        };
        if let Some(m) = mismatch {
            let _ = writeln!(out, "verdict: FAIL");
            let _ = writeln!(out, "first_mismatch: {m}");
            return Err(Failure::domain(format!("mismatch: {m}")));
        }
    }
    let _ = writeln!(out, "verdict: PASS");
    Ok(())
}
