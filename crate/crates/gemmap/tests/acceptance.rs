//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every check computes its expected value independently of the code under
//! test (brute-force enumeration, closed-form counts, direct evaluation)
//! before comparing.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use gemmap::cli::{explore_report, run_args};
use gemmap::formats::mapping::mapping_from_doc;
use gemmap::formats::report::ExploreReport;
use gemmap::formats::workload::parse_workload;
use gemmap_core::arch::{gemmini_like, ConstraintSet, DataflowSpec, LevelConstraint, SpatialPolicy};
use gemmap_core::costmodel::estimate_latency;
use gemmap_core::dim::OperandSet;
use gemmap_core::lowering::{emit_trace, interpret, lower_mapping, tensorize, trace_bytes};
use gemmap_core::mapspace::{check_all, factorize, MemoryShares};
use gemmap_core::pipeline::{best_mapping, compile_graph, prepare, run_compiled, PipelineOptions};
use gemmap_core::solver::{enumerate_feasible, solve, SolveError};
use gemmap_core::spacegen::{generate_space, padded_shape, tuning_points};
use gemmap_core::workload::{
    count_preprocessing_over_constants, execute_graph, reference_execute, Conv2dAttrs, Epilogue, Graph, GraphInput, GraphOp, OpKind,
};
use gemmap_core::{ArchSpec, Dim, GemmShape, GemmWorkload, Mapping, MemoryLevel, Operand, Rational, TensorValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Check = (&'static str, fn() -> Verdict);

fn main() {
    let checks: [Check; 8] = [
        ("solver_exact_vs_oracle", solver_exact_vs_oracle),
        ("pe_bound_on_explored_mappings", pe_bound_on_explored_mappings),
        ("capacity_halving_rule", capacity_halving_rule),
        ("schedule_space_cardinality", schedule_space_cardinality),
        ("end_to_end_functional", end_to_end_functional),
        ("constant_folding", constant_folding),
        ("cost_model_properties", cost_model_properties),
        ("explore_determinism", explore_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// exact search

const SMALL_DIMS: [u64; 9] = [1, 2, 3, 4, 6, 8, 9, 12, 16];

fn level(name: &str, cap: u64, ops: &[Operand], pe: bool) -> MemoryLevel {
    MemoryLevel {
        name: name.into(),
        capacity_bytes: cap,
        bandwidth_bytes_per_cycle: Rational::from_integer(8),
        dma_startup_cycles: 4,
        operands_held: OperandSet::from_slice(ops),
        is_pe_level: pe,
    }
}

fn random_arch(rng: &mut ChaCha8Rng) -> ArchSpec {
    use Operand::*;
    let mut levels = vec![level("pe", 4096, &[Input, Weight, Output], true)];
    match rng.gen_range(0..3) {
        0 => {}
        1 => levels.push(level("spm", rng.gen_range(16..512), &[Input, Weight, Output], false)),
        _ => {
            levels.push(level("spm", rng.gen_range(8..256), &[Input, Weight], false));
            levels.push(level("acc", rng.gen_range(16..256), &[Output], false));
        }
    }
    levels.push(level("dram", 0, &[Input, Weight, Output], false));
    let mut spatial = [SpatialPolicy::Free; 3];
    for p in &mut spatial {
        *p = [SpatialPolicy::Forced, SpatialPolicy::Forbidden, SpatialPolicy::Free][rng.gen_range(0..3)];
    }
    let mut constraints = ConstraintSet::default();
    if rng.gen_bool(0.2) {
        constraints.entries.push(LevelConstraint {
            level: rng.gen_range(0..levels.len()),
            dim: Dim::ALL[rng.gen_range(0..3)],
            max_spatial: None,
            max_temporal: Some(rng.gen_range(1..5)),
            fixed: None,
        });
    }
    ArchSpec {
        name: "random".into(),
        pe_dim: [2, 3, 4, 8][rng.gen_range(0..4)],
        levels,
        dataflows: vec![DataflowSpec { name: "df".into(), spatial, stationary: Weight }],
        constraints,
        intrinsics: vec![],
        supports_double_buffering: true,
    }
}

fn random_shares(arch: &ArchSpec, rng: &mut ChaCha8Rng) -> MemoryShares {
    let mut s = MemoryShares::even(arch);
    for row in &mut s.levels {
        let held: Vec<usize> = (0..3).filter(|&i| row[i].is_some()).collect();
        if held.len() > 1 && rng.gen_bool(0.5) {
            let big = held[rng.gen_range(0..held.len())];
            for &i in &held {
                row[i] = Some(Rational::new(if i == big { 2 } else { 1 }, 4));
            }
        }
    }
    s
}

fn solver_exact_vs_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
    let (mut instances, mut infeasible) = (0, 0);
    while instances < 200 {
        let shape = GemmShape::new(SMALL_DIMS[rng.gen_range(0..9)], SMALL_DIMS[rng.gen_range(0..9)], SMALL_DIMS[rng.gen_range(0..9)]);
        if shape.bounds().iter().map(|&b| factorize(b).len()).sum::<usize>() > 8 {
            continue;
        }
        instances += 1;
        let arch = random_arch(&mut rng);
        let df = arch.dataflows[0].clone();
        let shares = random_shares(&arch, &mut rng);
        let db = rng.gen_bool(0.5);
        // the oracle's answer comes first
        let all = enumerate_feasible(shape, &arch, &df, &shares, db).map_err(|e| format!("oracle: {e}"))?;
        let oracle_min = all.first().map(|s| s.proxy_cost);
        let solved = match solve(shape, &arch, &df, &shares, db, 1) {
            Ok(v) => Some(v[0].proxy_cost),
            Err(SolveError::Infeasible(_)) => None,
            Err(e) => return Err(format!("{shape}: {e}")),
        };
        ensure(solved == oracle_min, || format!("{shape} db={db}: solver {solved:?}, oracle {oracle_min:?}"))?;
        infeasible += usize::from(solved.is_none());
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), || format!("took {}", secs(t)))?;
    Ok(format!("{instances} instances ({infeasible} infeasible) agree in {}", secs(t)))
}

// ---------------------------------------------------------------------------
// explored mappings

fn gemm_text(s: GemmShape) -> String {
    format!("gemm: {{N: {}, C: {}, K: {}, dtype: int8, scale: 1/64, clip: [-128, 127]}}\n", s.n, s.c, s.k)
}

/// The explore report for one shorthand GEMM.
fn explore(shape: GemmShape, k: usize) -> ExploreReport {
    let arch = gemmini_like();
    let graph = parse_workload(&gemm_text(shape), 42).unwrap();
    let (_, _, layers) = prepare(&graph, true).unwrap();
    explore_report(&arch, &layers, 0, 4, k).0
}

/// Mappings and the layer shape from an explore report.
fn report_mappings(r: &ExploreReport, arch: &ArchSpec) -> Result<Vec<(GemmShape, Mapping)>, String> {
    let mut out = Vec::new();
    for l in &r.layers {
        let shape = GemmShape::new(l.shape.n, l.shape.c, l.shape.k);
        for c in &l.candidates {
            out.push((shape, mapping_from_doc(&c.mapping, arch).map_err(|d| format!("{d:?}"))?));
        }
    }
    Ok(out)
}

fn pe_bound_on_explored_mappings() -> Verdict {
    let arch = gemmini_like();
    let mut n = 0;
    for s in [64, 128] {
        let r = explore(GemmShape::new(s, s, s), 3);
        for l in &r.layers {
            for c in &l.candidates {
                let pe = &c.mapping.levels[0];
                ensure(pe.level == arch.levels[0].name, || "first mapping level is not the PE level".into())?;
                let products = [pe.temporal.n * pe.spatial.n, pe.temporal.c * pe.spatial.c, pe.temporal.k * pe.spatial.k];
                ensure(products.iter().all(|&p| p <= 16), || format!("{s}^3 rank {}: PE factors {products:?}", c.rank))?;
                n += 1;
            }
        }
    }
    ensure(n > 0, || "no mappings explored".into())?;
    Ok(format!("{n} mappings, 0 violations"))
}

/// Bytes of each operand's tile at `level`: input N·C, weight C·K (int8),
/// output N·K (int32 partial sums).
fn footprint_oracle(m: &Mapping, level: usize) -> [u64; 3] {
    let mut t = [1u64; 3];
    for l in &m.levels[..=level] {
        for d in 0..3 {
            t[d] *= l.temporal[d] * l.spatial[d];
        }
    }
    [t[0] * t[1], t[1] * t[2], t[0] * t[2] * 4]
}

fn within_budget(m: &Mapping, arch: &ArchSpec, halve: bool) -> bool {
    (1..arch.num_levels()).filter(|&l| arch.is_share_level(l)).all(|l| {
        let fp = footprint_oracle(m, l);
        arch.levels[l].operands_held.iter().all(|op| {
            let share = m.shares.get(l, op).unwrap_or_default();
            let budget = share * Rational::from_integer(arch.levels[l].capacity_bytes as i64) / if halve { 2 } else { 1 };
            Rational::from_integer(fp[op.index()] as i64) <= budget
        })
    })
}

fn tile_volume(m: &Mapping, arch: &ArchSpec) -> u64 {
    (1..arch.num_levels()).filter(|&l| arch.is_share_level(l)).map(|l| footprint_oracle(m, l).iter().sum::<u64>()).sum()
}

fn capacity_halving_rule() -> Verdict {
    let arch = gemmini_like();
    let mut checked = 0;
    for shape in [GemmShape::new(64, 64, 64), GemmShape::new(128, 128, 128), GemmShape::new(512, 256, 384), GemmShape::new(1024, 512, 256)] {
        for (s, m) in report_mappings(&explore(shape, 3), &arch)? {
            if !m.double_buffered {
                continue;
            }
            ensure(within_budget(&m, &arch, true), || format!("{s}: db mapping exceeds share*capacity/2: {m:?}"))?;
            let mut off = m.clone();
            off.double_buffered = false;
            let df = arch.dataflow(&off.dataflow).unwrap();
            ensure(check_all(&off, &arch, padded_shape(s, &arch), df).is_ok(), || format!("{s}: db-off copy infeasible"))?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no double-buffered candidates".into())?;

    // an instance where halving binds: the best db-off mapping no longer
    // fits once buffers are halved, and the db-on optimum is smaller
    let mut binding = None;
    'search: for shape in [GemmShape::new(512, 512, 512), GemmShape::new(1024, 1024, 256), GemmShape::new(256, 256, 256)] {
        for tp in tuning_points(&arch, 4).into_iter().filter(|t| !t.double_buffered) {
            let df = arch.dataflow(&tp.dataflow).unwrap();
            let (Ok(off), Ok(on)) = (solve(shape, &arch, df, &tp.shares, false, 1), solve(shape, &arch, df, &tp.shares, true, 1)) else {
                continue;
            };
            let (off, on) = (&off[0].mapping, &on[0].mapping);
            if !within_budget(off, &arch, true) && tile_volume(on, &arch) < tile_volume(off, &arch) {
                binding = Some(format!("{shape} {} tiles {} -> {} bytes", tp.dataflow, tile_volume(off, &arch), tile_volume(on, &arch)));
                break 'search;
            }
        }
    }
    let binding = binding.ok_or("no instance where double buffering shrinks the tile")?;
    Ok(format!("{checked} db candidates within share*cap/2 and feasible with db off; binding: {binding}"))
}

// ---------------------------------------------------------------------------
// schedule-space size

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Rows at granularity g for a level sharing among m operands: positive
/// integer numerators a_1..a_m with sum ≤ g, i.e. C(g, m).
fn rows_oracle(level: &MemoryLevel, g: u64) -> u64 {
    if level.is_pe_level || level.capacity_bytes == 0 {
        1
    } else {
        binomial(g, level.operands_held.iter().count() as u64)
    }
}

fn cardinality_archs() -> Vec<ArchSpec> {
    use Operand::*;
    let mut unified = gemmini_like();
    unified.levels.remove(2);
    unified.levels[1].operands_held = OperandSet::from_slice(&[Input, Weight, Output]);
    let mut split = gemmini_like();
    split.levels = vec![
        level("pe", 1024, &[Input, Weight, Output], true),
        level("ibuf", 4096, &[Input], false),
        level("wbuf", 4096, &[Weight], false),
        level("obuf", 4096, &[Output], false),
        level("dram", 0, &[Input, Weight, Output], false),
    ];
    split.supports_double_buffering = false;
    vec![gemmini_like(), unified, split]
}

fn schedule_space_cardinality() -> Verdict {
    let mut seen = Vec::new();
    for arch in cardinality_archs() {
        for g in [1, 2, 4] {
            let rows: u64 = arch.levels.iter().map(|l| rows_oracle(l, g)).product();
            let want = arch.dataflows.len() as u64 * rows * if arch.supports_double_buffering { 2 } else { 1 };
            let points = tuning_points(&arch, g);
            ensure(points.len() as u64 == want, || format!("{} levels, g={g}: {} points, expected {want}", arch.num_levels(), points.len()))?;
            let distinct: std::collections::BTreeSet<_> = points.iter().collect();
            ensure(distinct.len() == points.len(), || "duplicate tuning points".into())?;
            let space = generate_space(GemmShape::new(32, 32, 32), &arch, g, 1);
            ensure(space.points.len() as u64 == want, || format!("space solved {} points, expected {want}", space.points.len()))?;
            seen.push(want);
        }
    }
    Ok(format!("counts {seen:?} exact for g in {{1, 2, 4}} on {} architectures", cardinality_archs().len()))
}

// ---------------------------------------------------------------------------
// functional soundness

fn bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| rng.gen()).collect()
}

fn epilogue(rng: &mut ChaCha8Rng, k: usize) -> Epilogue {
    Epilogue {
        bias: (0..k).map(|_| rng.gen_range(-2000..2000)).collect(),
        scale: Rational::new(rng.gen_range(1..8), rng.gen_range(16..1024)),
        clip_min: rng.gen_range(-128..=0i32) as i8,
        clip_max: rng.gen_range(0..=127i32) as i8,
    }
}

fn op(id: &str, kind: OpKind, inputs: &[&str]) -> GraphOp {
    GraphOp { id: id.into(), kind, inputs: inputs.iter().map(|s| s.to_string()).collect() }
}

fn conv_graph(rng: &mut ChaCha8Rng) -> (Graph, BTreeMap<String, TensorValue>) {
    let attrs = Conv2dAttrs {
        kernel: (rng.gen_range(1..=3), rng.gen_range(1..=3)),
        stride: (rng.gen_range(1..=2), rng.gen_range(1..=2)),
        padding: (rng.gen_range(0..=1), rng.gen_range(0..=1)),
    };
    let (b, h, w, cin, kout) = (rng.gen_range(1..=2), rng.gen_range(4..=10), rng.gen_range(4..=10), rng.gen_range(1..=8), rng.gen_range(1..=24));
    let ep = epilogue(rng, kout);
    let mut g = Graph { inputs: vec![GraphInput { name: "x".into(), shape: vec![b, h, w, cin] }], outputs: vec!["out".into()], ..Default::default() };
    let wshape = vec![attrs.kernel.0, attrs.kernel.1, cin, kout];
    let wn = wshape.iter().product();
    g.constants.insert("w".into(), TensorValue::i8(wshape, bytes(rng, wn)));
    g.constants.insert("bias".into(), TensorValue::i32(vec![kout], ep.bias.clone()));
    g.ops = vec![
        op("conv", OpKind::QnnConv2d(attrs), &["x", "w"]),
        op("biased", OpKind::BiasAdd, &["conv", "bias"]),
        op("rq", OpKind::Requantize { scale: ep.scale }, &["biased"]),
        op("out", OpKind::Clip { min: ep.clip_min, max: ep.clip_max }, &["rq"]),
    ];
    let x = TensorValue::i8(vec![b, h, w, cin], bytes(rng, b * h * w * cin));
    (g, BTreeMap::from([("x".to_string(), x)]))
}

fn end_to_end_functional() -> Verdict {
    let start = Instant::now();
    let arch = gemmini_like();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    for i in 0..100 {
        let shape = GemmShape::new(rng.gen_range(4..=64), rng.gen_range(4..=64), rng.gen_range(4..=64));
        let (n, c, k) = (shape.n as usize, shape.c as usize, shape.k as usize);
        let w = GemmWorkload::new(shape, bytes(&mut rng, c * k), epilogue(&mut rng, k)).unwrap();
        let x = TensorValue::i8(vec![n, c], bytes(&mut rng, n * c));
        let expected = reference_execute(&w, &x).unwrap();
        let m = best_mapping(shape, &arch, PipelineOptions::default()).ok_or_else(|| format!("gemm {i} {shape}: no mapping"))?;
        let p = tensorize(&lower_mapping(&m, &w, &arch).map_err(|e| e.to_string())?, &arch).map_err(|e| e.to_string())?;
        let got = interpret(&p, &x).map_err(|e| format!("gemm {i} {shape}: {e}"))?;
        ensure(got == expected, || format!("gemm {i} {shape}: output differs from reference"))?;
    }
    for i in 0..20 {
        let (g, inputs) = conv_graph(&mut rng);
        let expected = execute_graph(&g, &inputs).map_err(|e| e.to_string())?;
        let cg = compile_graph(&g, &arch, PipelineOptions::default()).map_err(|e| e.to_string())?;
        let (got, _) = run_compiled(&cg, &arch, &inputs).map_err(|e| format!("conv {i}: {e}"))?;
        ensure(got == expected, || format!("conv {i}: output differs from direct convolution"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(300), || format!("took {}", secs(t)))?;
    Ok(format!("100 GEMMs and 20 convolutions bit-identical in {}", secs(t)))
}

// ---------------------------------------------------------------------------
// folding

fn ramp(n: usize, seed: i32) -> Vec<i8> {
    (0..n as i32).map(|i| ((i * 37 + seed) % 255 - 127) as i8).collect()
}

/// Two dense layers whose weights are stored transposed.
fn transposed_weights_graph() -> (Graph, BTreeMap<String, TensorValue>) {
    let mut g = Graph { inputs: vec![GraphInput { name: "x".into(), shape: vec![8, 24] }], outputs: vec!["y2".into()], ..Default::default() };
    g.constants.insert("w1_t".into(), TensorValue::i8(vec![32, 24], ramp(32 * 24, 3)));
    g.constants.insert("w2_t".into(), TensorValue::i8(vec![16, 32], ramp(16 * 32, 7)));
    g.constants.insert("b1".into(), TensorValue::i32(vec![32], (0..32).map(|i| i * 13 - 200).collect()));
    g.constants.insert("b2".into(), TensorValue::i32(vec![16], (0..16).map(|i| 90 - i * 7).collect()));
    g.ops = vec![
        op("w1", OpKind::Transpose, &["w1_t"]),
        op("d1", OpKind::QnnDense, &["x", "w1"]),
        op("b1d", OpKind::BiasAdd, &["d1", "b1"]),
        op("q1", OpKind::Requantize { scale: Rational::new(1, 128) }, &["b1d"]),
        op("y1", OpKind::Clip { min: -128, max: 127 }, &["q1"]),
        op("w2", OpKind::Transpose, &["w2_t"]),
        op("d2", OpKind::QnnDense, &["y1", "w2"]),
        op("b2d", OpKind::BiasAdd, &["d2", "b2"]),
        op("q2", OpKind::Requantize { scale: Rational::new(1, 64) }, &["b2d"]),
        op("y2", OpKind::Clip { min: -128, max: 127 }, &["q2"]),
    ];
    (g, BTreeMap::from([("x".to_string(), TensorValue::i8(vec![8, 24], ramp(8 * 24, 1)))]))
}

fn constant_folding() -> Verdict {
    let arch = gemmini_like();
    let (g, inputs) = transposed_weights_graph();
    let before = g.ops.iter().filter(|o| o.kind.is_preprocessing() && o.inputs.iter().all(|i| g.constants.contains_key(i))).count();
    ensure(before == 2, || format!("fixture has {before} constant preprocessing ops"))?;
    let expected = execute_graph(&g, &inputs).map_err(|e| e.to_string())?;

    let folded = compile_graph(&g, &arch, PipelineOptions::default()).map_err(|e| e.to_string())?;
    let left = count_preprocessing_over_constants(&folded.graph);
    let (out, trace) = run_compiled(&folded, &arch, &inputs).map_err(|e| e.to_string())?;
    let host_lines = trace.lines().filter(|l| l.starts_with("HOST")).count();
    ensure(left == 0 && host_lines == 0, || format!("folded: {left} constant preprocessing ops, {host_lines} host trace lines"))?;
    ensure(out == expected, || "folded graph computes a different result".into())?;

    let naive = compile_graph(&g, &arch, PipelineOptions { fold_constants: false, ..Default::default() }).map_err(|e| e.to_string())?;
    let kept = count_preprocessing_over_constants(&naive.graph);
    let (out, trace) = run_compiled(&naive, &arch, &inputs).map_err(|e| e.to_string())?;
    let naive_host = trace.lines().filter(|l| l.starts_with("HOST")).count();
    ensure(kept >= 1 && naive_host >= 1, || format!("unfolded: {kept} kept, {naive_host} host lines"))?;
    ensure(out == expected, || "unfolded graph computes a different result".into())?;
    Ok(format!("folded: 0 constant preprocessing ops, 0 host lines; unfolded: {kept} ops, {naive_host} host lines"))
}

// ---------------------------------------------------------------------------
// cost model

fn cost_model_properties() -> Verdict {
    let arch = gemmini_like();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0007);
    let mut shapes = vec![GemmShape::new(64, 64, 64), GemmShape::new(128, 128, 128), GemmShape::new(256, 64, 512), GemmShape::new(96, 40, 72)];
    while shapes.len() < 10 {
        shapes.push(GemmShape::new(rng.gen_range(4..=200), rng.gen_range(4..=200), rng.gen_range(4..=200)));
    }
    let mut total = 0;
    let mut unpadded = Vec::new();
    for &shape in &shapes {
        let floor = Rational::new(shape.macs() as i64, (arch.pe_dim * arch.pe_dim) as i64);
        for (_, m) in report_mappings(&explore(shape, 2), &arch)? {
            let (mut on, mut off) = (m.clone(), m.clone());
            on.double_buffered = true;
            off.double_buffered = false;
            let (c_on, c_off) = (estimate_latency(&on, shape, &arch).total_cycles, estimate_latency(&off, shape, &arch).total_cycles);
            ensure(c_on <= c_off, || format!("{shape}: db-on {c_on} > db-off {c_off}"))?;
            let own = estimate_latency(&m, shape, &arch).total_cycles;
            ensure(own >= floor, || format!("{shape}: {own} cycles below MACs/DIM^2 = {floor}"))?;
            total += 1;
            if padded_shape(shape, &arch) == shape {
                unpadded.push((shape, m));
            }
        }
    }

    // traffic against the bytes the lowered program actually moves
    let mut sampled = 0;
    while sampled < 20 && !unpadded.is_empty() {
        let (shape, m) = unpadded.swap_remove(rng.gen_range(0..unpadded.len()));
        let (c, k) = (shape.c as usize, shape.k as usize);
        let w = GemmWorkload::new(shape, vec![1; c * k], Epilogue::identity(k)).unwrap();
        let p = tensorize(&lower_mapping(&m, &w, &arch).map_err(|e| e.to_string())?, &arch).map_err(|e| e.to_string())?;
        let mut from_trace: BTreeMap<(String, String, String), u64> = BTreeMap::new();
        for (op, up, lo, b) in trace_bytes(&emit_trace(&p).map_err(|e| e.to_string())?) {
            *from_trace.entry((op, up, lo)).or_default() += b;
        }
        let mut modelled: BTreeMap<(String, String, String), u64> = BTreeMap::new();
        for t in estimate_latency(&m, shape, &arch).traffic {
            if t.bytes > 0 {
                *modelled.entry((t.operand.name().into(), arch.levels[t.upper].name.clone(), arch.levels[t.lower].name.clone())).or_default() += t.bytes;
            }
        }
        from_trace.retain(|_, b| *b > 0);
        ensure(modelled == from_trace, || format!("{shape}: model {modelled:?} vs trace {from_trace:?}"))?;
        sampled += 1;
    }
    ensure(sampled == 20, || format!("only {sampled} unpadded candidates to sample"))?;
    Ok(format!("{total} candidates: db-on <= db-off and cycles >= MACs/256; traffic equals trace bytes on {sampled} samples"))
}

// ---------------------------------------------------------------------------
// determinism

fn explore_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let arch = dir.path().join("arch.yaml");
    std::fs::write(&arch, gemmap::formats::arch::render_arch(&gemmini_like())).map_err(|e| e.to_string())?;
    let conv = "inputs: [{name: x, shape: [1, 8, 8, 3]}]\n\
                ops:\n  - {id: c, kind: qnn_conv2d, inputs: [x, w], kernel: [3, 3], padding: [1, 1]}\n  - {id: cb, kind: bias_add, inputs: [c, b]}\n\
                \x20 - {id: q, kind: requantize, inputs: [cb], scale: 1/32}\n  - {id: y, kind: clip, inputs: [q], min: -128, max: 127}\n\
                constants:\n  b: {dtype: int32, shape: [16], data: [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]}\n  w: {dtype: int8, shape: [3, 3, 3, 16], data: [";
    let data: Vec<String> = (0..3 * 3 * 3 * 16).map(|i| ((i * 29) % 255 - 127).to_string()).collect();
    let workloads = [gemm_text(GemmShape::new(128, 96, 200)), format!("{conv}{}]}}\noutputs: [y]\n", data.join(", "))];
    let mut sizes = Vec::new();
    for (i, text) in workloads.iter().enumerate() {
        let w = dir.path().join(format!("w{i}.yaml"));
        std::fs::write(&w, text).map_err(|e| e.to_string())?;
        let mut reports = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("r{i}_{run}.yaml"));
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let args = ["gemmap", "explore", arch.to_str().unwrap(), w.to_str().unwrap(), "-k", "2", "-o", path.to_str().unwrap()];
            let code = run_args(args, &mut out, &mut err);
            ensure(code == 0, || format!("explore exited {code}: {}", String::from_utf8_lossy(&err)))?;
            reports.push((std::fs::read(&path).map_err(|e| e.to_string())?, out));
        }
        ensure(reports[0] == reports[1], || format!("workload {i}: reports differ between runs"))?;
        ensure(String::from_utf8_lossy(&reports[0].1).contains("best_cycles"), || format!("workload {i}: no layer was explored"))?;
        sizes.push(reports[0].0.len());
    }
    Ok(format!("two runs byte-identical ({sizes:?} bytes)"))
}
