//! Random quantized GEMMs and convolutions compiled for the Gemmini-like
//! target and run through the program interpreter must match the host
//! reference bit for bit.

use std::collections::BTreeMap;

use gemmap_core::arch::gemmini_like;
use gemmap_core::lowering::{interpret, lower_mapping, tensorize};
use gemmap_core::pipeline::{compile_graph, run_compiled, PipelineOptions};
use gemmap_core::solver::solve;
use gemmap_core::spacegen::{padded_shape, tuning_points};
use gemmap_core::workload::{
    execute_graph, reference_execute, Conv2dAttrs, Epilogue, Graph, GraphInput, GraphOp, OpKind,
};
use gemmap_core::{GemmShape, GemmWorkload, Rational, TensorValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| rng.gen()).collect()
}

fn epilogue(rng: &mut ChaCha8Rng, k: usize) -> Epilogue {
    let lo = rng.gen_range(-128..=0i32) as i8;
    let hi = rng.gen_range(0..=127i32) as i8;
    Epilogue {
        bias: (0..k).map(|_| rng.gen_range(-2000..2000)).collect(),
        scale: Rational::new(rng.gen_range(1..8), rng.gen_range(16..1024)),
        clip_min: lo,
        clip_max: hi,
    }
}

#[test]
fn random_gemms_match_reference() {
    let arch = gemmini_like();
    let points = tuning_points(&arch, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut checked = 0;
    for _ in 0..100 {
        let shape = GemmShape::new(rng.gen_range(4..=64), rng.gen_range(4..=64), rng.gen_range(4..=64));
        let (n, c, k) = (shape.n as usize, shape.c as usize, shape.k as usize);
        let w = GemmWorkload::new(shape, bytes(&mut rng, c * k), epilogue(&mut rng, k)).unwrap();
        let x = TensorValue::i8(vec![n, c], bytes(&mut rng, n * c));
        let expected = reference_execute(&w, &x).unwrap();
        let tp = &points[rng.gen_range(0..points.len())];
        let df = arch.dataflow(&tp.dataflow).unwrap();
        let found = solve(padded_shape(shape, &arch), &arch, df, &tp.shares, tp.double_buffered, 2).expect("small GEMMs always fit");
        for s in &found {
            let p = tensorize(&lower_mapping(&s.mapping, &w, &arch).unwrap(), &arch).unwrap();
            assert_eq!(interpret(&p, &x).unwrap(), expected, "{shape} at {tp:?}");
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

fn op(id: &str, kind: OpKind, inputs: &[&str]) -> GraphOp {
    GraphOp { id: id.into(), kind, inputs: inputs.iter().map(|s| s.to_string()).collect() }
}

fn conv_graph(rng: &mut ChaCha8Rng) -> (Graph, TensorValue) {
    let attrs = Conv2dAttrs {
        kernel: (rng.gen_range(1..=3), rng.gen_range(1..=3)),
        stride: (rng.gen_range(1..=2), rng.gen_range(1..=2)),
        padding: (rng.gen_range(0..=1), rng.gen_range(0..=1)),
    };
    let (b, h, wd, cin, kout) = (rng.gen_range(1..=2), rng.gen_range(3..=9), rng.gen_range(3..=9), rng.gen_range(1..=8), rng.gen_range(1..=20));
    let ep = epilogue(rng, kout);
    let mut g = Graph {
        inputs: vec![GraphInput { name: "x".into(), shape: vec![b, h, wd, cin] }],
        outputs: vec!["out".into()],
        ..Default::default()
    };
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
    let x = TensorValue::i8(vec![b, h, wd, cin], bytes(rng, b * h * wd * cin));
    (g, x)
}

#[test]
fn random_convs_match_direct_convolution() {
    let arch = gemmini_like();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for _ in 0..20 {
        let (g, x) = conv_graph(&mut rng);
        let inputs = BTreeMap::from([("x".to_string(), x)]);
        // the unfused graph evaluates the convolution directly, without im2col
        let expected = execute_graph(&g, &inputs).unwrap();
        let cg = compile_graph(&g, &arch, PipelineOptions::default()).unwrap();
        assert_eq!(cg.graph.ops.len(), 1, "conv chain fuses into one operator");
        let (got, trace) = run_compiled(&cg, &arch, &inputs).unwrap();
        assert_eq!(got, expected);
        assert!(trace.lines().any(|l| l.starts_with("COMPUTE")));
    }
}

#[test]
fn im2col_gemm_equals_direct_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..120 {
        let (g, x) = conv_graph(&mut rng);
        let OpKind::QnnConv2d(attrs) = g.ops[0].kind else { unreachable!() };
        let inputs = BTreeMap::from([("x".to_string(), x)]);
        let direct = execute_graph(&g, &inputs).unwrap();
        let mut lowered = g.clone();
        lowered.ops.splice(
            0..1,
            [op("cols", OpKind::Im2col(attrs), &["x"]), op("wm", OpKind::Flatten { axis: 3 }, &["w"]), op("mm", OpKind::QnnDense, &["cols", "wm"])],
        );
        lowered.ops[3].inputs[0] = "mm".into();
        let flat = execute_graph(&lowered, &inputs).unwrap();
        assert_eq!(flat["out"].as_i8(), direct["out"].as_i8());
    }
}
