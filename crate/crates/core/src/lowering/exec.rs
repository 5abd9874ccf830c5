//! Reference interpreter for tensorized programs.
//!
//! On-chip levels are byte arrays with a per-byte written bit. Each operand
//! owns a region of its level; under double buffering successive residencies
//! alternate between the two halves of the region. Off-chip memory holds the
//! int8 input and weights, an int32 partial-sum buffer, and the int8 result,
//! which the final store of each output tile writes through the epilogue.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use super::ir::{shape_string, MemOp, Node, Program};
use super::LowerError;
use crate::arch::ArchSpec;
use crate::dim::{Dim, Operand};
use crate::workload::TensorValue;

/// A tile resident at one level: which buffer half, and its window in the
/// operand's (row, col) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Resident {
    half: u64,
    origin: (u64, u64),
    extent: (u64, u64),
}

struct Machine<'a> {
    p: &'a Program,
    bounds: [u64; 3],
    mem: Vec<Vec<u8>>,
    written: Vec<Vec<bool>>,
    resident: Vec<[Option<Resident>; 3]>,
    residencies: Vec<[u64; 3]>,
    input: &'a [i8],
    psum: Vec<i32>,
    psum_written: Vec<bool>,
    out: Vec<i8>,
    out_written: Vec<bool>,
    trace: Option<&'a mut String>,
}

impl<'a> Machine<'a> {
    fn new(p: &'a Program, input: &'a [i8], trace: Option<&'a mut String>) -> Self {
        let n = p.level_names.len();
        let mut mem = Vec::with_capacity(n);
        let mut written = Vec::with_capacity(n);
        for l in 0..n {
            let bytes = if l == ArchSpec::PE_LEVEL {
                p.regions[l].iter().flatten().map(|r| r.base + r.size).max().unwrap_or(0)
            } else {
                p.level_bytes[l].unwrap_or(0)
            } as usize;
            mem.push(vec![0u8; bytes]);
            written.push(vec![false; bytes]);
        }
        let s = p.workload.shape;
        let nk = (s.n * s.k) as usize;
        Self {
            p,
            bounds: s.bounds(),
            mem,
            written,
            resident: vec![[None; 3]; n],
            residencies: vec![[0; 3]; n],
            input,
            psum: vec![0; nk],
            psum_written: vec![false; nk],
            out: vec![0; nk],
            out_written: vec![false; nk],
            trace,
        }
    }

    fn level_name(&self, l: usize) -> &str {
        &self.p.level_names[l]
    }

    fn tile_extent(&self, level: usize, origin: [u64; 3]) -> [u64; 3] {
        let t = self.p.mapping.tile(level);
        Dim::ALL.map(|d| t[d.index()].min(self.bounds[d.index()] - origin[d.index()]))
    }

    fn window(&self, op: Operand, level: usize, origin: [u64; 3]) -> ((u64, u64), (u64, u64)) {
        let ext = self.tile_extent(level, origin);
        let (r, c) = op.axes();
        ((origin[r.index()], origin[c.index()]), (ext[r.index()], ext[c.index()]))
    }

    /// Opens a new residency of `op` at `level` and returns it.
    fn place(&mut self, op: Operand, level: usize, origin: (u64, u64), extent: (u64, u64)) -> Result<Resident, LowerError> {
        let region = self.p.regions[level][op.index()].expect("on-chip level has a region for every held operand");
        let bytes = extent.0 * extent.1 * op.elem_bytes();
        if bytes > region.size {
            return Err(LowerError::BudgetOverflow {
                level: self.level_name(level).into(),
                operand: op,
                needed: bytes,
                available: region.size,
            });
        }
        let count = &mut self.residencies[level][op.index()];
        let half = if region.double_buffered { *count % 2 } else { 0 };
        *count += 1;
        let r = Resident { half, origin, extent };
        self.resident[level][op.index()] = Some(r);
        Ok(r)
    }

    fn base_of(&self, op: Operand, level: usize, half: u64) -> u64 {
        let region = self.p.regions[level][op.index()].expect("region");
        region.base + half * region.size
    }

    /// Byte address of element `(row, col)` in the resident tile.
    fn addr(&self, op: Operand, level: usize, row: u64, col: u64) -> Result<usize, LowerError> {
        let r = self.resident[level][op.index()].ok_or_else(|| LowerError::NotResident { level: self.level_name(level).into(), operand: op })?;
        if row < r.origin.0 || col < r.origin.1 || row >= r.origin.0 + r.extent.0 || col >= r.origin.1 + r.extent.1 {
            return Err(LowerError::OutsideTile { level: self.level_name(level).into(), operand: op });
        }
        let idx = (row - r.origin.0) * r.extent.1 + (col - r.origin.1);
        Ok((self.base_of(op, level, r.half) + idx * op.elem_bytes()) as usize)
    }

    fn read(&self, op: Operand, level: usize, row: u64, col: u64) -> Result<i32, LowerError> {
        let a = self.addr(op, level, row, col)?;
        let w = op.elem_bytes() as usize;
        if !self.written[level][a..a + w].iter().all(|&b| b) {
            return Err(LowerError::UninitializedRead { level: self.level_name(level).into(), operand: op, offset: a as u64 });
        }
        let m = &self.mem[level];
        Ok(if w == 1 { m[a] as i8 as i32 } else { i32::from_le_bytes([m[a], m[a + 1], m[a + 2], m[a + 3]]) })
    }

    fn write(&mut self, op: Operand, level: usize, row: u64, col: u64, v: i32) -> Result<(), LowerError> {
        let a = self.addr(op, level, row, col)?;
        let w = op.elem_bytes() as usize;
        if w == 1 {
            self.mem[level][a] = v as i8 as u8;
        } else {
            self.mem[level][a..a + 4].copy_from_slice(&v.to_le_bytes());
        }
        self.written[level][a..a + w].iter_mut().for_each(|b| *b = true);
        Ok(())
    }

    fn clear(&mut self, op: Operand, level: usize, r: Resident) {
        let base = self.base_of(op, level, r.half) as usize;
        let len = (r.extent.0 * r.extent.1 * op.elem_bytes()) as usize;
        self.written[level][base..base + len].iter_mut().for_each(|b| *b = false);
    }

    /// Element of `op` in off-chip memory.
    fn dram_read(&self, op: Operand, row: u64, col: u64) -> Result<i32, LowerError> {
        let [_, c, k] = self.bounds;
        Ok(match op {
            Operand::Input => self.input[(row * c + col) as usize] as i32,
            Operand::Weight => self.p.workload.weight[(row * k + col) as usize] as i32,
            Operand::Output => {
                let i = (row * k + col) as usize;
                if !self.psum_written[i] {
                    return Err(LowerError::UninitializedRead { level: self.level_name(self.p.outermost()).into(), operand: op, offset: i as u64 * 4 });
                }
                self.psum[i]
            }
        })
    }

    /// Byte offset of a tile origin in off-chip memory, row-major per operand.
    fn dram_offset(&self, op: Operand, origin: (u64, u64)) -> u64 {
        let (_, cd) = op.axes();
        (origin.0 * self.bounds[cd.index()] + origin.1) * op.elem_bytes()
    }

    /// Byte offset of a tile origin inside the resident tile of `level`.
    fn onchip_offset(&self, op: Operand, level: usize, origin: (u64, u64)) -> u64 {
        match self.addr(op, level, origin.0, origin.1) {
            Ok(a) => a as u64,
            Err(_) => 0,
        }
    }

    fn emit(&mut self, line: core::fmt::Arguments<'_>) {
        if let Some(t) = self.trace.as_deref_mut() {
            let _ = t.write_fmt(line);
            t.push('\n');
        }
    }

    fn load(&mut self, m: &MemOp, origin: [u64; 3]) -> Result<(), LowerError> {
        let op = m.operand;
        let (o, e) = self.window(op, m.lower, origin);
        if op == Operand::Output && origin[Dim::C.index()] == 0 {
            // first visit: the tile starts from zero, nothing to read back
            let r = self.place(op, m.lower, o, e)?;
            self.clear(op, m.lower, r);
            return Ok(());
        }
        let outer = self.p.outermost();
        let src = if m.upper == outer { self.dram_offset(op, o) } else { self.onchip_offset(op, m.upper, o) };
        let mut vals = Vec::with_capacity((e.0 * e.1) as usize);
        for r in o.0..o.0 + e.0 {
            for c in o.1..o.1 + e.1 {
                vals.push(if m.upper == outer { self.dram_read(op, r, c)? } else { self.read(op, m.upper, r, c)? });
            }
        }
        let res = self.place(op, m.lower, o, e)?;
        let mut it = vals.into_iter();
        for r in o.0..o.0 + e.0 {
            for c in o.1..o.1 + e.1 {
                self.write(op, m.lower, r, c, it.next().unwrap_or(0))?;
            }
        }
        let dst = self.base_of(op, m.lower, res.half);
        let bytes = e.0 * e.1 * op.elem_bytes();
        let (uname, lname) = (self.level_name(m.upper).to_owned(), self.level_name(m.lower).to_owned());
        self.emit(format_args!(
            "MVIN id={} op={} src={uname}:{src} dst={lname}:{dst} shape={} bytes={bytes}",
            m.intrinsic.as_deref().unwrap_or("-"),
            op.name(),
            shape_string(e.0, e.1)
        ));
        Ok(())
    }

    fn store(&mut self, m: &MemOp, origin: [u64; 3]) -> Result<(), LowerError> {
        let op = m.operand;
        let (o, e) = self.window(op, m.lower, origin);
        let outer = self.p.outermost();
        let c_bound = self.bounds[Dim::C.index()];
        let is_final = m.upper == outer && origin[Dim::C.index()] + m.c_window >= c_bound;
        let src = self.onchip_offset(op, m.lower, o);
        let dst = if m.upper == outer { self.dram_offset(op, o) } else { self.onchip_offset(op, m.upper, o) };
        let k = self.bounds[Dim::K.index()];
        for r in o.0..o.0 + e.0 {
            for c in o.1..o.1 + e.1 {
                let v = self.read(op, m.lower, r, c)?;
                if m.upper == outer {
                    let i = (r * k + c) as usize;
                    if is_final {
                        self.out[i] = self.p.workload.epilogue.apply(v, c as usize);
                        self.out_written[i] = true;
                    } else {
                        self.psum[i] = v;
                        self.psum_written[i] = true;
                    }
                } else {
                    self.write(op, m.upper, r, c, v)?;
                }
            }
        }
        let bytes = e.0 * e.1 * op.elem_bytes();
        let (uname, lname) = (self.level_name(m.upper).to_owned(), self.level_name(m.lower).to_owned());
        self.emit(format_args!(
            "MVOUT id={} op={} src={lname}:{src} dst={uname}:{dst} shape={} bytes={bytes} final={}",
            m.intrinsic.as_deref().unwrap_or("-"),
            op.name(),
            shape_string(e.0, e.1),
            is_final as u8
        ));
        Ok(())
    }

    fn compute(&mut self, intrinsic: &str, origin: [u64; 3]) -> Result<(), LowerError> {
        let pe = ArchSpec::PE_LEVEL;
        let ext = self.tile_extent(pe, origin);
        let [n0, c0, k0] = origin;
        let [ne, ce, ke] = ext;
        let acc = c0 != 0;
        for n in n0..n0 + ne {
            for k in k0..k0 + ke {
                let mut sum = if acc { self.read(Operand::Output, pe, n, k)? } else { 0 };
                for c in c0..c0 + ce {
                    let a = self.read(Operand::Input, pe, n, c)?;
                    let b = self.read(Operand::Weight, pe, c, k)?;
                    sum = sum.wrapping_add(a * b);
                }
                self.write(Operand::Output, pe, n, k, sum)?;
            }
        }
        self.emit(format_args!(
            "COMPUTE id={intrinsic} n={n0}:{ne} c={c0}:{ce} k={k0}:{ke} acc={}",
            acc as u8
        ));
        Ok(())
    }

    fn run(&mut self, nodes: &[Node], origin: [u64; 3]) -> Result<(), LowerError> {
        for node in nodes {
            match node {
                Node::Loop(l) => {
                    for i in 0..l.extent {
                        let mut o = origin;
                        o[l.dim.index()] += i * l.step;
                        if o[l.dim.index()] >= self.bounds[l.dim.index()] {
                            break; // clamped edge: nothing left in this dimension
                        }
                        self.run(&l.body, o)?;
                    }
                }
                Node::Load(m) => self.load(m, origin)?,
                Node::Store(m) => self.store(m, origin)?,
                Node::Compute { intrinsic } => self.compute(intrinsic, origin)?,
                Node::Mac => return Err(LowerError::NotTensorized),
            }
        }
        Ok(())
    }
}

fn execute(p: &Program, input: &[i8], trace: Option<&mut String>) -> Result<Vec<i8>, LowerError> {
    if !p.is_tensorized() {
        return Err(LowerError::NotTensorized);
    }
    let mut m = Machine::new(p, input, trace);
    for id in &p.config {
        let df = p.dataflow.clone();
        m.emit(format_args!("CONFIG id={id} dataflow={df}"));
    }
    m.run(&p.body, [0; 3])?;
    if let Some(i) = m.out_written.iter().position(|w| !w) {
        return Err(LowerError::IncompleteOutput(i));
    }
    Ok(m.out)
}

/// Runs a tensorized program on `input` (`[N, C]` int8) and returns `[N, K]` int8.
pub fn interpret(p: &Program, input: &TensorValue) -> Result<TensorValue, LowerError> {
    let s = p.workload.shape;
    let expected = vec![s.n as usize, s.c as usize];
    if input.shape != expected {
        return Err(LowerError::ShapeMismatch { expected, got: input.shape.clone() });
    }
    let x = input.as_i8().ok_or(LowerError::InputType)?;
    let out = execute(p, x, None)?;
    Ok(TensorValue::i8(vec![s.n as usize, s.k as usize], out))
}

/// One line per issued intrinsic, in program order.
pub fn emit_trace(p: &Program) -> Result<String, LowerError> {
    let s = p.workload.shape;
    let zeros = vec![0i8; (s.n * s.c) as usize];
    let mut t = String::new();
    execute(p, &zeros, Some(&mut t))?;
    Ok(t)
}

/// Runs `input` and returns both the output and the trace.
pub fn interpret_traced(p: &Program, input: &TensorValue) -> Result<(TensorValue, String), LowerError> {
    let s = p.workload.shape;
    let expected = vec![s.n as usize, s.c as usize];
    if input.shape != expected {
        return Err(LowerError::ShapeMismatch { expected, got: input.shape.clone() });
    }
    let x = input.as_i8().ok_or(LowerError::InputType)?;
    let mut t = String::new();
    let out = execute(p, x, Some(&mut t))?;
    Ok((TensorValue::i8(vec![s.n as usize, s.k as usize], out), t))
}

/// Bytes moved per `(operand, upper, lower)` boundary according to a trace.
pub fn trace_bytes(trace: &str) -> Vec<(String, String, String, u64)> {
    let mut acc: Vec<(String, String, String, u64)> = Vec::new();
    for line in trace.lines() {
        let mut words = line.split_whitespace();
        let (kind, fields) = match words.next() {
            Some(k @ ("MVIN" | "MVOUT")) => (k, words.collect::<Vec<_>>()),
            _ => continue,
        };
        let get = |key: &str| fields.iter().find_map(|f| f.strip_prefix(key)).unwrap_or("");
        let lvl = |v: &str| v.split(':').next().unwrap_or("").to_owned();
        let (src, dst) = (lvl(get("src=")), lvl(get("dst=")));
        let (upper, lower) = if kind == "MVIN" { (src, dst) } else { (dst, src) };
        let op = get("op=").to_owned();
        let bytes: u64 = get("bytes=").parse().unwrap_or(0);
        match acc.iter_mut().find(|e| e.0 == op && e.1 == upper && e.2 == lower) {
            Some(e) => e.3 += bytes,
            None => acc.push((op, upper, lower, bytes)),
        }
    }
    acc
}
