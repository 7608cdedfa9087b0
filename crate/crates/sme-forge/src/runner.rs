//! Kernel execution harnesses: emulator-backed GEMM verification, golden
//! encoding fixture checks, raw word/byte plumbing, and an optional
//! hardware execution path.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gemm::{generate_gemm, BLayout, EmitError, GemmSpec};
use crate::isa::text::{format_instruction, parse_instruction};
use crate::isa::{decode, encode, EncodedWord};
use crate::machine::{MachineState, StepError};
use crate::planner::plan_blocks;

/// Input distribution for [`verify_gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    /// Small integers stored as f32. Every intermediate is exactly
    /// representable, so the kernel must match a from-scratch oracle
    /// bit for bit.
    Integer,
    /// Uniform reals in [-1, 1), compared against an f64 reference with
    /// a relative tolerance.
    Uniform,
}

/// Outcome of a successful [`verify_gemm`] run.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Microkernel invocations in the plan.
    pub blocks: usize,
    /// Kernel size in instruction words.
    pub words: usize,
    /// Emulator steps the run took.
    pub steps: u64,
    /// Worst observed |got - want| / max(1, |want|) over C. Zero in
    /// integer mode by construction.
    pub max_rel_error: f64,
}

/// Verification failures.
#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("generation failed: {0}")]
    Emit(#[from] EmitError),
    #[error("execution failed: {0}")]
    Step(#[from] StepError),
    #[error("{0}")]
    Mismatch(String),
}

const A_BASE: u64 = 0x10_0000;
const B_BASE: u64 = 0x80_0000;
const C_BASE: u64 = 0x100_0000;
const SCRATCH_BASE: u64 = 0x180_0000;

/// Relative error bound for [`DataMode::Uniform`].
pub const UNIFORM_REL_TOL: f64 = 1e-5;

fn f32s_to_bytes(vals: &[f32]) -> Vec<u8> {
    vals.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// C[i,j] += sum_l A[i,l] * B[l,j], fused and k-ascending, mirroring the
/// accumulation the generated kernel performs.
fn oracle_f32(spec: &GemmSpec, a: &[f32], b: &[f32], c: &mut [f32]) {
    for j in 0..spec.n {
        for i in 0..spec.m {
            let mut acc = c[j * spec.ldc + i];
            for l in 0..spec.k {
                let av = a[l * spec.lda + i];
                let bv = match spec.b_layout {
                    BLayout::RowMajor => b[l * spec.ldb + j],
                    BLayout::ColMajor => b[j * spec.ldb + l],
                };
                acc = av.mul_add(bv, acc);
            }
            c[j * spec.ldc + i] = acc;
        }
    }
}

/// Same recurrence in f64, the reference for the uniform tolerance check.
fn oracle_f64(spec: &GemmSpec, a: &[f32], b: &[f32], c: &[f32]) -> Vec<f64> {
    let mut out: Vec<f64> = c.iter().map(|&v| f64::from(v)).collect();
    for j in 0..spec.n {
        for i in 0..spec.m {
            let mut acc = out[j * spec.ldc + i];
            for l in 0..spec.k {
                let av = f64::from(a[l * spec.lda + i]);
                let bv = f64::from(match spec.b_layout {
                    BLayout::RowMajor => b[l * spec.ldb + j],
                    BLayout::ColMajor => b[j * spec.ldb + l],
                });
                acc = av.mul_add(bv, acc);
            }
            out[j * spec.ldc + i] = acc;
        }
    }
    out
}

/// Generates the kernel for `spec`, runs it on the emulator over seeded
/// random operands, and checks the result, the reported op count, the
/// byte-level access footprint, and that slack rows of C survive.
pub fn verify_gemm(spec: &GemmSpec, seed: u64, mode: DataMode) -> Result<VerifyReport, VerifyError> {
    let kernel = generate_gemm(spec)?;
    let blocks = plan_blocks(spec.m, spec.n).map_err(EmitError::from)?;

    let a_elems = spec.lda * spec.k;
    let b_elems = match spec.b_layout {
        BLayout::RowMajor => spec.ldb * spec.k,
        BLayout::ColMajor => spec.ldb * spec.n,
    };
    let c_elems = spec.ldc * spec.n;
    let regions = [
        ("a", A_BASE, a_elems as u64 * 4, B_BASE),
        ("b", B_BASE, b_elems as u64 * 4, C_BASE),
        ("c", C_BASE, c_elems as u64 * 4, SCRATCH_BASE),
    ];
    for (name, base, len, next) in regions {
        if base + len > next {
            return Err(VerifyError::Mismatch(format!(
                "operand {name} ({len} bytes) overruns its {} byte region",
                next - base
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f32 {
        match mode {
            DataMode::Integer => rng.gen_range(-8..=8i32) as f32,
            DataMode::Uniform => rng.gen_range(-1.0f32..1.0),
        }
    };
    let a: Vec<f32> = (0..a_elems).map(|_| draw(&mut rng)).collect();
    let b: Vec<f32> = (0..b_elems).map(|_| draw(&mut rng)).collect();
    let c0: Vec<f32> = (0..c_elems).map(|_| draw(&mut rng)).collect();

    let mut want = c0.clone();
    oracle_f32(spec, &a, &b, &mut want);
    let want64 = oracle_f64(spec, &a, &b, &c0);

    let mut st = MachineState::new(512).expect("512 is a valid streaming vector length");
    st.write_memory(A_BASE, &f32s_to_bytes(&a));
    st.write_memory(B_BASE, &f32s_to_bytes(&b));
    st.write_memory(C_BASE, &f32s_to_bytes(&c0));

    let budget = 10_000 + 4 * kernel.words.len() as u64 + 24 * (blocks.len() * spec.k) as u64;
    let out = st.run(&kernel.words, &[A_BASE, B_BASE, C_BASE, SCRATCH_BASE], budget)?;
    if out.x0 != kernel.flops {
        return Err(VerifyError::Mismatch(format!(
            "kernel reported {} ops, expected {}",
            out.x0, kernel.flops
        )));
    }

    // Result values, and slack rows byte-identical to the initial image.
    let got_bytes = st.read_memory(C_BASE, c_elems * 4);
    let mut max_rel_error = 0.0f64;
    for j in 0..spec.n {
        for i in 0..spec.ldc {
            let e = j * spec.ldc + i;
            let got_raw: [u8; 4] = got_bytes[e * 4..e * 4 + 4].try_into().unwrap();
            let got = f32::from_le_bytes(got_raw);
            if i >= spec.m {
                if got_raw != c0[e].to_le_bytes() {
                    return Err(VerifyError::Mismatch(format!(
                        "slack element C[{i},{j}] changed from {} to {got}",
                        c0[e]
                    )));
                }
                continue;
            }
            match mode {
                DataMode::Integer => {
                    if got != want[e] {
                        return Err(VerifyError::Mismatch(format!(
                            "C[{i},{j}] = {got}, expected {} exactly",
                            want[e]
                        )));
                    }
                }
                DataMode::Uniform => {
                    let rel = (f64::from(got) - want64[e]).abs() / want64[e].abs().max(1.0);
                    max_rel_error = max_rel_error.max(rel);
                    if rel > UNIFORM_REL_TOL {
                        return Err(VerifyError::Mismatch(format!(
                            "C[{i},{j}] = {got}, expected {} (rel error {rel:.3e})",
                            want64[e]
                        )));
                    }
                }
            }
        }
    }

    // Footprint: stores only into active C and scratch, loads only from
    // the four declared operand regions.
    let scratch_end = SCRATCH_BASE + kernel.scratch_bytes as u64;
    let in_active_c = |addr: u64| {
        if !(C_BASE..C_BASE + c_elems as u64 * 4).contains(&addr) {
            return false;
        }
        let elem = ((addr - C_BASE) / 4) as usize;
        elem % spec.ldc < spec.m && elem / spec.ldc < spec.n
    };
    for &addr in st.stored_addrs() {
        if !in_active_c(addr) && !(SCRATCH_BASE..scratch_end).contains(&addr) {
            return Err(VerifyError::Mismatch(format!(
                "store outside active C and scratch at {addr:#x}"
            )));
        }
    }
    let loadable = [
        (A_BASE, A_BASE + a_elems as u64 * 4),
        (B_BASE, B_BASE + b_elems as u64 * 4),
        (C_BASE, C_BASE + c_elems as u64 * 4),
        (SCRATCH_BASE, scratch_end),
    ];
    for &addr in st.loaded_addrs() {
        if !loadable.iter().any(|&(lo, hi)| (lo..hi).contains(&addr)) {
            return Err(VerifyError::Mismatch(format!(
                "load outside the operand regions at {addr:#x}"
            )));
        }
    }

    Ok(VerifyReport {
        blocks: blocks.len(),
        words: kernel.words.len(),
        steps: out.steps,
        max_rel_error,
    })
}

/// Outcome of a [`golden_check`] pass over a fixture.
#[derive(Debug, Clone)]
pub struct GoldenReport {
    /// Entries checked.
    pub checked: usize,
    /// One line per failed entry, empty when everything matched.
    pub mismatches: Vec<String>,
}

/// Structurally malformed fixture text. Value disagreements are reported
/// in [`GoldenReport::mismatches`] instead.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("fixture line {line}: {msg}")]
pub struct FixtureParseError {
    pub line: usize,
    pub msg: String,
}

/// Checks a `<asm> => <hex word>` fixture both ways: the assembly must
/// encode to the word, and the word must decode and format back to the
/// same canonical spelling.
pub fn golden_check(text: &str) -> Result<GoldenReport, FixtureParseError> {
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let entry = raw.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        let (asm, hex) = entry.rsplit_once(" => ").ok_or_else(|| FixtureParseError {
            line,
            msg: "missing ` => ` separator".into(),
        })?;
        let asm = asm.trim();
        let hex = hex.trim();
        let word = EncodedWord::from_str_radix(hex, 16).map_err(|e| FixtureParseError {
            line,
            msg: format!("word `{hex}`: {e}"),
        })?;

        checked += 1;
        match parse_instruction(asm) {
            Ok(inst) => match encode(&inst) {
                Ok(got) if got == word => {}
                Ok(got) => mismatches
                    .push(format!("line {line}: `{asm}` encoded to {got:#010x}, expected {word:#010x}")),
                Err(e) => mismatches.push(format!("line {line}: `{asm}` failed to encode: {e}")),
            },
            Err(e) => mismatches.push(format!("line {line}: `{asm}` failed to parse: {e}")),
        }
        match decode(word) {
            Ok(inst) => {
                let text = format_instruction(&inst);
                if text != asm {
                    mismatches.push(format!(
                        "line {line}: {word:#010x} formatted as `{text}`, expected `{asm}`"
                    ));
                }
            }
            Err(e) => mismatches.push(format!("line {line}: {word:#010x} failed to decode: {e}")),
        }
    }
    Ok(GoldenReport { checked, mismatches })
}

/// Little-endian byte image of instruction words, the on-disk kernel form.
pub fn words_to_bytes(words: &[EncodedWord]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Byte length not divisible by the 4-byte instruction size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("byte length {0} is not a multiple of 4")]
pub struct RaggedLength(pub usize);

/// Inverse of [`words_to_bytes`].
pub fn words_from_bytes(bytes: &[u8]) -> Result<Vec<EncodedWord>, RaggedLength> {
    if !bytes.len().is_multiple_of(4) {
        return Err(RaggedLength(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| EncodedWord::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Malformed `file@address` operand.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid load spec `{spec}`: {msg}")]
pub struct LoadSpecError {
    pub spec: String,
    pub msg: String,
}

/// Splits a `path@address` operand on the last `@`. The address is hex
/// with a `0x` prefix or decimal without.
pub fn parse_load_spec(spec: &str) -> Result<(String, u64), LoadSpecError> {
    let err = |msg: &str| LoadSpecError { spec: spec.into(), msg: msg.into() };
    let (path, addr_text) = spec.rsplit_once('@').ok_or_else(|| err("expected path@address"))?;
    if path.is_empty() {
        return Err(err("empty path"));
    }
    let addr = match addr_text.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => addr_text.parse(),
    }
    .map_err(|_| err("unparseable address"))?;
    Ok((path.to_string(), addr))
}

/// Hardware execution failures.
#[derive(Debug, thiserror::Error)]
pub enum NativeError {
    #[error("native execution unavailable: {0}")]
    UnsupportedHost(String),
    #[error("kernel mapping failed: {0}")]
    Map(String),
    #[error("too many arguments: {0} > 8")]
    TooManyArgs(usize),
}

/// Runs a kernel on the host CPU with `args` in x0..x7 and returns x0.
///
/// Only available with the `native` feature on an AArch64 Linux host
/// whose CPU reports FEAT_SME; everywhere else this returns
/// [`NativeError::UnsupportedHost`] so callers can fall back to the
/// emulator.
pub fn native_execute(words: &[EncodedWord], args: &[u64]) -> Result<u64, NativeError> {
    if args.len() > 8 {
        return Err(NativeError::TooManyArgs(args.len()));
    }
    native_impl::execute(words, args)
}

#[cfg(all(feature = "native", target_os = "linux", target_arch = "aarch64"))]
mod native_impl {
    use super::NativeError;
    use crate::isa::EncodedWord;

    // getauxval(AT_HWCAP2) bit advertising FEAT_SME on Linux.
    const HWCAP2_SME: libc::c_ulong = 1 << 23;

    pub fn execute(words: &[EncodedWord], args: &[u64]) -> Result<u64, NativeError> {
        if unsafe { libc::getauxval(libc::AT_HWCAP2) } & HWCAP2_SME == 0 {
            return Err(NativeError::UnsupportedHost("CPU does not report FEAT_SME".into()));
        }
        let len = words.len() * 4;
        if len == 0 {
            return Err(NativeError::Map("empty kernel".into()));
        }
        unsafe {
            let page = libc::sysconf(libc::_SC_PAGESIZE) as usize;
            let size = len.div_ceil(page) * page;
            let mem = libc::mmap(
                std::ptr::null_mut(),
                size,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_PRIVATE | libc::MAP_ANONYMOUS,
                -1,
                0,
            );
            if mem == libc::MAP_FAILED {
                return Err(NativeError::Map("mmap failed".into()));
            }
            std::ptr::copy_nonoverlapping(words.as_ptr(), mem.cast(), words.len());
            if libc::mprotect(mem, size, libc::PROT_READ | libc::PROT_EXEC) != 0 {
                libc::munmap(mem, size);
                return Err(NativeError::Map("mprotect failed".into()));
            }
            flush_icache(mem.cast(), len);
            let mut a = [0u64; 8];
            a[..args.len()].copy_from_slice(args);
            let x0 = call(mem as usize, &a);
            libc::munmap(mem, size);
            Ok(x0)
        }
    }

    /// Clean the data cache and invalidate the instruction cache over the
    /// freshly written kernel so the core fetches what was stored.
    unsafe fn flush_icache(start: *const u8, len: usize) {
        // 64-byte lines are universal on shipping cores; a smaller true
        // line size would only mean redundant maintenance.
        let line = 64usize;
        let begin = start as usize & !(line - 1);
        let end = start as usize + len;
        let mut p = begin;
        while p < end {
            std::arch::asm!("dc cvau, {0}", in(reg) p);
            p += line;
        }
        std::arch::asm!("dsb ish");
        let mut p = begin;
        while p < end {
            std::arch::asm!("ic ivau, {0}", in(reg) p);
            p += line;
        }
        std::arch::asm!("dsb ish", "isb");
    }

    /// Branch to the kernel with the eight argument registers loaded.
    /// Kernels clobber the full SIMD file (streaming-mode entry zeroes
    /// it), so every v register is declared clobbered.
    unsafe fn call(entry: usize, a: &[u64; 8]) -> u64 {
        let mut x0 = a[0];
        std::arch::asm!(
            "blr {entry}",
            entry = in(reg) entry,
            inout("x0") x0,
            in("x1") a[1],
            in("x2") a[2],
            in("x3") a[3],
            in("x4") a[4],
            in("x5") a[5],
            in("x6") a[6],
            in("x7") a[7],
            out("x8") _, out("x9") _, out("x10") _, out("x11") _,
            out("x12") _, out("x13") _, out("x14") _, out("x15") _,
            out("x16") _, out("x17") _, out("lr") _,
            clobber_abi("C"),
        );
        x0
    }
}

#[cfg(not(all(feature = "native", target_os = "linux", target_arch = "aarch64")))]
mod native_impl {
    use super::NativeError;
    use crate::isa::EncodedWord;

    pub fn execute(_words: &[EncodedWord], _args: &[u64]) -> Result<u64, NativeError> {
        Err(NativeError::UnsupportedHost(
            "requires the `native` feature on an AArch64 Linux host".into(),
        ))
    }
}
