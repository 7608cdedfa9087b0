//! Command-line front end: generate kernels to raw word images, inspect
//! block plans, verify kernels on the emulator, emit and run benchmark
//! kernels, check the golden encoding fixture, and trace arbitrary
//! kernel images.
//!
//! Exit codes: 0 success, 1 check or execution failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sme_forge::bench::{
    emit_bandwidth, emit_throughput, BwDirection, BwStrategy, Dtype, ThroughputKind,
};
use sme_forge::gemm::{generate_gemm, BLayout, GemmSpec, KernelBuffer};
use sme_forge::machine::{MachineState, StepEvent};
use sme_forge::planner::{plan_blocks, plan_cost};
use sme_forge::runner::{
    golden_check, native_execute, parse_load_spec, verify_gemm, words_from_bytes, words_to_bytes,
    DataMode,
};

#[derive(Parser)]
#[command(
    name = "sme-forge",
    version,
    about = "Generates, verifies, and emulates AArch64 SME matrix kernels"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a GEMM kernel image plus a `.manifest` sidecar.
    Gen(GenArgs),
    /// Print the block decomposition chosen for an output shape.
    DumpPlan { m: usize, n: usize },
    /// Generate a GEMM kernel and verify it on the emulator.
    Verify(VerifyArgs),
    /// Benchmark kernel tools.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Check an `asm => word` encoding fixture in both directions.
    GoldenCheck { path: PathBuf },
    /// Run a raw kernel image on the emulator.
    Emulate(EmulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    /// B rows are contiguous; streamed directly.
    Row,
    /// B columns are contiguous; transposed through scratch.
    Col,
}

impl From<LayoutArg> for BLayout {
    fn from(v: LayoutArg) -> Self {
        match v {
            LayoutArg::Row => BLayout::RowMajor,
            LayoutArg::Col => BLayout::ColMajor,
        }
    }
}

#[derive(clap::Args)]
struct ShapeArgs {
    /// Rows of A and C.
    m: usize,
    /// Columns of B and C.
    n: usize,
    /// Columns of A, rows of B.
    k: usize,
    /// Leading dimension of A (elements); defaults to m.
    #[arg(long)]
    lda: Option<usize>,
    /// Leading dimension of B (elements); defaults to n (row) or k (col).
    #[arg(long)]
    ldb: Option<usize>,
    /// Leading dimension of C (elements); defaults to m.
    #[arg(long)]
    ldc: Option<usize>,
    /// Memory order of B.
    #[arg(long, value_enum, default_value = "row")]
    layout: LayoutArg,
}

impl ShapeArgs {
    fn spec(&self) -> GemmSpec {
        let b_layout = BLayout::from(self.layout);
        GemmSpec {
            m: self.m,
            n: self.n,
            k: self.k,
            lda: self.lda.unwrap_or(self.m),
            ldb: self.ldb.unwrap_or(match b_layout {
                BLayout::RowMajor => self.n,
                BLayout::ColMajor => self.k,
            }),
            ldc: self.ldc.unwrap_or(self.m),
            b_layout,
        }
    }
}

#[derive(clap::Args)]
struct GenArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Output path for the little-endian word image.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Small integer operands; the result must be bit-exact.
    Integer,
    /// Uniform [-1, 1) operands against an f64 reference.
    Uniform,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Seed for the operand generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "integer")]
    mode: ModeArg,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Emit a benchmark kernel image plus a `.manifest` sidecar.
    #[command(subcommand)]
    Emit(BenchEmitCmd),
    /// Execute a kernel image on the host CPU (requires the `native`
    /// feature on an SME-capable AArch64 Linux host).
    Run(BenchRunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    NeonFmla,
    SmeFmopa,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    Fp32,
    Fp64,
    Fp16,
}

impl From<DtypeArg> for Dtype {
    fn from(v: DtypeArg) -> Self {
        match v {
            DtypeArg::Fp32 => Dtype::Fp32,
            DtypeArg::Fp64 => Dtype::Fp64,
            DtypeArg::Fp16 => Dtype::Fp16,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Direct,
    Mova1,
    Mova2,
    Mova4,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Load,
    Store,
}

#[derive(Subcommand)]
enum BenchEmitCmd {
    /// Arithmetic throughput loop; takes an iteration count in x0.
    Throughput {
        #[arg(long, value_enum)]
        unit: UnitArg,
        #[arg(long, value_enum, default_value = "fp32")]
        dtype: DtypeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// ZA transfer loop; takes a pass count in x0 and a buffer in x1.
    Bandwidth {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, value_enum)]
        direction: DirectionArg,
        /// Bytes moved per pass.
        #[arg(long)]
        bytes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RateUnit {
    /// Report the rate as GFLOPS.
    Ops,
    /// Report the rate as GiB/s.
    Bytes,
}

#[derive(clap::Args)]
struct BenchRunArgs {
    /// Kernel image to execute.
    kernel: PathBuf,
    /// Allocate a zeroed 64-byte-aligned host buffer of this many bytes
    /// and pass its address in x1 (bandwidth kernels).
    #[arg(long)]
    buffer_bytes: Option<usize>,
    /// What the kernel's per-iteration x0 report counts.
    #[arg(long, value_enum, default_value = "ops")]
    unit: RateUnit,
}

#[derive(clap::Args)]
struct EmulateArgs {
    /// Kernel image to execute.
    kernel: PathBuf,
    /// Preload a file into emulated memory as `path@address`.
    #[arg(long = "load")]
    loads: Vec<String>,
    /// Argument registers x0.. (decimal or 0x-hex), up to eight.
    #[arg(long = "arg")]
    args: Vec<String>,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Print `pc=<index> <instruction>` before every step.
    #[arg(long)]
    trace: bool,
}

/// Failures after successful argument parsing.
enum Failure {
    /// Invalid invocation beyond clap's reach (exit 2).
    Usage(String),
    /// The command ran and failed (exit 1).
    Check(String),
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn check_failed<T>(msg: impl ToString) -> Result<T, Failure> {
    Err(Failure::Check(msg.to_string()))
}

fn parse_u64(text: &str) -> Result<u64, Failure> {
    let parsed = match text.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => text.parse(),
    };
    match parsed {
        Ok(v) => Ok(v),
        Err(_) => usage(format!("`{text}` is not a decimal or 0x-hex number")),
    }
}

fn parse_args_u64(texts: &[String]) -> Result<Vec<u64>, Failure> {
    if texts.len() > 8 {
        return usage(format!("{} arguments given, the kernel ABI has eight", texts.len()));
    }
    texts.iter().map(|t| parse_u64(t)).collect()
}

/// Streaming vector length from SME_FORGE_SVL, defaulting to 512.
fn svl_from_env() -> Result<u32, Failure> {
    match std::env::var("SME_FORGE_SVL") {
        Ok(text) => match text.parse() {
            Ok(v) => Ok(v),
            Err(_) => usage(format!("SME_FORGE_SVL=`{text}` is not a number")),
        },
        Err(_) => Ok(512),
    }
}

/// Kernel generation is pinned to a 512-bit streaming vector length;
/// reject an environment that asks for anything else.
fn require_svl_512() -> Result<(), Failure> {
    match svl_from_env()? {
        512 => Ok(()),
        other => usage(format!(
            "kernel generation assumes a 512-bit streaming vector length, \
             SME_FORGE_SVL={other} is unsupported"
        )),
    }
}

fn write_kernel(out: &Path, kernel: &KernelBuffer) -> Result<(), Failure> {
    let write = |path: &Path, data: &[u8]| match std::fs::write(path, data) {
        Ok(()) => Ok(()),
        Err(e) => check_failed(format!("writing {}: {e}", path.display())),
    };
    write(out, &words_to_bytes(&kernel.words))?;
    let manifest = format!(
        "words={}\nscratch_bytes={}\nflops={}\n",
        kernel.words.len(),
        kernel.scratch_bytes,
        kernel.flops
    );
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".manifest");
    write(Path::new(&sidecar), manifest.as_bytes())
}

fn read_kernel(path: &Path) -> Result<Vec<u32>, Failure> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return check_failed(format!("reading {}: {e}", path.display())),
    };
    match words_from_bytes(&bytes) {
        Ok(words) => Ok(words),
        Err(e) => check_failed(format!("{}: {e}", path.display())),
    }
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    require_svl_512()?;
    let spec = args.shape.spec();
    let kernel = match generate_gemm(&spec) {
        Ok(k) => k,
        Err(e) => return check_failed(e),
    };
    write_kernel(&args.out, &kernel)?;
    println!(
        "wrote {} words to {} (scratch_bytes={} flops={})",
        kernel.words.len(),
        args.out.display(),
        kernel.scratch_bytes,
        kernel.flops
    );
    Ok(())
}

fn cmd_dump_plan(m: usize, n: usize) -> Result<(), Failure> {
    require_svl_512()?;
    let blocks = match plan_blocks(m, n) {
        Ok(b) => b,
        Err(e) => return check_failed(e),
    };
    for (idx, b) in blocks.iter().enumerate() {
        println!(
            "{idx} {} {} {} {} {}",
            b.strategy, b.m_off, b.n_off, b.m_active, b.n_active
        );
    }
    let cost = plan_cost(&blocks);
    println!("# blocks={} values_per_k_step={}", cost.microkernels, cost.values_per_k_step);
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    require_svl_512()?;
    let spec = args.shape.spec();
    let mode = match args.mode {
        ModeArg::Integer => DataMode::Integer,
        ModeArg::Uniform => DataMode::Uniform,
    };
    match verify_gemm(&spec, args.seed, mode) {
        Ok(report) => {
            println!(
                "PASS m={} n={} k={} blocks={} words={} steps={} max_rel_error={:.3e}",
                spec.m, spec.n, spec.k, report.blocks, report.words, report.steps,
                report.max_rel_error
            );
            Ok(())
        }
        Err(e) => check_failed(format!("FAIL m={} n={} k={}: {e}", spec.m, spec.n, spec.k)),
    }
}

fn cmd_bench_emit(cmd: &BenchEmitCmd) -> Result<(), Failure> {
    require_svl_512()?;
    let (kernel, out) = match cmd {
        BenchEmitCmd::Throughput { unit, dtype, out } => {
            let kind = match unit {
                UnitArg::NeonFmla => ThroughputKind::NeonFmla,
                UnitArg::SmeFmopa => ThroughputKind::SmeFmopa,
            };
            match emit_throughput(kind, Dtype::from(*dtype)) {
                Ok(k) => (k, out),
                Err(e) => return check_failed(e),
            }
        }
        BenchEmitCmd::Bandwidth { strategy, direction, bytes, out } => {
            let strategy = match strategy {
                StrategyArg::Direct => BwStrategy::Direct,
                StrategyArg::Mova1 => BwStrategy::Mova1,
                StrategyArg::Mova2 => BwStrategy::Mova2,
                StrategyArg::Mova4 => BwStrategy::Mova4,
            };
            let direction = match direction {
                DirectionArg::Load => BwDirection::Load,
                DirectionArg::Store => BwDirection::Store,
            };
            match emit_bandwidth(strategy, direction, *bytes) {
                Ok(k) => (k, out),
                Err(e) => return check_failed(e),
            }
        }
    };
    write_kernel(out, &kernel)?;
    println!("wrote {} words to {}", kernel.words.len(), out.display());
    Ok(())
}

/// Runs a benchmark kernel natively with a growing pass count until one
/// timed run lasts at least a second, then reports the rate computed
/// from the per-iteration count the kernel returns in x0.
fn cmd_bench_run(args: &BenchRunArgs) -> Result<(), Failure> {
    let words = read_kernel(&args.kernel)?;
    // Over-allocate and round up so bandwidth kernels get the alignment
    // the generated GEMM ABI also guarantees for its buffers.
    let buffer: Vec<u8> = vec![0u8; args.buffer_bytes.unwrap_or(0) + 63];
    let base = if args.buffer_bytes.is_some() {
        (buffer.as_ptr() as u64).div_ceil(64) * 64
    } else {
        0
    };

    let mut passes = 1u64;
    loop {
        let start = std::time::Instant::now();
        let per_iter = match native_execute(&words, &[passes, base]) {
            Ok(v) => v,
            Err(e) => return check_failed(e),
        };
        let secs = start.elapsed().as_secs_f64();
        if secs >= 1.0 || per_iter == 0 {
            let rate = (passes as f64) * (per_iter as f64) / secs.max(1e-9);
            match args.unit {
                RateUnit::Ops => println!(
                    "passes={passes} per_iter={per_iter} secs={secs:.3} gflops={:.1}",
                    rate / 1e9
                ),
                RateUnit::Bytes => println!(
                    "passes={passes} per_iter={per_iter} secs={secs:.3} gib_per_s={:.2}",
                    rate / (1u64 << 30) as f64
                ),
            }
            return Ok(());
        }
        // Aim past the next measurement's budget; at least double.
        let scaled = (passes as f64 * (1.2 / secs.max(1e-9))).ceil() as u64;
        passes = scaled.max(passes.saturating_mul(2)).max(passes + 1);
    }
}

fn cmd_golden_check(path: &Path) -> Result<(), Failure> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return check_failed(format!("reading {}: {e}", path.display())),
    };
    let report = match golden_check(&text) {
        Ok(r) => r,
        Err(e) => return check_failed(e),
    };
    for line in &report.mismatches {
        eprintln!("{line}");
    }
    println!("checked={} mismatches={}", report.checked, report.mismatches.len());
    if report.mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} fixture entries failed", report.mismatches.len())))
    }
}

fn cmd_emulate(args: &EmulateArgs) -> Result<(), Failure> {
    let svl = svl_from_env()?;
    let mut st = match MachineState::new(svl) {
        Ok(st) => st,
        Err(e) => return usage(e.to_string()),
    };
    let words = read_kernel(&args.kernel)?;
    let regs = parse_args_u64(&args.args)?;
    for spec in &args.loads {
        let (path, addr) = match parse_load_spec(spec) {
            Ok(v) => v,
            Err(e) => return usage(e.to_string()),
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => return check_failed(format!("reading {path}: {e}")),
        };
        st.write_memory(addr, &bytes);
    }

    if !args.trace {
        return match st.run(&words, &regs, args.max_steps) {
            Ok(out) => {
                println!("x0={} steps={}", out.x0, out.steps);
                Ok(())
            }
            Err(e) => check_failed(e),
        };
    }

    // A fresh machine starts at pc 0; load the argument registers and
    // single-step so each instruction can be printed before it runs.
    // A closed output pipe (e.g. trace piped into head) ends the run
    // quietly instead of erroring.
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, &v) in regs.iter().enumerate() {
        st.set_x(i, v);
    }
    let mut steps = 0u64;
    loop {
        if steps >= args.max_steps {
            return check_failed(format!("step budget of {} exhausted", args.max_steps));
        }
        let pc = st.pc();
        if let Some(Ok(inst)) = words.get(pc).map(|&w| sme_forge::isa::decode(w)) {
            let line = format!("pc={pc} {}", sme_forge::isa::text::format_instruction(&inst));
            if writeln!(out, "{line}").is_err() {
                return Ok(());
            }
        }
        match st.step(&words) {
            Ok(StepEvent::Continue) => steps += 1,
            Ok(StepEvent::Halt { x0 }) => {
                steps += 1;
                let _ = writeln!(out, "x0={x0} steps={steps}");
                return Ok(());
            }
            Err(e) => return check_failed(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::DumpPlan { m, n } => cmd_dump_plan(*m, *n),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Bench(BenchCmd::Emit(cmd)) => cmd_bench_emit(cmd),
        Cmd::Bench(BenchCmd::Run(args)) => cmd_bench_run(args),
        Cmd::GoldenCheck { path } => cmd_golden_check(path),
        Cmd::Emulate(args) => cmd_emulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
