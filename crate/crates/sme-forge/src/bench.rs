//! Benchmark kernel generators: arithmetic throughput loops and ZA
//! transfer loops.
//!
//! Throughput kernels take an iteration count in x0, spin a dependency-
//! free arithmetic loop, and return the per-iteration floating-point
//! operation count in x0 so a timing harness can turn measured loop time
//! into op rate. The Neon variant keeps thirty independent FMLA
//! destinations fed from two shared sources; the outer-product variant
//! cycles thirty-two FMOPA instructions across the four accumulator tiles
//! and all thirty-two vector registers.
//!
//! Bandwidth kernels take a pass count in x0 and a buffer base in x1 and
//! move `bytes` per pass between the buffer and the ZA array, returning
//! the bytes-per-pass figure in x0. Four strategies move 64, 64, 128, or
//! 256 bytes per iteration: whole-vector LDR/STR ZA against a roving
//! select register, and one-, two-, and four-register vector loads paired
//! with tile moves. All four leave the same canonical ZA image: the g-th
//! 64-byte group of a 4 KiB span lands in array vector
//! `4*(g%16) + (g/16)%4`, i.e. KiB t of the span fills tile t slice by
//! slice, so every strategy is interchangeable and round-trips bit-exact
//! against any other.
//!
//! Mode contract: load-direction kernels start streaming mode and ZA
//! themselves and deliberately do not stop it, leaving ZA inspectable;
//! store-direction kernels assume both are already on (run a load kernel
//! first) so the data to store survives entry. Generation assumes a
//! 512-bit streaming vector length, like the GEMM generator.

use std::fmt;

use crate::gemm::KernelBuffer;
use crate::isa::{
    AssembleError, BranchTarget, Esize, Instruction, Program, RegisterRef, VecGroup,
};

/// Element type of a throughput kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Fp32,
    Fp64,
    Fp16,
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::Fp32 => "fp32",
            Dtype::Fp64 => "fp64",
            Dtype::Fp16 => "fp16",
        })
    }
}

/// Arithmetic unit a throughput kernel exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThroughputKind {
    NeonFmla,
    SmeFmopa,
}

impl fmt::Display for ThroughputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThroughputKind::NeonFmla => "neon-fmla",
            ThroughputKind::SmeFmopa => "sme-fmopa",
        })
    }
}

/// Transfer direction of a bandwidth kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BwDirection {
    /// Memory into ZA.
    Load,
    /// ZA into memory.
    Store,
}

impl fmt::Display for BwDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BwDirection::Load => "load",
            BwDirection::Store => "store",
        })
    }
}

/// Instruction pattern of a bandwidth kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BwStrategy {
    /// LDR/STR ZA whole array vectors.
    Direct,
    /// Single vector load/store plus a predicated tile move.
    Mova1,
    /// Two-register load/store plus a two-slice tile move.
    Mova2,
    /// Four-register load/store plus a four-slice tile move.
    Mova4,
}

impl BwStrategy {
    /// Bytes one loop iteration moves.
    pub fn bytes_per_iteration(self) -> usize {
        match self {
            BwStrategy::Direct | BwStrategy::Mova1 => 64,
            BwStrategy::Mova2 => 128,
            BwStrategy::Mova4 => 256,
        }
    }
}

impl fmt::Display for BwStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BwStrategy::Direct => "direct",
            BwStrategy::Mova1 => "mova1",
            BwStrategy::Mova2 => "mova2",
            BwStrategy::Mova4 => "mova4",
        })
    }
}

/// Benchmark generation errors.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("{kind} has no {dtype} form")]
    UnsupportedDatatype { kind: ThroughputKind, dtype: Dtype },
    #[error("transfer size {bytes} is not a positive multiple of {unit} bytes")]
    InvalidTransferSize { bytes: usize, unit: usize },
    #[error("assembly failed: {0}")]
    Assemble(#[from] AssembleError),
}

/// Floating-point operations one FMOPA performs at the given vector
/// length: two per tile element.
pub fn fmopa_flops_per_instruction(svl_bits: u32, dtype: Dtype) -> Result<u64, BenchError> {
    let lanes = match dtype {
        Dtype::Fp32 => u64::from(svl_bits) / 32,
        Dtype::Fp64 => u64::from(svl_bits) / 64,
        Dtype::Fp16 => {
            return Err(BenchError::UnsupportedDatatype {
                kind: ThroughputKind::SmeFmopa,
                dtype,
            })
        }
    };
    Ok(2 * lanes * lanes)
}

const PASS_CTR: RegisterRef = RegisterRef::x(0);
const BUF_BASE: RegisterRef = RegisterRef::x(1);
const CUR: RegisterRef = RegisterRef::x(2);
const WSEL: RegisterRef = RegisterRef::x(12);
const CHUNK_CTR: RegisterRef = RegisterRef::x(16);

fn movz_x0(prog: &mut Program, imm16: u16) {
    prog.push(Instruction::Movz { wide: true, rd: PASS_CTR, imm16, hw: 0 });
}

fn emit_mov_imm64(prog: &mut Program, rd: RegisterRef, value: u64) {
    prog.push(Instruction::Movz { wide: true, rd, imm16: (value & 0xFFFF) as u16, hw: 0 });
    for hw in 1..4u8 {
        let part = (value >> (16 * u32::from(hw))) & 0xFFFF;
        if part != 0 {
            prog.push(Instruction::Movk { wide: true, rd, imm16: part as u16, hw });
        }
    }
}

/// Generates a throughput loop. The kernel runs `x0` iterations and
/// returns the per-iteration operation count.
pub fn emit_throughput(kind: ThroughputKind, dtype: Dtype) -> Result<KernelBuffer, BenchError> {
    let fp64 = match dtype {
        Dtype::Fp32 => false,
        Dtype::Fp64 => true,
        Dtype::Fp16 => return Err(BenchError::UnsupportedDatatype { kind, dtype }),
    };
    let mut prog = Program::new();
    let flops: u64;
    match kind {
        ThroughputKind::NeonFmla => {
            // 30 destinations x lanes x 2 ops.
            flops = if fp64 { 120 } else { 240 };
            let top = prog.fresh_label();
            prog.bind(top);
            prog.push(Instruction::SubImm {
                wide: true,
                rd: PASS_CTR,
                rn: PASS_CTR,
                imm12: 1,
                lsl12: false,
            });
            for d in 0..30 {
                prog.push(Instruction::FmlaVec {
                    fp64,
                    vd: RegisterRef::v(d),
                    vn: RegisterRef::v(30),
                    vm: RegisterRef::v(31),
                });
            }
            prog.push(Instruction::Cbnz { rt: PASS_CTR, target: BranchTarget::Label(top) });
        }
        ThroughputKind::SmeFmopa => {
            // 32 outer products x 2*16*16 (or 2*8*8) ops at 512-bit SVL.
            flops = if fp64 { 4096 } else { 16384 };
            prog.push(Instruction::Smstart);
            prog.push(Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::B });
            prog.push(Instruction::Ptrue { pd: RegisterRef::p(1), esize: Esize::B });
            let top = prog.fresh_label();
            prog.bind(top);
            prog.push(Instruction::SubImm {
                wide: true,
                rd: PASS_CTR,
                rn: PASS_CTR,
                imm12: 1,
                lsl12: false,
            });
            for i in 0..32u8 {
                prog.push(Instruction::Fmopa {
                    fp64,
                    zad: RegisterRef::za(i % 4),
                    pn: RegisterRef::p(0),
                    pm: RegisterRef::p(1),
                    zn: RegisterRef::z((2 * i) % 32),
                    zm: RegisterRef::z((2 * i + 1) % 32),
                });
            }
            prog.push(Instruction::Cbnz { rt: PASS_CTR, target: BranchTarget::Label(top) });
            prog.push(Instruction::Smstop);
        }
    }
    movz_x0(&mut prog, flops as u16);
    prog.push(Instruction::Ret);
    Ok(KernelBuffer { words: prog.assemble()?, scratch_bytes: 0, flops })
}

/// One transfer iteration: moves `bytes_per_iteration` between the cursor
/// and tile `tile`, then advances the cursor and the slice select.
fn emit_bw_iteration(
    prog: &mut Program,
    strategy: BwStrategy,
    direction: BwDirection,
    tile: u8,
) {
    let za = RegisterRef::za(tile);
    match (strategy, direction) {
        (BwStrategy::Direct, BwDirection::Load) => {
            prog.push(Instruction::LdrZa { ws: WSEL, offset: 0, rn: CUR });
        }
        (BwStrategy::Direct, BwDirection::Store) => {
            prog.push(Instruction::StrZa { ws: WSEL, offset: 0, rn: CUR });
        }
        (BwStrategy::Mova1, BwDirection::Load) => {
            prog.push(Instruction::Ld1w {
                zt: RegisterRef::z(0),
                pg: RegisterRef::p(0),
                rn: CUR,
                imm_vl: 0,
            });
            prog.push(Instruction::MovaToTileP {
                zad: za,
                vertical: false,
                ws: WSEL,
                offset: 0,
                pg: RegisterRef::p(0),
                zn: RegisterRef::z(0),
            });
        }
        (BwStrategy::Mova1, BwDirection::Store) => {
            prog.push(Instruction::MovaFromTileP {
                zd: RegisterRef::z(0),
                pg: RegisterRef::p(0),
                zad: za,
                vertical: false,
                ws: WSEL,
                offset: 0,
            });
            prog.push(Instruction::St1w {
                zt: RegisterRef::z(0),
                pg: RegisterRef::p(0),
                rn: CUR,
                imm_vl: 0,
            });
        }
        (BwStrategy::Mova2 | BwStrategy::Mova4, BwDirection::Load) => {
            let nvec =
                if strategy == BwStrategy::Mova2 { VecGroup::Two } else { VecGroup::Four };
            prog.push(Instruction::Ld1wMulti {
                zt: RegisterRef::z(0),
                nvec,
                png: RegisterRef::pn(8),
                rn: CUR,
                imm_vl: 0,
            });
            prog.push(Instruction::MovaToTile {
                zad: za,
                vertical: false,
                ws: WSEL,
                offset: 0,
                nvec,
                zt: RegisterRef::z(0),
            });
        }
        (BwStrategy::Mova2 | BwStrategy::Mova4, BwDirection::Store) => {
            let nvec =
                if strategy == BwStrategy::Mova2 { VecGroup::Two } else { VecGroup::Four };
            prog.push(Instruction::MovaFromTile {
                zt: RegisterRef::z(0),
                nvec,
                zad: za,
                vertical: false,
                ws: WSEL,
                offset: 0,
            });
            prog.push(Instruction::St1wMulti {
                zt: RegisterRef::z(0),
                nvec,
                png: RegisterRef::pn(8),
                rn: CUR,
                imm_vl: 0,
            });
        }
    }
    let unit = strategy.bytes_per_iteration();
    prog.push(Instruction::AddImm {
        wide: true,
        rd: CUR,
        rn: CUR,
        imm12: unit as u16,
        lsl12: false,
    });
    let step = (unit / 64) as u16;
    let step = if strategy == BwStrategy::Direct { 4 } else { step };
    prog.push(Instruction::AddImm { wide: false, rd: WSEL, rn: WSEL, imm12: step, lsl12: false });
}

/// Transfers one span of up to 4 KiB with the canonical tile placement:
/// each started KiB resets the slice select and targets tile `kib % 4`.
fn emit_bw_span(
    prog: &mut Program,
    strategy: BwStrategy,
    direction: BwDirection,
    span_bytes: usize,
) {
    let unit = strategy.bytes_per_iteration();
    for kib in 0..span_bytes.div_ceil(1024) {
        let kib_bytes = (span_bytes - kib * 1024).min(1024);
        let tile = (kib % 4) as u8;
        // Direct addressing reaches tile t slice s as vector 4s + t via
        // the select register; the tile moves name the tile directly.
        let wsel_start = if strategy == BwStrategy::Direct { u16::from(tile) } else { 0 };
        prog.push(Instruction::Movz { wide: false, rd: WSEL, imm16: wsel_start, hw: 0 });
        for _ in 0..kib_bytes / unit {
            emit_bw_iteration(prog, strategy, direction, tile);
        }
    }
}

/// Generates a bandwidth loop moving `bytes` per pass. The kernel runs
/// `x0` passes over the buffer at x1 and returns `bytes` in x0.
pub fn emit_bandwidth(
    strategy: BwStrategy,
    direction: BwDirection,
    bytes: usize,
) -> Result<KernelBuffer, BenchError> {
    let unit = strategy.bytes_per_iteration();
    if bytes == 0 || !bytes.is_multiple_of(unit) {
        return Err(BenchError::InvalidTransferSize { bytes, unit });
    }

    let mut prog = Program::new();
    if direction == BwDirection::Load {
        prog.push(Instruction::Smstart);
    }
    match strategy {
        BwStrategy::Direct => {}
        BwStrategy::Mova1 => {
            prog.push(Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S });
        }
        BwStrategy::Mova2 | BwStrategy::Mova4 => {
            prog.push(Instruction::PtrueCnt { pnd: RegisterRef::pn(8) });
        }
    }

    let pass_top = prog.fresh_label();
    prog.bind(pass_top);
    prog.push(Instruction::SubImm {
        wide: true,
        rd: PASS_CTR,
        rn: PASS_CTR,
        imm12: 1,
        lsl12: false,
    });
    prog.push(Instruction::AddImm { wide: true, rd: CUR, rn: BUF_BASE, imm12: 0, lsl12: false });

    let full_chunks = bytes / 4096;
    if full_chunks > 0 {
        emit_mov_imm64(&mut prog, CHUNK_CTR, full_chunks as u64);
        let chunk_top = prog.fresh_label();
        prog.bind(chunk_top);
        prog.push(Instruction::SubImm {
            wide: true,
            rd: CHUNK_CTR,
            rn: CHUNK_CTR,
            imm12: 1,
            lsl12: false,
        });
        emit_bw_span(&mut prog, strategy, direction, 4096);
        prog.push(Instruction::Cbnz { rt: CHUNK_CTR, target: BranchTarget::Label(chunk_top) });
    }
    let remainder = bytes % 4096;
    if remainder > 0 {
        emit_bw_span(&mut prog, strategy, direction, remainder);
    }
    prog.push(Instruction::Cbnz { rt: PASS_CTR, target: BranchTarget::Label(pass_top) });

    emit_mov_imm64(&mut prog, PASS_CTR, bytes as u64);
    prog.push(Instruction::Ret);
    Ok(KernelBuffer { words: prog.assemble()?, scratch_bytes: 0, flops: 0 })
}
