//! FP32 GEMM kernel generator: C += A * B on the streaming matrix unit.
//!
//! Operand conventions (all single-precision, offsets in elements):
//! - A is m x k, column-major, leading dimension `lda >= m`.
//! - B is k x n; `RowMajor` stores it row-major (`ldb >= n`) so each k step
//!   reads n consecutive values, `ColMajor` stores it column-major
//!   (`ldb >= k`) and the kernel first transposes it into 32-column scratch
//!   panels it can stream the same way.
//! - C is m x n, column-major, leading dimension `ldc >= m`.
//!
//! Generated kernel ABI: x0 = A, x1 = B, x2 = C, x3 = scratch (64-byte
//! aligned, [`GemmSpec::scratch_bytes`] long; unused for row-major B).
//! The kernel enters streaming mode itself, leaves it before returning,
//! and returns the executed floating-point operation count 2*m*n*k in x0.
//!
//! Generation assumes a 512-bit streaming vector length: 16-lane vectors,
//! 16x16 tiles, four FP32 tiles. The emulator checks kernels at exactly
//! that width.
//!
//! Each planned block keeps the accumulators in the four tiles with C
//! transposed: the outer products put B values in tile rows and A values
//! in tile columns, so a tile's horizontal slice holds one contiguous
//! fragment of a column-major C column. Partial blocks never read or
//! write outside the active region: loads and stores are predicated, and
//! the merging tile moves leave masked-off lanes holding stale values that
//! no store pass ever emits.

use crate::isa::{
    AssembleError, BranchTarget, EncodedWord, Esize, Instruction, Program, RegisterRef, VecGroup,
};
use crate::planner::{plan_blocks, BlockExec, BlockStrategy, PlanError};

/// Memory order of the B operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BLayout {
    /// B stored k x n row-major: directly streamable.
    RowMajor,
    /// B stored k x n column-major: transposed into scratch panels first.
    ColMajor,
}

/// A validated GEMM problem shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub lda: usize,
    pub ldb: usize,
    pub ldc: usize,
    pub b_layout: BLayout,
}

/// Generation errors.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmitError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("plan failed: {0}")]
    Plan(#[from] PlanError),
    #[error("assembly failed: {0}")]
    Assemble(#[from] AssembleError),
}

impl GemmSpec {
    pub fn validate(&self) -> Result<(), EmitError> {
        let err = |msg: String| Err(EmitError::InvalidSpec(msg));
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return err(format!(
                "dimensions {} x {} x {} must all be at least 1",
                self.m, self.n, self.k
            ));
        }
        if self.lda < self.m {
            return err(format!("lda {} < m {}", self.lda, self.m));
        }
        if self.ldc < self.m {
            return err(format!("ldc {} < m {}", self.ldc, self.m));
        }
        let (min_ldb, what) = match self.b_layout {
            BLayout::RowMajor => (self.n, "n"),
            BLayout::ColMajor => (self.k, "k"),
        };
        if self.ldb < min_ldb {
            return err(format!("ldb {} < {} {}", self.ldb, what, min_ldb));
        }
        Ok(())
    }

    /// Scratch bytes the kernel needs: one 32-column panel of 128-byte
    /// rows per started panel, nothing for row-major B.
    pub fn scratch_bytes(&self) -> usize {
        match self.b_layout {
            BLayout::RowMajor => 0,
            BLayout::ColMajor => self.n.div_ceil(32) * self.k * 128,
        }
    }
}

/// A generated kernel plus the host-visible facts about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelBuffer {
    pub words: Vec<EncodedWord>,
    /// Bytes the caller must provide behind the x3 argument.
    pub scratch_bytes: usize,
    /// Floating-point operations the kernel reports in x0 when it
    /// returns: the total 2*m*n*k for a GEMM kernel, the per-iteration
    /// count for a benchmark loop.
    pub flops: u64,
}

/// Direction of a C block transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CDirection {
    /// Memory into tiles (merging into the accumulators).
    Load,
    /// Tiles into memory (only active rows and columns).
    Store,
}

// Kernel-internal register conventions.
const A_PTR: RegisterRef = RegisterRef::x(0);
const B_PTR: RegisterRef = RegisterRef::x(1);
const C_PTR: RegisterRef = RegisterRef::x(2);
const SCRATCH_PTR: RegisterRef = RegisterRef::x(3);
const A_CUR: RegisterRef = RegisterRef::x(4);
const B_CUR: RegisterRef = RegisterRef::x(5);
const C_CUR: RegisterRef = RegisterRef::x(6);
const B_CUR2: RegisterRef = RegisterRef::x(7);
const K_CTR: RegisterRef = RegisterRef::x(8);
const A_STRIDE: RegisterRef = RegisterRef::x(9);
const B_STRIDE: RegisterRef = RegisterRef::x(10);
const C_STRIDE: RegisterRef = RegisterRef::x(11);
const WSEL: RegisterRef = RegisterRef::x(12);
const LO: RegisterRef = RegisterRef::x(13);
const HI: RegisterRef = RegisterRef::x(14);
const TMP: RegisterRef = RegisterRef::x(16);

fn z(i: u8) -> RegisterRef {
    RegisterRef::z(i)
}

fn p(i: u8) -> RegisterRef {
    RegisterRef::p(i)
}

/// Materializes a 64-bit constant with movz plus as few movk as needed.
fn emit_mov_imm64(prog: &mut Program, rd: RegisterRef, value: u64) {
    prog.push(Instruction::Movz { wide: true, rd, imm16: (value & 0xFFFF) as u16, hw: 0 });
    for hw in 1..4u8 {
        let part = (value >> (16 * u32::from(hw))) & 0xFFFF;
        if part != 0 {
            prog.push(Instruction::Movk { wide: true, rd, imm16: part as u16, hw });
        }
    }
}

/// rd = rn + offset, via an immediate when it fits and the x16 temporary
/// otherwise. rn must not be the temporary.
fn emit_add_offset(prog: &mut Program, rd: RegisterRef, rn: RegisterRef, offset: u64) {
    debug_assert!(rn != TMP, "offset temporary would clobber the base");
    if offset <= 4095 {
        prog.push(Instruction::AddImm { wide: true, rd, rn, imm12: offset as u16, lsl12: false });
    } else {
        emit_mov_imm64(prog, TMP, offset);
        prog.push(Instruction::AddReg { wide: true, rd, rn, rm: TMP });
    }
}

/// whilelt pd.s, lo, hi through the x13/x14 bound registers.
fn emit_whilelt_p(prog: &mut Program, pd: u8, lo: usize, hi: usize) {
    emit_mov_imm64(prog, LO, lo as u64);
    emit_mov_imm64(prog, HI, hi as u64);
    prog.push(Instruction::Whilelt { pd: p(pd), esize: Esize::S, rn: LO, rm: HI });
}

/// whilelt pnd.s, lo, hi, vlx{2,4} through the bound registers.
fn emit_whilelt_cnt(prog: &mut Program, pnd: u8, lo: usize, hi: usize, nvec: VecGroup) {
    emit_mov_imm64(prog, LO, lo as u64);
    emit_mov_imm64(prog, HI, hi as u64);
    prog.push(Instruction::WhileltCnt { pnd: RegisterRef::pn(pnd), rn: LO, rm: HI, nvec });
}

fn movz_wsel_zero(prog: &mut Program) {
    prog.push(Instruction::Movz { wide: false, rd: WSEL, imm16: 0, hw: 0 });
}

fn add_wsel(prog: &mut Program, imm: u16) {
    prog.push(Instruction::AddImm { wide: false, rd: WSEL, rn: WSEL, imm12: imm, lsl12: false });
}

/// Emits one k loop for `strategy`, accumulating outer products into the
/// four tiles. Preconditions: x4/x5 (and x7 when `split_b`) at the first
/// k step of the operand panels, x8 = k >= 1, x9/x10 the per-step strides,
/// and the block's predicates set. Leaves the cursors past the last step.
///
/// `split_b` selects the two-panel B form of the wide block, used when B
/// columns come from two transposed scratch panels instead of one
/// contiguous row; it is ignored for the other strategies.
pub fn emit_microkernel(prog: &mut Program, strategy: BlockStrategy, split_b: bool) {
    let top = prog.fresh_label();
    let fmopa = |zad: u8, pn: u8, pm: u8, zn: u8, zm: u8| Instruction::Fmopa {
        fp64: false,
        zad: RegisterRef::za(zad),
        pn: p(pn),
        pm: p(pm),
        zn: z(zn),
        zm: z(zm),
    };
    let advance = |prog: &mut Program, rd: RegisterRef, stride: RegisterRef| {
        prog.push(Instruction::AddReg { wide: true, rd, rn: rd, rm: stride });
    };

    prog.bind(top);
    prog.push(Instruction::SubImm { wide: true, rd: K_CTR, rn: K_CTR, imm12: 1, lsl12: false });
    match strategy {
        BlockStrategy::M32N32 => {
            prog.push(Instruction::Ld1wMulti {
                zt: z(0),
                nvec: VecGroup::Two,
                png: RegisterRef::pn(8),
                rn: A_CUR,
                imm_vl: 0,
            });
            prog.push(Instruction::Ld1wMulti {
                zt: z(2),
                nvec: VecGroup::Two,
                png: RegisterRef::pn(9),
                rn: B_CUR,
                imm_vl: 0,
            });
            advance(prog, A_CUR, A_STRIDE);
            advance(prog, B_CUR, B_STRIDE);
            prog.push(fmopa(0, 1, 0, 2, 0));
            prog.push(fmopa(1, 1, 2, 2, 1));
            prog.push(fmopa(2, 3, 0, 3, 0));
            prog.push(fmopa(3, 3, 2, 3, 1));
        }
        BlockStrategy::M64N16 => {
            prog.push(Instruction::Ld1wMulti {
                zt: z(0),
                nvec: VecGroup::Four,
                png: RegisterRef::pn(8),
                rn: A_CUR,
                imm_vl: 0,
            });
            prog.push(Instruction::Ld1w { zt: z(4), pg: p(1), rn: B_CUR, imm_vl: 0 });
            advance(prog, A_CUR, A_STRIDE);
            advance(prog, B_CUR, B_STRIDE);
            for t in 0..4 {
                prog.push(fmopa(t, 1, 2 * t, 4, t));
            }
        }
        BlockStrategy::M16N64 => {
            prog.push(Instruction::Ld1w { zt: z(4), pg: p(0), rn: A_CUR, imm_vl: 0 });
            if split_b {
                prog.push(Instruction::Ld1wMulti {
                    zt: z(0),
                    nvec: VecGroup::Two,
                    png: RegisterRef::pn(9),
                    rn: B_CUR,
                    imm_vl: 0,
                });
                prog.push(Instruction::Ld1wMulti {
                    zt: z(2),
                    nvec: VecGroup::Two,
                    png: RegisterRef::pn(10),
                    rn: B_CUR2,
                    imm_vl: 0,
                });
            } else {
                prog.push(Instruction::Ld1wMulti {
                    zt: z(0),
                    nvec: VecGroup::Four,
                    png: RegisterRef::pn(9),
                    rn: B_CUR,
                    imm_vl: 0,
                });
            }
            advance(prog, A_CUR, A_STRIDE);
            advance(prog, B_CUR, B_STRIDE);
            if split_b {
                advance(prog, B_CUR2, B_STRIDE);
            }
            for t in 0..4 {
                prog.push(fmopa(t, 2 * t + 1, 0, t, 4));
            }
        }
    }
    prog.push(Instruction::Cbnz { rt: K_CTR, target: BranchTarget::Label(top) });
}

/// Emits the C block transfer, one output column at a time.
///
/// Preconditions: x6 at the block's first C column, x11 = ldc*4, and the
/// block's predicates set. Columns map to tile horizontal slices; the
/// slice-select register resets at each 16-column tile boundary. Loads
/// merge into the tiles under the row predicates; stores write exactly
/// the active rows of the active columns. x6 ends past the last column.
pub fn emit_c_block_access(
    prog: &mut Program,
    strategy: BlockStrategy,
    n_active: usize,
    dir: CDirection,
) {
    assert!(n_active >= 1 && n_active <= strategy.n_extent(), "column count out of range");
    let next_col = |prog: &mut Program| {
        add_wsel(prog, 1);
        prog.push(Instruction::AddReg { wide: true, rd: C_CUR, rn: C_CUR, rm: C_STRIDE });
    };
    for j in 0..n_active {
        if j % 16 == 0 {
            movz_wsel_zero(prog);
        }
        match strategy {
            BlockStrategy::M32N32 => {
                // Column j < 16 lives in tiles 0 (rows 0-15) and 1
                // (rows 16-31); columns 16.. in tiles 2 and 3.
                let t = if j < 16 { 0 } else { 2 };
                match dir {
                    CDirection::Load => {
                        prog.push(Instruction::Ld1wMulti {
                            zt: z(0),
                            nvec: VecGroup::Two,
                            png: RegisterRef::pn(8),
                            rn: C_CUR,
                            imm_vl: 0,
                        });
                        for (r, pg) in [(0u8, 0u8), (1, 2)] {
                            prog.push(Instruction::MovaToTileP {
                                zad: RegisterRef::za(t + r),
                                vertical: false,
                                ws: WSEL,
                                offset: 0,
                                pg: p(pg),
                                zn: z(r),
                            });
                        }
                    }
                    CDirection::Store => {
                        for (r, pg) in [(0u8, 0u8), (1, 2)] {
                            prog.push(Instruction::MovaFromTileP {
                                zd: z(r),
                                pg: p(pg),
                                zad: RegisterRef::za(t + r),
                                vertical: false,
                                ws: WSEL,
                                offset: 0,
                            });
                        }
                        prog.push(Instruction::St1wMulti {
                            zt: z(0),
                            nvec: VecGroup::Two,
                            png: RegisterRef::pn(8),
                            rn: C_CUR,
                            imm_vl: 0,
                        });
                    }
                }
            }
            BlockStrategy::M64N16 => match dir {
                CDirection::Load => {
                    prog.push(Instruction::Ld1wMulti {
                        zt: z(0),
                        nvec: VecGroup::Four,
                        png: RegisterRef::pn(8),
                        rn: C_CUR,
                        imm_vl: 0,
                    });
                    for t in 0..4u8 {
                        prog.push(Instruction::MovaToTileP {
                            zad: RegisterRef::za(t),
                            vertical: false,
                            ws: WSEL,
                            offset: 0,
                            pg: p(2 * t),
                            zn: z(t),
                        });
                    }
                }
                CDirection::Store => {
                    for t in 0..4u8 {
                        prog.push(Instruction::MovaFromTileP {
                            zd: z(t),
                            pg: p(2 * t),
                            zad: RegisterRef::za(t),
                            vertical: false,
                            ws: WSEL,
                            offset: 0,
                        });
                    }
                    prog.push(Instruction::St1wMulti {
                        zt: z(0),
                        nvec: VecGroup::Four,
                        png: RegisterRef::pn(8),
                        rn: C_CUR,
                        imm_vl: 0,
                    });
                }
            },
            BlockStrategy::M16N64 => {
                let t = (j / 16) as u8;
                match dir {
                    CDirection::Load => {
                        prog.push(Instruction::Ld1w {
                            zt: z(0),
                            pg: p(0),
                            rn: C_CUR,
                            imm_vl: 0,
                        });
                        prog.push(Instruction::MovaToTileP {
                            zad: RegisterRef::za(t),
                            vertical: false,
                            ws: WSEL,
                            offset: 0,
                            pg: p(0),
                            zn: z(0),
                        });
                    }
                    CDirection::Store => {
                        prog.push(Instruction::MovaFromTileP {
                            zd: z(0),
                            pg: p(0),
                            zad: RegisterRef::za(t),
                            vertical: false,
                            ws: WSEL,
                            offset: 0,
                        });
                        prog.push(Instruction::St1w {
                            zt: z(0),
                            pg: p(0),
                            rn: C_CUR,
                            imm_vl: 0,
                        });
                    }
                }
            }
        }
        next_col(prog);
    }
}

/// Emits the transpose of one 32-column B panel into scratch.
///
/// Preconditions: x1 = B base, x3 = scratch base, x10 = ldb*4, streaming
/// mode and ZA on. Panel `panel` covers B columns [32*panel,
/// 32*panel + panel_cols). The panel lands at scratch + panel*k*128 as k
/// rows of 128 bytes, each holding the panel's up-to-32 values for that k
/// step. Works 16x16 blocks through tile 0: load up to 16 B columns, write
/// them as horizontal slices, read vertical slices back out (the
/// transpose), and store them as rows. Every 16x16 block lands on a
/// 64-byte boundary. Clobbers tile 0, z0-z15, p0/p1, x7, x12, x16.
pub fn emit_transpose_panel(
    prog: &mut Program,
    panel: usize,
    k: usize,
    ldb: usize,
    panel_cols: usize,
) {
    assert!((1..=32).contains(&panel_cols), "panel width out of range");
    assert!(k >= 1, "empty depth");
    for bk in 0..k.div_ceil(16) {
        let kh = (k - 16 * bk).min(16);
        for bjj in 0..if panel_cols > 16 { 2 } else { 1 } {
            let jw = (panel_cols - 16 * bjj).min(16);
            emit_whilelt_p(prog, 0, 0, kh);
            emit_whilelt_p(prog, 1, 0, jw);

            // Load jw columns, each kh contiguous values, into z0..
            let col0 = 32 * panel + 16 * bjj;
            emit_add_offset(prog, B_CUR2, B_PTR, ((col0 * ldb + 16 * bk) * 4) as u64);
            for c in 0..jw {
                prog.push(Instruction::Ld1w {
                    zt: z(c as u8),
                    pg: p(0),
                    rn: B_CUR2,
                    imm_vl: 0,
                });
                prog.push(Instruction::AddReg {
                    wide: true,
                    rd: B_CUR2,
                    rn: B_CUR2,
                    rm: B_STRIDE,
                });
            }

            // Columns become horizontal slices of tile 0. Slices at or
            // past jw take stale register values; the masked stores below
            // never emit them.
            movz_wsel_zero(prog);
            for g in 0..4u8 {
                if g > 0 {
                    add_wsel(prog, 4);
                }
                prog.push(Instruction::MovaToTile {
                    zad: RegisterRef::za(0),
                    vertical: false,
                    ws: WSEL,
                    offset: 0,
                    nvec: VecGroup::Four,
                    zt: z(4 * g),
                });
            }

            // Vertical slices read the transpose back out.
            movz_wsel_zero(prog);
            for g in 0..4u8 {
                if g > 0 {
                    add_wsel(prog, 4);
                }
                prog.push(Instruction::MovaFromTile {
                    zt: z(4 * g),
                    nvec: VecGroup::Four,
                    zad: RegisterRef::za(0),
                    vertical: true,
                    ws: WSEL,
                    offset: 0,
                });
            }

            // Row l of the block is the panel row 16*bk + l; its 16
            // columns sit 64-byte aligned within the 128-byte panel row.
            emit_add_offset(
                prog,
                TMP,
                SCRATCH_PTR,
                (panel * k * 128 + 16 * bk * 128 + bjj * 64) as u64,
            );
            for l in 0..kh {
                prog.push(Instruction::St1w { zt: z(l as u8), pg: p(1), rn: TMP, imm_vl: 0 });
                prog.push(Instruction::AddImm {
                    wide: true,
                    rd: TMP,
                    rn: TMP,
                    imm12: 128,
                    lsl12: false,
                });
            }
        }
    }
}

/// Emits the block predicates. The counter predicates gate the multi-
/// vector loads and stores; the regular predicates mask rows and columns
/// of the outer products and serve as the merge masks of the tile moves.
fn emit_block_predicates(prog: &mut Program, spec: &GemmSpec, b: &BlockExec) {
    let (ma, na) = (b.m_active, b.n_active);
    match b.strategy {
        BlockStrategy::M32N32 => {
            emit_whilelt_cnt(prog, 8, 0, ma, VecGroup::Two);
            emit_whilelt_cnt(prog, 9, 0, na, VecGroup::Two);
            emit_whilelt_p(prog, 0, 0, ma);
            emit_whilelt_p(prog, 2, 16, ma);
            emit_whilelt_p(prog, 1, 0, na);
            emit_whilelt_p(prog, 3, 16, na);
        }
        BlockStrategy::M64N16 => {
            emit_whilelt_cnt(prog, 8, 0, ma, VecGroup::Four);
            for t in 0..4 {
                emit_whilelt_p(prog, 2 * t, 16 * usize::from(t), ma);
            }
            emit_whilelt_p(prog, 1, 0, na);
        }
        BlockStrategy::M16N64 => {
            match spec.b_layout {
                BLayout::RowMajor => emit_whilelt_cnt(prog, 9, 0, na, VecGroup::Four),
                BLayout::ColMajor => {
                    emit_whilelt_cnt(prog, 9, 0, na.min(32), VecGroup::Two);
                    emit_whilelt_cnt(prog, 10, 32, na, VecGroup::Two);
                }
            }
            emit_whilelt_p(prog, 0, 0, ma);
            for t in 0..4 {
                emit_whilelt_p(prog, 2 * t + 1, 16 * usize::from(t), na);
            }
        }
    }
}

/// x6 to the block's first C column.
fn emit_c_cursor(prog: &mut Program, spec: &GemmSpec, b: &BlockExec) {
    emit_add_offset(prog, C_CUR, C_PTR, ((b.n_off * spec.ldc + b.m_off) * 4) as u64);
}

fn emit_block(prog: &mut Program, spec: &GemmSpec, b: &BlockExec) {
    emit_block_predicates(prog, spec, b);

    emit_c_cursor(prog, spec, b);
    emit_c_block_access(prog, b.strategy, b.n_active, CDirection::Load);

    emit_add_offset(prog, A_CUR, A_PTR, (b.m_off * 4) as u64);
    let split_b = spec.b_layout == BLayout::ColMajor && b.strategy == BlockStrategy::M16N64;
    match spec.b_layout {
        BLayout::RowMajor => emit_add_offset(prog, B_CUR, B_PTR, (b.n_off * 4) as u64),
        BLayout::ColMajor => {
            let panel = b.n_off / 32;
            emit_add_offset(prog, B_CUR, SCRATCH_PTR, (panel * spec.k * 128) as u64);
            if split_b {
                emit_add_offset(prog, B_CUR2, B_CUR, (spec.k * 128) as u64);
            }
        }
    }
    emit_mov_imm64(prog, K_CTR, spec.k as u64);
    emit_microkernel(prog, b.strategy, split_b);

    emit_c_cursor(prog, spec, b);
    emit_c_block_access(prog, b.strategy, b.n_active, CDirection::Store);
}

/// Generates the complete GEMM kernel for `spec`.
pub fn generate_gemm(spec: &GemmSpec) -> Result<KernelBuffer, EmitError> {
    spec.validate()?;
    let blocks = plan_blocks(spec.m, spec.n)?;
    let flops = 2 * (spec.m as u64) * (spec.n as u64) * (spec.k as u64);

    let mut prog = Program::new();
    prog.push(Instruction::Smstart);

    if spec.b_layout == BLayout::ColMajor {
        emit_mov_imm64(&mut prog, B_STRIDE, (spec.ldb * 4) as u64);
        for panel in 0..spec.n.div_ceil(32) {
            let panel_cols = (spec.n - 32 * panel).min(32);
            emit_transpose_panel(&mut prog, panel, spec.k, spec.ldb, panel_cols);
        }
    }

    emit_mov_imm64(&mut prog, A_STRIDE, (spec.lda * 4) as u64);
    let b_stride = match spec.b_layout {
        BLayout::RowMajor => spec.ldb * 4,
        BLayout::ColMajor => 128,
    };
    emit_mov_imm64(&mut prog, B_STRIDE, b_stride as u64);
    emit_mov_imm64(&mut prog, C_STRIDE, (spec.ldc * 4) as u64);

    for b in &blocks {
        emit_block(&mut prog, spec, b);
    }

    prog.push(Instruction::Smstop);
    emit_mov_imm64(&mut prog, RegisterRef::x(0), flops);
    prog.push(Instruction::Ret);

    Ok(KernelBuffer {
        words: prog.assemble()?,
        scratch_bytes: spec.scratch_bytes(),
        flops,
    })
}
