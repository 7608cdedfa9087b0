//! Instruction semantics behind [`MachineState::step`].
//!
//! Each step decodes the word at `pc`, checks the mode rules, then applies
//! the architectural effect. Floating-point accumulation uses `mul_add`,
//! matching the fused, round-to-nearest-even behavior of FMLA and FMOPA.

use crate::isa::{self, BranchTarget, EncodedWord, Esize, Instruction, RegisterRef};

use super::{CounterPred, MachineState, StepError, StepEvent};

/// Mode requirement class of an instruction.
enum Need {
    /// Legal in any mode.
    Any,
    /// Neon: illegal in streaming mode.
    NonStreaming,
    /// Streaming-SVE: requires streaming mode.
    Streaming,
    /// SME data path: requires streaming mode and ZA.
    StreamingZa,
    /// ZA spill/fill: requires ZA only.
    Za,
}

fn need(inst: &Instruction) -> Need {
    use Instruction::*;
    match inst {
        Ret | Smstart | Smstop | Movz { .. } | Movk { .. } | AddImm { .. } | SubImm { .. }
        | AddReg { .. } | SubReg { .. } | Cbnz { .. } => Need::Any,
        FmlaVec { .. } => Need::NonStreaming,
        Ptrue { .. } | Whilelt { .. } | PtrueCnt { .. } | WhileltCnt { .. } | Ld1w { .. }
        | St1w { .. } | Ld1wMulti { .. } | St1wMulti { .. } => Need::Streaming,
        Fmopa { .. } | MovaToTile { .. } | MovaFromTile { .. } | MovaToTileP { .. }
        | MovaFromTileP { .. } => Need::StreamingZa,
        LdrZa { .. } | StrZa { .. } => Need::Za,
    }
}

fn check_mode(state: &MachineState, inst: &Instruction) -> Result<(), &'static str> {
    match need(inst) {
        Need::Any => Ok(()),
        Need::NonStreaming => {
            if state.streaming {
                Err("neon instruction in streaming mode")
            } else {
                Ok(())
            }
        }
        Need::Streaming => {
            if state.streaming {
                Ok(())
            } else {
                Err("streaming instruction outside streaming mode")
            }
        }
        Need::StreamingZa => {
            if !state.streaming {
                Err("streaming instruction outside streaming mode")
            } else if !state.za_enabled {
                Err("za access while za is disabled")
            } else {
                Ok(())
            }
        }
        Need::Za => {
            if state.za_enabled {
                Ok(())
            } else {
                Err("za access while za is disabled")
            }
        }
    }
}

fn xval(state: &MachineState, r: RegisterRef, wide: bool) -> u64 {
    let v = state.x[r.index() as usize];
    if wide {
        v
    } else {
        u64::from(v as u32)
    }
}

fn set_xval(state: &mut MachineState, r: RegisterRef, wide: bool, v: u64) {
    state.x[r.index() as usize] = if wide { v } else { u64::from(v as u32) };
}

/// Slice-select value: the w view of the select register.
fn wsel(state: &MachineState, ws: RegisterRef) -> usize {
    state.x[ws.index() as usize] as u32 as usize
}

fn z_f32(state: &MachineState, zi: usize, lane: usize) -> f32 {
    let o = zi * state.svl_bytes + lane * 4;
    f32::from_le_bytes(state.z[o..o + 4].try_into().unwrap())
}

fn z_f64(state: &MachineState, zi: usize, lane: usize) -> f64 {
    let o = zi * state.svl_bytes + lane * 8;
    f64::from_le_bytes(state.z[o..o + 8].try_into().unwrap())
}

fn clear_p(state: &mut MachineState, pi: usize) {
    let n = state.svl_bytes / 8;
    state.p[pi * n..(pi + 1) * n].fill(0);
}

/// Effective address of a `mul vl`-scaled offset from a base register.
fn vl_addr(state: &MachineState, rn: RegisterRef, imm_vl: i8) -> u64 {
    let off = i64::from(imm_vl) * state.svl_bytes as i64;
    state.x[rn.index() as usize].wrapping_add(off as u64)
}

pub(super) fn step(
    state: &mut MachineState,
    kernel: &[EncodedWord],
) -> Result<StepEvent, StepError> {
    let pc = state.pc;
    let Some(&word) = kernel.get(pc) else {
        return Err(StepError::PcOutOfBounds { pc: pc as i64 });
    };
    let inst = isa::decode(word).map_err(|source| StepError::Decode { pc, source })?;
    check_mode(state, &inst).map_err(|reason| StepError::ModeFault { pc, reason })?;

    let svl = state.svl_bytes;
    let mut next = pc + 1;
    match inst {
        Instruction::Ret => return Ok(StepEvent::Halt { x0: state.x[0] }),

        // Transitions zero the affected state; re-enabling an already
        // enabled mode changes nothing.
        Instruction::Smstart => {
            if !state.streaming {
                state.zero_sve_state();
                state.streaming = true;
            }
            if !state.za_enabled {
                state.zero_za();
                state.za_enabled = true;
            }
        }
        Instruction::Smstop => {
            if state.streaming {
                state.zero_sve_state();
                state.streaming = false;
            }
            if state.za_enabled {
                state.zero_za();
                state.za_enabled = false;
            }
        }

        Instruction::Movz { wide, rd, imm16, hw } => {
            set_xval(state, rd, wide, u64::from(imm16) << (16 * u32::from(hw)));
        }
        Instruction::Movk { wide, rd, imm16, hw } => {
            let shift = 16 * u32::from(hw);
            let kept = xval(state, rd, wide) & !(0xFFFFu64 << shift);
            set_xval(state, rd, wide, kept | u64::from(imm16) << shift);
        }
        Instruction::AddImm { wide, rd, rn, imm12, lsl12 } => {
            let imm = u64::from(imm12) << if lsl12 { 12 } else { 0 };
            set_xval(state, rd, wide, xval(state, rn, wide).wrapping_add(imm));
        }
        Instruction::SubImm { wide, rd, rn, imm12, lsl12 } => {
            let imm = u64::from(imm12) << if lsl12 { 12 } else { 0 };
            set_xval(state, rd, wide, xval(state, rn, wide).wrapping_sub(imm));
        }
        Instruction::AddReg { wide, rd, rn, rm } => {
            let v = xval(state, rn, wide).wrapping_add(xval(state, rm, wide));
            set_xval(state, rd, wide, v);
        }
        Instruction::SubReg { wide, rd, rn, rm } => {
            let v = xval(state, rn, wide).wrapping_sub(xval(state, rm, wide));
            set_xval(state, rd, wide, v);
        }

        Instruction::Cbnz { rt, target } => {
            let off = match target {
                BranchTarget::Resolved(o) => o,
                BranchTarget::Label(_) => unreachable!("decoded branches are resolved"),
            };
            if state.x[rt.index() as usize] != 0 {
                let t = pc as i64 + i64::from(off / 4);
                if t < 0 {
                    return Err(StepError::PcOutOfBounds { pc: t });
                }
                next = t as usize;
            }
        }

        // Neon writes zero the scalable bits above the low 128.
        Instruction::FmlaVec { fp64, vd, vn, vm } => {
            let (d, n, m) = (vd.index() as usize, vn.index() as usize, vm.index() as usize);
            let mut out = vec![0u8; svl];
            if fp64 {
                for l in 0..2 {
                    let r = z_f64(state, n, l).mul_add(z_f64(state, m, l), z_f64(state, d, l));
                    out[l * 8..l * 8 + 8].copy_from_slice(&r.to_le_bytes());
                }
            } else {
                for l in 0..4 {
                    let r = z_f32(state, n, l).mul_add(z_f32(state, m, l), z_f32(state, d, l));
                    out[l * 4..l * 4 + 4].copy_from_slice(&r.to_le_bytes());
                }
            }
            state.z[d * svl..(d + 1) * svl].copy_from_slice(&out);
        }

        Instruction::Ptrue { pd, esize } => {
            let pi = pd.index() as usize;
            clear_p(state, pi);
            let eb = esize.bytes();
            for lane in 0..svl / eb {
                state.set_p_bit(pi, lane * eb, true);
            }
        }
        Instruction::Whilelt { pd, esize, rn, rm } => {
            let a = state.x[rn.index() as usize] as i64 as i128;
            let b = state.x[rm.index() as usize] as i64 as i128;
            let pi = pd.index() as usize;
            clear_p(state, pi);
            let eb = esize.bytes();
            for lane in 0..svl / eb {
                if a + (lane as i128) < b {
                    state.set_p_bit(pi, lane * eb, true);
                }
            }
        }
        Instruction::PtrueCnt { pnd } => {
            state.set_counter(pnd.index() as usize, CounterPred::all_true(Esize::S));
        }
        Instruction::WhileltCnt { pnd, rn, rm, nvec } => {
            let a = state.x[rn.index() as usize] as i64 as i128;
            let b = state.x[rm.index() as usize] as i64 as i128;
            let bound = (svl / 4 * nvec.count()) as i128;
            let count = (b - a).clamp(0, bound) as u16;
            state.set_counter(pnd.index() as usize, CounterPred::first_n(Esize::S, count));
        }

        // tile[i][j] += zn[i] * zm[j] where both governing lanes are
        // active; inactive elements merge (keep their value).
        Instruction::Fmopa { fp64, zad, pn, pm, zn, zm } => {
            let tile = zad.index() as usize;
            let (pn, pm) = (pn.index() as usize, pm.index() as usize);
            let (zn, zm) = (zn.index() as usize, zm.index() as usize);
            if fp64 {
                let dim = svl / 8;
                for i in 0..dim {
                    if !state.p_lane(pn, i, Esize::D) {
                        continue;
                    }
                    let a = z_f64(state, zn, i);
                    for j in 0..dim {
                        if !state.p_lane(pm, j, Esize::D) {
                            continue;
                        }
                        let o = state.tile_elem_offset(tile, i, j, 8);
                        let acc = f64::from_le_bytes(state.za[o..o + 8].try_into().unwrap());
                        let r = a.mul_add(z_f64(state, zm, j), acc);
                        state.za[o..o + 8].copy_from_slice(&r.to_le_bytes());
                    }
                }
            } else {
                let dim = svl / 4;
                for i in 0..dim {
                    if !state.p_lane(pn, i, Esize::S) {
                        continue;
                    }
                    let a = z_f32(state, zn, i);
                    for j in 0..dim {
                        if !state.p_lane(pm, j, Esize::S) {
                            continue;
                        }
                        let o = state.tile_elem_offset(tile, i, j, 4);
                        let acc = f32::from_le_bytes(state.za[o..o + 4].try_into().unwrap());
                        let r = a.mul_add(z_f32(state, zm, j), acc);
                        state.za[o..o + 4].copy_from_slice(&r.to_le_bytes());
                    }
                }
            }
        }

        Instruction::Ld1w { zt, pg, rn, imm_vl } => {
            let lanes = svl / 4;
            let base = vl_addr(state, rn, imm_vl);
            let pg = pg.index() as usize;
            let mut out = vec![0u8; svl];
            for lane in 0..lanes {
                if state.p_lane(pg, lane, Esize::S) {
                    for k in 0..4 {
                        out[lane * 4 + k] =
                            state.load_byte(base.wrapping_add((lane * 4 + k) as u64));
                    }
                }
            }
            let zi = zt.index() as usize;
            state.z[zi * svl..(zi + 1) * svl].copy_from_slice(&out);
        }
        Instruction::St1w { zt, pg, rn, imm_vl } => {
            let lanes = svl / 4;
            let base = vl_addr(state, rn, imm_vl);
            let pg = pg.index() as usize;
            let zi = zt.index() as usize;
            for lane in 0..lanes {
                if state.p_lane(pg, lane, Esize::S) {
                    for k in 0..4 {
                        let b = state.z[zi * svl + lane * 4 + k];
                        state.store_byte(base.wrapping_add((lane * 4 + k) as u64), b);
                    }
                }
            }
        }

        // Multi-vector forms address one flat run of elements: element e
        // lands in register zt + e/lanes, lane e%lanes, gated by the
        // counter predicate over the whole group.
        Instruction::Ld1wMulti { zt, nvec, png, rn, imm_vl } => {
            let lanes = svl / 4;
            let cnt = state.counter(png.index() as usize);
            let base = vl_addr(state, rn, imm_vl);
            for r in 0..nvec.count() {
                let mut out = vec![0u8; svl];
                for lane in 0..lanes {
                    let e = r * lanes + lane;
                    if cnt.is_active(e) {
                        for k in 0..4 {
                            out[lane * 4 + k] =
                                state.load_byte(base.wrapping_add((e * 4 + k) as u64));
                        }
                    }
                }
                let zi = zt.index() as usize + r;
                state.z[zi * svl..(zi + 1) * svl].copy_from_slice(&out);
            }
        }
        Instruction::St1wMulti { zt, nvec, png, rn, imm_vl } => {
            let lanes = svl / 4;
            let cnt = state.counter(png.index() as usize);
            let base = vl_addr(state, rn, imm_vl);
            for r in 0..nvec.count() {
                let zi = zt.index() as usize + r;
                for lane in 0..lanes {
                    let e = r * lanes + lane;
                    if cnt.is_active(e) {
                        for k in 0..4 {
                            let b = state.z[zi * svl + lane * 4 + k];
                            state.store_byte(base.wrapping_add((e * 4 + k) as u64), b);
                        }
                    }
                }
            }
        }

        // Slice r of a group addresses tile slice (W + offset + r) mod dim.
        // Horizontal slice s holds tile row s; vertical slice s, column s.
        Instruction::MovaToTile { zad, vertical, ws, offset, nvec, zt } => {
            let dim = svl / 4;
            let w = wsel(state, ws);
            let tile = zad.index() as usize;
            for r in 0..nvec.count() {
                let slice = (w + offset as usize + r) % dim;
                let zi = zt.index() as usize + r;
                for lane in 0..dim {
                    let (row, col) = if vertical { (lane, slice) } else { (slice, lane) };
                    let o = state.tile_elem_offset(tile, row, col, 4);
                    let s = zi * svl + lane * 4;
                    let bytes: [u8; 4] = state.z[s..s + 4].try_into().unwrap();
                    state.za[o..o + 4].copy_from_slice(&bytes);
                }
            }
        }
        Instruction::MovaFromTile { zt, nvec, zad, vertical, ws, offset } => {
            let dim = svl / 4;
            let w = wsel(state, ws);
            let tile = zad.index() as usize;
            for r in 0..nvec.count() {
                let slice = (w + offset as usize + r) % dim;
                let zi = zt.index() as usize + r;
                for lane in 0..dim {
                    let (row, col) = if vertical { (lane, slice) } else { (slice, lane) };
                    let o = state.tile_elem_offset(tile, row, col, 4);
                    let bytes: [u8; 4] = state.za[o..o + 4].try_into().unwrap();
                    state.z[zi * svl + lane * 4..zi * svl + lane * 4 + 4]
                        .copy_from_slice(&bytes);
                }
            }
        }
        Instruction::MovaToTileP { zad, vertical, ws, offset, pg, zn } => {
            let dim = svl / 4;
            let slice = (wsel(state, ws) + offset as usize) % dim;
            let tile = zad.index() as usize;
            let pg = pg.index() as usize;
            let zi = zn.index() as usize;
            for lane in 0..dim {
                if !state.p_lane(pg, lane, Esize::S) {
                    continue;
                }
                let (row, col) = if vertical { (lane, slice) } else { (slice, lane) };
                let o = state.tile_elem_offset(tile, row, col, 4);
                let s = zi * svl + lane * 4;
                let bytes: [u8; 4] = state.z[s..s + 4].try_into().unwrap();
                state.za[o..o + 4].copy_from_slice(&bytes);
            }
        }
        Instruction::MovaFromTileP { zd, pg, zad, vertical, ws, offset } => {
            let dim = svl / 4;
            let slice = (wsel(state, ws) + offset as usize) % dim;
            let tile = zad.index() as usize;
            let pg = pg.index() as usize;
            let zi = zd.index() as usize;
            for lane in 0..dim {
                if !state.p_lane(pg, lane, Esize::S) {
                    continue;
                }
                let (row, col) = if vertical { (lane, slice) } else { (slice, lane) };
                let o = state.tile_elem_offset(tile, row, col, 4);
                let bytes: [u8; 4] = state.za[o..o + 4].try_into().unwrap();
                state.z[zi * svl + lane * 4..zi * svl + lane * 4 + 4].copy_from_slice(&bytes);
            }
        }

        // The immediate selects both the array vector (relative to W, mod
        // the vector count) and the memory offset in VL units.
        Instruction::LdrZa { ws, offset, rn } => {
            let v = (wsel(state, ws) + offset as usize) % svl;
            let base = state.x[rn.index() as usize]
                .wrapping_add(u64::from(offset) * svl as u64);
            for k in 0..svl {
                let b = state.load_byte(base.wrapping_add(k as u64));
                state.za[v * svl + k] = b;
            }
        }
        Instruction::StrZa { ws, offset, rn } => {
            let v = (wsel(state, ws) + offset as usize) % svl;
            let base = state.x[rn.index() as usize]
                .wrapping_add(u64::from(offset) * svl as u64);
            for k in 0..svl {
                let b = state.za[v * svl + k];
                state.store_byte(base.wrapping_add(k as u64), b);
            }
        }
    }
    state.pc = next;
    Ok(StepEvent::Continue)
}
