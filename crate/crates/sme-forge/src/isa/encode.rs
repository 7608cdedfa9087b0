//! Instruction-to-word encoder.
//!
//! Field layouts follow the A64 and SME instruction descriptions; every
//! form is pinned against reference-assembler output by the golden fixture.

use super::{
    BranchTarget, EncodeError, EncodedWord, Instruction, RegClass, RegisterRef, VecGroup,
};

fn class_index(r: RegisterRef, class: RegClass, what: &str) -> Result<u32, EncodeError> {
    if r.class() != class {
        return Err(EncodeError::InvalidOperand(format!(
            "{what}: expected {class:?} register, got {:?}{}",
            r.class(),
            r.index()
        )));
    }
    Ok(u32::from(r.index()))
}

fn xreg(r: RegisterRef, what: &str) -> Result<u32, EncodeError> {
    class_index(r, RegClass::X, what)
}

fn vreg(r: RegisterRef, what: &str) -> Result<u32, EncodeError> {
    class_index(r, RegClass::V, what)
}

fn zreg(r: RegisterRef, what: &str) -> Result<u32, EncodeError> {
    class_index(r, RegClass::Z, what)
}

fn preg(r: RegisterRef, max: u8, what: &str) -> Result<u32, EncodeError> {
    let idx = class_index(r, RegClass::P, what)?;
    if idx > u32::from(max) {
        return Err(EncodeError::InvalidOperand(format!(
            "{what}: p{idx} outside p0-p{max} for this form"
        )));
    }
    Ok(idx)
}

/// Predicate-as-counter field: pn8-pn15 encode as index-8.
fn pnreg(r: RegisterRef, what: &str) -> Result<u32, EncodeError> {
    Ok(class_index(r, RegClass::Pn, what)? - 8)
}

/// Slice-select register field: w12-w15 encode as index-12.
fn wsel(r: RegisterRef, what: &str) -> Result<u32, EncodeError> {
    let idx = xreg(r, what)?;
    if !(12..=15).contains(&idx) {
        return Err(EncodeError::InvalidOperand(format!(
            "{what}: slice select must be w12-w15, got w{idx}"
        )));
    }
    Ok(idx - 12)
}

fn tile(r: RegisterRef, max: u8, what: &str) -> Result<u32, EncodeError> {
    let idx = class_index(r, RegClass::ZaTile, what)?;
    if idx > u32::from(max) {
        return Err(EncodeError::InvalidOperand(format!(
            "{what}: za{idx} outside za0-za{max} for this element size"
        )));
    }
    Ok(idx)
}

/// Multi-vector list base: must be aligned to the group size.
fn zgroup(r: RegisterRef, nvec: VecGroup, what: &str) -> Result<u32, EncodeError> {
    let idx = zreg(r, what)?;
    let n = nvec.count() as u32;
    if idx % n != 0 {
        return Err(EncodeError::InvalidOperand(format!(
            "{what}: z{idx} is not a multiple of the group size {n}"
        )));
    }
    Ok(idx)
}

fn check_hw(wide: bool, hw: u8) -> Result<u32, EncodeError> {
    let max = if wide { 3 } else { 1 };
    if hw > max {
        return Err(EncodeError::InvalidImmediate(format!(
            "move-wide shift {hw} exceeds {max} halfwords"
        )));
    }
    Ok(u32::from(hw))
}

fn check_imm12(imm12: u16) -> Result<u32, EncodeError> {
    if imm12 > 4095 {
        return Err(EncodeError::InvalidImmediate(format!("imm12 {imm12} exceeds 4095")));
    }
    Ok(u32::from(imm12))
}

/// Signed `mul vl` offset for single-vector LD1W/ST1W: 4-bit field.
fn check_vl_imm4(imm: i8) -> Result<u32, EncodeError> {
    if !(-8..=7).contains(&imm) {
        return Err(EncodeError::InvalidImmediate(format!(
            "vector-length offset {imm} outside [-8, 7]"
        )));
    }
    Ok((imm as u32) & 0xF)
}

/// Signed `mul vl` offset for multi-vector LD1W/ST1W: the field holds the
/// offset divided by the group size.
fn check_vl_multi(imm: i8, nvec: VecGroup) -> Result<u32, EncodeError> {
    let n = imm as i32;
    let g = nvec.count() as i32;
    if n % g != 0 || !(-8 * g..=7 * g).contains(&n) {
        return Err(EncodeError::InvalidImmediate(format!(
            "vector-length offset {n} must be a multiple of {g} in [{}, {}]",
            -8 * g,
            7 * g
        )));
    }
    Ok(((n / g) as u32) & 0xF)
}

/// Encodes one instruction to its 32-bit word.
pub fn encode(inst: &Instruction) -> Result<EncodedWord, EncodeError> {
    let w = match *inst {
        Instruction::Ret => 0xD65F_03C0,
        Instruction::Smstart => 0xD503_477F,
        Instruction::Smstop => 0xD503_467F,

        Instruction::Movz { wide, rd, imm16, hw } => {
            let base: u32 = if wide { 0xD280_0000 } else { 0x5280_0000 };
            base | check_hw(wide, hw)? << 21 | u32::from(imm16) << 5 | xreg(rd, "movz rd")?
        }
        Instruction::Movk { wide, rd, imm16, hw } => {
            let base: u32 = if wide { 0xF280_0000 } else { 0x7280_0000 };
            base | check_hw(wide, hw)? << 21 | u32::from(imm16) << 5 | xreg(rd, "movk rd")?
        }

        Instruction::AddImm { wide, rd, rn, imm12, lsl12 } => {
            let base: u32 = if wide { 0x9100_0000 } else { 0x1100_0000 };
            base | u32::from(lsl12) << 22
                | check_imm12(imm12)? << 10
                | xreg(rn, "add rn")? << 5
                | xreg(rd, "add rd")?
        }
        Instruction::SubImm { wide, rd, rn, imm12, lsl12 } => {
            let base: u32 = if wide { 0xD100_0000 } else { 0x5100_0000 };
            base | u32::from(lsl12) << 22
                | check_imm12(imm12)? << 10
                | xreg(rn, "sub rn")? << 5
                | xreg(rd, "sub rd")?
        }
        Instruction::AddReg { wide, rd, rn, rm } => {
            let base: u32 = if wide { 0x8B00_0000 } else { 0x0B00_0000 };
            base | xreg(rm, "add rm")? << 16 | xreg(rn, "add rn")? << 5 | xreg(rd, "add rd")?
        }
        Instruction::SubReg { wide, rd, rn, rm } => {
            let base: u32 = if wide { 0xCB00_0000 } else { 0x4B00_0000 };
            base | xreg(rm, "sub rm")? << 16 | xreg(rn, "sub rn")? << 5 | xreg(rd, "sub rd")?
        }

        Instruction::Cbnz { rt, target } => {
            let offset = match target {
                BranchTarget::Resolved(o) => o,
                BranchTarget::Label(l) => {
                    return Err(EncodeError::InvalidOperand(format!(
                        "cbnz target {l} unresolved; assemble the item stream instead"
                    )))
                }
            };
            if offset % 4 != 0 {
                return Err(EncodeError::InvalidImmediate(format!(
                    "branch offset {offset} not word-aligned"
                )));
            }
            if !(-(1 << 20)..=(1 << 20) - 4).contains(&offset) {
                return Err(EncodeError::InvalidImmediate(format!(
                    "branch offset {offset} outside +/-1 MiB"
                )));
            }
            let imm19 = ((offset >> 2) as u32) & 0x7_FFFF;
            0xB500_0000 | imm19 << 5 | xreg(rt, "cbnz rt")?
        }

        Instruction::FmlaVec { fp64, vd, vn, vm } => {
            let base: u32 = if fp64 { 0x4E60_CC00 } else { 0x4E20_CC00 };
            base | vreg(vm, "fmla vm")? << 16 | vreg(vn, "fmla vn")? << 5 | vreg(vd, "fmla vd")?
        }

        Instruction::Ptrue { pd, esize } => {
            0x2518_E3E0 | esize.code() << 22 | preg(pd, 15, "ptrue pd")?
        }
        Instruction::Whilelt { pd, esize, rn, rm } => {
            0x2520_1400
                | esize.code() << 22
                | xreg(rm, "whilelt rm")? << 16
                | xreg(rn, "whilelt rn")? << 5
                | preg(pd, 15, "whilelt pd")?
        }
        Instruction::PtrueCnt { pnd } => 0x25A0_7810 | pnreg(pnd, "ptrue pnd")?,
        Instruction::WhileltCnt { pnd, rn, rm, nvec } => {
            let vlbit = match nvec {
                VecGroup::Two => 0,
                VecGroup::Four => 1 << 13,
            };
            0x25A0_4410
                | xreg(rm, "whilelt rm")? << 16
                | vlbit
                | xreg(rn, "whilelt rn")? << 5
                | pnreg(pnd, "whilelt pnd")?
        }

        Instruction::Fmopa { fp64, zad, pn, pm, zn, zm } => {
            let (base, tmax): (u32, u8) = if fp64 { (0x80C0_0000, 7) } else { (0x8080_0000, 3) };
            base | zreg(zm, "fmopa zm")? << 16
                | preg(pm, 7, "fmopa pm")? << 13
                | preg(pn, 7, "fmopa pn")? << 10
                | zreg(zn, "fmopa zn")? << 5
                | tile(zad, tmax, "fmopa zad")?
        }

        Instruction::Ld1w { zt, pg, rn, imm_vl } => {
            0xA540_A000
                | check_vl_imm4(imm_vl)? << 16
                | preg(pg, 7, "ld1w pg")? << 10
                | xreg(rn, "ld1w rn")? << 5
                | zreg(zt, "ld1w zt")?
        }
        Instruction::St1w { zt, pg, rn, imm_vl } => {
            0xE540_E000
                | check_vl_imm4(imm_vl)? << 16
                | preg(pg, 7, "st1w pg")? << 10
                | xreg(rn, "st1w rn")? << 5
                | zreg(zt, "st1w zt")?
        }
        Instruction::Ld1wMulti { zt, nvec, png, rn, imm_vl } => {
            let base: u32 = match nvec {
                VecGroup::Two => 0xA040_4000,
                VecGroup::Four => 0xA040_C000,
            };
            let tfield = match nvec {
                VecGroup::Two => (zgroup(zt, nvec, "ld1w zt")? / 2) << 1,
                VecGroup::Four => (zgroup(zt, nvec, "ld1w zt")? / 4) << 2,
            };
            base | check_vl_multi(imm_vl, nvec)? << 16
                | pnreg(png, "ld1w png")? << 10
                | xreg(rn, "ld1w rn")? << 5
                | tfield
        }
        Instruction::St1wMulti { zt, nvec, png, rn, imm_vl } => {
            let base: u32 = match nvec {
                VecGroup::Two => 0xA060_4000,
                VecGroup::Four => 0xA060_C000,
            };
            let tfield = match nvec {
                VecGroup::Two => (zgroup(zt, nvec, "st1w zt")? / 2) << 1,
                VecGroup::Four => (zgroup(zt, nvec, "st1w zt")? / 4) << 2,
            };
            base | check_vl_multi(imm_vl, nvec)? << 16
                | pnreg(png, "st1w png")? << 10
                | xreg(rn, "st1w rn")? << 5
                | tfield
        }

        Instruction::MovaToTile { zad, vertical, ws, offset, nvec, zt } => {
            let v = u32::from(vertical) << 15;
            let rv = wsel(ws, "mova ws")? << 13;
            match nvec {
                VecGroup::Four => {
                    if offset != 0 {
                        return Err(EncodeError::InvalidImmediate(format!(
                            "4-vector mova slice offset {offset} must be 0"
                        )));
                    }
                    0xC084_0400
                        | v
                        | rv
                        | (zgroup(zt, nvec, "mova zt")? / 4) << 7
                        | tile(zad, 3, "mova zad")?
                }
                VecGroup::Two => {
                    if offset != 0 && offset != 2 {
                        return Err(EncodeError::InvalidImmediate(format!(
                            "2-vector mova slice offset {offset} must be 0 or 2"
                        )));
                    }
                    0xC084_0000
                        | v
                        | rv
                        | ((zgroup(zt, nvec, "mova zt")? / 2) << 6)
                        | (tile(zad, 3, "mova zad")? << 1)
                        | (u32::from(offset) / 2)
                }
            }
        }
        Instruction::MovaFromTile { zt, nvec, zad, vertical, ws, offset } => {
            let v = u32::from(vertical) << 15;
            let rv = wsel(ws, "mova ws")? << 13;
            match nvec {
                VecGroup::Four => {
                    if offset != 0 {
                        return Err(EncodeError::InvalidImmediate(format!(
                            "4-vector mova slice offset {offset} must be 0"
                        )));
                    }
                    0xC086_0400
                        | v
                        | rv
                        | tile(zad, 3, "mova zad")? << 5
                        | (zgroup(zt, nvec, "mova zt")? / 4) << 2
                }
                VecGroup::Two => {
                    if offset != 0 && offset != 2 {
                        return Err(EncodeError::InvalidImmediate(format!(
                            "2-vector mova slice offset {offset} must be 0 or 2"
                        )));
                    }
                    0xC086_0000
                        | v
                        | rv
                        | tile(zad, 3, "mova zad")? << 6
                        | (u32::from(offset) / 2) << 5
                        | (zgroup(zt, nvec, "mova zt")? / 2) << 1
                }
            }
        }
        Instruction::MovaToTileP { zad, vertical, ws, offset, pg, zn } => {
            if offset > 3 {
                return Err(EncodeError::InvalidImmediate(format!(
                    "mova slice offset {offset} exceeds 3"
                )));
            }
            0xC080_0000
                | u32::from(vertical) << 15
                | wsel(ws, "mova ws")? << 13
                | preg(pg, 7, "mova pg")? << 10
                | zreg(zn, "mova zn")? << 5
                | tile(zad, 3, "mova zad")? << 2
                | u32::from(offset)
        }
        Instruction::MovaFromTileP { zd, pg, zad, vertical, ws, offset } => {
            if offset > 3 {
                return Err(EncodeError::InvalidImmediate(format!(
                    "mova slice offset {offset} exceeds 3"
                )));
            }
            0xC082_0000
                | u32::from(vertical) << 15
                | wsel(ws, "mova ws")? << 13
                | preg(pg, 7, "mova pg")? << 10
                | tile(zad, 3, "mova zad")? << 7
                | u32::from(offset) << 5
                | zreg(zd, "mova zd")?
        }

        Instruction::LdrZa { ws, offset, rn } => {
            if offset > 15 {
                return Err(EncodeError::InvalidImmediate(format!(
                    "ldr za offset {offset} exceeds 15"
                )));
            }
            0xE100_0000 | wsel(ws, "ldr ws")? << 13 | xreg(rn, "ldr rn")? << 5 | u32::from(offset)
        }
        Instruction::StrZa { ws, offset, rn } => {
            if offset > 15 {
                return Err(EncodeError::InvalidImmediate(format!(
                    "str za offset {offset} exceeds 15"
                )));
            }
            0xE120_0000 | wsel(ws, "str ws")? << 13 | xreg(rn, "str rn")? << 5 | u32::from(offset)
        }
    };
    Ok(w)
}
