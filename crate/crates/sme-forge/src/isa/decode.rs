//! Word-to-instruction decoder.
//!
//! Exact inverse of [`super::encode`] over the supported subset: any word
//! the encoder can produce decodes back to the same instruction, and any
//! other word reports [`DecodeError::UnknownEncoding`] — except the
//! widening outer-product opcode spaces (BF16/FP16/I8 MOPA families),
//! which are recognized and reported as [`DecodeError::UnsupportedForm`]
//! to distinguish "real instruction outside the model" from garbage.

use super::{
    BranchTarget, DecodeError, EncodedWord, Esize, Instruction, RegClass, RegisterRef, VecGroup,
};

fn bits(w: u32, hi: u32, lo: u32) -> u32 {
    (w >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn sext4(v: u32) -> i8 {
    (((v as i32) << 28) >> 28) as i8
}

fn xr(idx: u32, w: u32) -> Result<RegisterRef, DecodeError> {
    RegisterRef::try_new(RegClass::X, idx as u8).ok_or(DecodeError::UnknownEncoding(w))
}

fn wsel(field: u32) -> RegisterRef {
    RegisterRef::x((field + 12) as u8)
}

/// Decodes one 32-bit word into its symbolic instruction.
pub fn decode(w: EncodedWord) -> Result<Instruction, DecodeError> {
    match w {
        0xD65F_03C0 => return Ok(Instruction::Ret),
        0xD503_477F => return Ok(Instruction::Smstart),
        0xD503_467F => return Ok(Instruction::Smstop),
        _ => {}
    }

    // MOVZ / MOVK.
    let movop = bits(w, 30, 23);
    if movop == 0xA5 || movop == 0xE5 {
        let wide = bits(w, 31, 31) == 1;
        let hw = bits(w, 22, 21) as u8;
        if !wide && hw > 1 {
            return Err(DecodeError::UnknownEncoding(w));
        }
        let imm16 = bits(w, 20, 5) as u16;
        let rd = xr(bits(w, 4, 0), w)?;
        return Ok(if movop == 0xA5 {
            Instruction::Movz { wide, rd, imm16, hw }
        } else {
            Instruction::Movk { wide, rd, imm16, hw }
        });
    }

    // ADD / SUB (immediate), S=0.
    if bits(w, 29, 23) == 0x22 {
        let wide = bits(w, 31, 31) == 1;
        let sub = bits(w, 30, 30) == 1;
        let lsl12 = bits(w, 22, 22) == 1;
        let imm12 = bits(w, 21, 10) as u16;
        let rn = xr(bits(w, 9, 5), w)?;
        let rd = xr(bits(w, 4, 0), w)?;
        return Ok(if sub {
            Instruction::SubImm { wide, rd, rn, imm12, lsl12 }
        } else {
            Instruction::AddImm { wide, rd, rn, imm12, lsl12 }
        });
    }

    // ADD / SUB (shifted register), S=0, LSL #0 only.
    if bits(w, 28, 24) == 0x0B
        && bits(w, 29, 29) == 0
        && bits(w, 23, 21) == 0
        && bits(w, 15, 10) == 0
    {
        let wide = bits(w, 31, 31) == 1;
        let sub = bits(w, 30, 30) == 1;
        let rm = xr(bits(w, 20, 16), w)?;
        let rn = xr(bits(w, 9, 5), w)?;
        let rd = xr(bits(w, 4, 0), w)?;
        return Ok(if sub {
            Instruction::SubReg { wide, rd, rn, rm }
        } else {
            Instruction::AddReg { wide, rd, rn, rm }
        });
    }

    // CBNZ (64-bit).
    if w & 0xFF00_0000 == 0xB500_0000 {
        let rt = xr(bits(w, 4, 0), w)?;
        let imm19 = bits(w, 23, 5);
        let offset = ((imm19 as i32) << 13 >> 13) * 4;
        return Ok(Instruction::Cbnz { rt, target: BranchTarget::Resolved(offset) });
    }

    // FMLA (vector), full-width .4s/.2d.
    if w & 0xFFA0_FC00 == 0x4E20_CC00 {
        let fp64 = bits(w, 22, 22) == 1;
        return Ok(Instruction::FmlaVec {
            fp64,
            vd: RegisterRef::v(bits(w, 4, 0) as u8),
            vn: RegisterRef::v(bits(w, 9, 5) as u8),
            vm: RegisterRef::v(bits(w, 20, 16) as u8),
        });
    }

    // PTRUE (predicate), pattern ALL.
    if w & 0xFF3F_FFE0 == 0x2518_E3E0 {
        return Ok(Instruction::Ptrue {
            pd: RegisterRef::p(bits(w, 3, 0) as u8),
            esize: Esize::from_code(bits(w, 23, 22)),
        });
    }

    // WHILELT (predicate), 64-bit scalar operands.
    if w & 0xFF20_FC10 == 0x2520_1400 {
        return Ok(Instruction::Whilelt {
            pd: RegisterRef::p(bits(w, 3, 0) as u8),
            esize: Esize::from_code(bits(w, 23, 22)),
            rn: xr(bits(w, 9, 5), w)?,
            rm: xr(bits(w, 20, 16), w)?,
        });
    }

    // PTRUE (predicate-as-counter), .s.
    if w & 0xFFFF_FFF8 == 0x25A0_7810 {
        return Ok(Instruction::PtrueCnt { pnd: RegisterRef::pn((bits(w, 2, 0) + 8) as u8) });
    }

    // WHILELT (predicate-as-counter), .s.
    if w & 0xFFE0_DC18 == 0x25A0_4410 {
        let nvec = if bits(w, 13, 13) == 1 { VecGroup::Four } else { VecGroup::Two };
        return Ok(Instruction::WhileltCnt {
            pnd: RegisterRef::pn((bits(w, 2, 0) + 8) as u8),
            rn: xr(bits(w, 9, 5), w)?,
            rm: xr(bits(w, 20, 16), w)?,
            nvec,
        });
    }

    // FMOPA, non-widening. Pm occupies bits 15:13, Pn bits 12:10.
    if w & 0xFFE0_001C == 0x8080_0000 {
        return Ok(Instruction::Fmopa {
            fp64: false,
            zad: RegisterRef::za(bits(w, 1, 0) as u8),
            pn: RegisterRef::p(bits(w, 12, 10) as u8),
            pm: RegisterRef::p(bits(w, 15, 13) as u8),
            zn: RegisterRef::z(bits(w, 9, 5) as u8),
            zm: RegisterRef::z(bits(w, 20, 16) as u8),
        });
    }
    if w & 0xFFE0_0018 == 0x80C0_0000 {
        return Ok(Instruction::Fmopa {
            fp64: true,
            zad: RegisterRef::za(bits(w, 2, 0) as u8),
            pn: RegisterRef::p(bits(w, 12, 10) as u8),
            pm: RegisterRef::p(bits(w, 15, 13) as u8),
            zn: RegisterRef::z(bits(w, 9, 5) as u8),
            zm: RegisterRef::z(bits(w, 20, 16) as u8),
        });
    }

    // LD1W / ST1W (scalar-plus-immediate, single vector).
    if w & 0xFFF0_E000 == 0xA540_A000 || w & 0xFFF0_E000 == 0xE540_E000 {
        let store = w & 0xFFF0_E000 == 0xE540_E000;
        let zt = RegisterRef::z(bits(w, 4, 0) as u8);
        let pg = RegisterRef::p(bits(w, 12, 10) as u8);
        let rn = xr(bits(w, 9, 5), w)?;
        let imm_vl = sext4(bits(w, 19, 16));
        return Ok(if store {
            Instruction::St1w { zt, pg, rn, imm_vl }
        } else {
            Instruction::Ld1w { zt, pg, rn, imm_vl }
        });
    }

    // LD1W / ST1W (multi-vector, consecutive registers).
    let multi = match w & 0xFFF0_E000 {
        0xA040_4000 => Some((false, VecGroup::Two)),
        0xA040_C000 => Some((false, VecGroup::Four)),
        0xA060_4000 => Some((true, VecGroup::Two)),
        0xA060_C000 => Some((true, VecGroup::Four)),
        _ => None,
    };
    if let Some((store, nvec)) = multi {
        let low_ok = match nvec {
            VecGroup::Two => bits(w, 0, 0) == 0,
            VecGroup::Four => bits(w, 1, 0) == 0,
        };
        if low_ok {
            let zt = match nvec {
                VecGroup::Two => RegisterRef::z((bits(w, 4, 1) * 2) as u8),
                VecGroup::Four => RegisterRef::z((bits(w, 4, 2) * 4) as u8),
            };
            let png = RegisterRef::pn((bits(w, 12, 10) + 8) as u8);
            let rn = xr(bits(w, 9, 5), w)?;
            let imm_vl = sext4(bits(w, 19, 16)).wrapping_mul(nvec.count() as i8);
            return Ok(if store {
                Instruction::St1wMulti { zt, nvec, png, rn, imm_vl }
            } else {
                Instruction::Ld1wMulti { zt, nvec, png, rn, imm_vl }
            });
        }
    }

    // MOVA tile moves (.s).
    if bits(w, 31, 24) == 0xC0 {
        let vertical = bits(w, 15, 15) == 1;
        let ws = wsel(bits(w, 14, 13));
        match bits(w, 23, 16) {
            0x84 if w & 0xFFFF_1C7C == 0xC084_0400 => {
                return Ok(Instruction::MovaToTile {
                    zad: RegisterRef::za(bits(w, 1, 0) as u8),
                    vertical,
                    ws,
                    offset: 0,
                    nvec: VecGroup::Four,
                    zt: RegisterRef::z((bits(w, 9, 7) * 4) as u8),
                });
            }
            0x84 if w & 0xFFFF_1C38 == 0xC084_0000 => {
                return Ok(Instruction::MovaToTile {
                    zad: RegisterRef::za(bits(w, 2, 1) as u8),
                    vertical,
                    ws,
                    offset: (bits(w, 0, 0) * 2) as u8,
                    nvec: VecGroup::Two,
                    zt: RegisterRef::z((bits(w, 9, 6) * 2) as u8),
                });
            }
            0x86 if w & 0xFFFF_1F83 == 0xC086_0400 => {
                return Ok(Instruction::MovaFromTile {
                    zt: RegisterRef::z((bits(w, 4, 2) * 4) as u8),
                    nvec: VecGroup::Four,
                    zad: RegisterRef::za(bits(w, 6, 5) as u8),
                    vertical,
                    ws,
                    offset: 0,
                });
            }
            0x86 if w & 0xFFFF_1F01 == 0xC086_0000 => {
                return Ok(Instruction::MovaFromTile {
                    zt: RegisterRef::z((bits(w, 4, 1) * 2) as u8),
                    nvec: VecGroup::Two,
                    zad: RegisterRef::za(bits(w, 7, 6) as u8),
                    vertical,
                    ws,
                    offset: (bits(w, 5, 5) * 2) as u8,
                });
            }
            0x80 if w & 0xFFFF_0010 == 0xC080_0000 => {
                return Ok(Instruction::MovaToTileP {
                    zad: RegisterRef::za(bits(w, 3, 2) as u8),
                    vertical,
                    ws,
                    offset: bits(w, 1, 0) as u8,
                    pg: RegisterRef::p(bits(w, 12, 10) as u8),
                    zn: RegisterRef::z(bits(w, 9, 5) as u8),
                });
            }
            0x82 if w & 0xFFFF_0200 == 0xC082_0000 => {
                return Ok(Instruction::MovaFromTileP {
                    zd: RegisterRef::z(bits(w, 4, 0) as u8),
                    pg: RegisterRef::p(bits(w, 12, 10) as u8),
                    zad: RegisterRef::za(bits(w, 8, 7) as u8),
                    vertical,
                    ws,
                    offset: bits(w, 6, 5) as u8,
                });
            }
            _ => {}
        }
    }

    // LDR / STR ZA.
    if w & 0xFFFF_9C10 == 0xE100_0000 || w & 0xFFFF_9C10 == 0xE120_0000 {
        let store = bits(w, 21, 21) == 1;
        let ws = wsel(bits(w, 14, 13));
        let offset = bits(w, 3, 0) as u8;
        let rn = xr(bits(w, 9, 5), w)?;
        return Ok(if store {
            Instruction::StrZa { ws, offset, rn }
        } else {
            Instruction::LdrZa { ws, offset, rn }
        });
    }

    // Widening outer products exist architecturally but are outside the
    // model; report them distinctly from unallocated words.
    if w & 0xFF00_0000 == 0x8100_0000 {
        return Err(DecodeError::UnsupportedForm {
            word: w,
            what: "widening floating-point outer product (BF16/FP16)",
        });
    }
    if w & 0xFF80_0000 == 0xA080_0000 {
        return Err(DecodeError::UnsupportedForm {
            word: w,
            what: "widening integer outer product",
        });
    }

    Err(DecodeError::UnknownEncoding(w))
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn unknown_word_is_reported_with_value() {
        assert_eq!(decode(0xFFFF_FFFF), Err(DecodeError::UnknownEncoding(0xFFFF_FFFF)));
        assert_eq!(decode(0), Err(DecodeError::UnknownEncoding(0)));
    }

    #[test]
    fn widening_outer_products_are_unsupported_not_unknown() {
        // BFMOPA-family and SMOPA-family opcode spaces.
        match decode(0x8180_0000) {
            Err(DecodeError::UnsupportedForm { .. }) => {}
            other => panic!("expected UnsupportedForm, got {other:?}"),
        }
        match decode(0xA080_0010) {
            Err(DecodeError::UnsupportedForm { .. }) => {}
            other => panic!("expected UnsupportedForm, got {other:?}"),
        }
    }

    #[test]
    fn stack_pointer_encodings_are_outside_the_subset() {
        // add x0, sp, #0 — rn=31 is SP in the immediate form.
        assert!(matches!(decode(0x9100_03E0), Err(DecodeError::UnknownEncoding(_))));
    }

    #[test]
    fn cbnz_wform_is_outside_the_subset() {
        assert!(matches!(decode(0x3500_0040), Err(DecodeError::UnknownEncoding(_))));
    }

    #[test]
    fn shifted_register_add_forms_are_rejected() {
        // add x0, x1, x2, lsl #1 — nonzero shift amount.
        assert!(matches!(decode(0x8B02_0420), Err(DecodeError::UnknownEncoding(_))));
    }
}
