// Oracle loops below compare tile elements by (row, col) coordinate;
// index loops keep the coordinates in view.
#![allow(clippy::needless_range_loop)]

use super::*;
use crate::isa::{encode, BranchTarget, Instruction, RegisterRef, VecGroup};

fn words(insts: &[Instruction]) -> Vec<EncodedWord> {
    insts.iter().map(|i| encode(i).unwrap()).collect()
}

fn fresh() -> MachineState {
    MachineState::new(512).unwrap()
}

fn x(i: u8) -> RegisterRef {
    RegisterRef::x(i)
}

fn set_z_f32(state: &mut MachineState, zi: usize, f: impl Fn(usize) -> f32) {
    let lanes = state.svl_bytes() / 4;
    let mut bytes = Vec::with_capacity(state.svl_bytes());
    for lane in 0..lanes {
        bytes.extend_from_slice(&f(lane).to_le_bytes());
    }
    state.set_z_bytes(zi, &bytes);
}

fn z_as_f32(state: &MachineState, zi: usize) -> Vec<f32> {
    state
        .z_bytes(zi)
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

#[test]
fn rejects_invalid_svl() {
    assert!(matches!(MachineState::new(384), Err(MachineError::InvalidSvl(384))));
    assert!(MachineState::new(64).is_err());
    for bits in VALID_SVL_BITS {
        assert!(MachineState::new(bits).is_ok());
    }
}

#[test]
fn smstart_and_smstop_zero_only_on_transitions() {
    let mut st = fresh();
    st.force_modes(true, true);
    st.set_z_bytes(0, &[0xAB; 64]);
    st.set_p_bytes(0, &[0xFF; 8]);
    let mut za = vec![0u8; 64 * 64];
    za[100] = 7;
    st.set_za_bytes(&za);

    // Already on: no transition, nothing zeroed.
    st.run(&words(&[Instruction::Smstart, Instruction::Ret]), &[], 10).unwrap();
    assert_eq!(st.z_bytes(0)[0], 0xAB);
    assert_eq!(st.za_bytes()[100], 7);

    // On -> off zeroes everything.
    st.run(&words(&[Instruction::Smstop, Instruction::Ret]), &[], 10).unwrap();
    assert!(!st.streaming() && !st.za_enabled());
    assert!(st.z_bytes(0).iter().all(|&b| b == 0));
    assert!(st.p_bytes(0).iter().all(|&b| b == 0));
    assert!(st.za_bytes().iter().all(|&b| b == 0));

    // Off -> on zeroes host-planted state too.
    st.set_z_bytes(1, &[0x5A; 64]);
    st.run(&words(&[Instruction::Smstart, Instruction::Ret]), &[], 10).unwrap();
    assert!(st.streaming() && st.za_enabled());
    assert!(st.z_bytes(1).iter().all(|&b| b == 0));
}

#[test]
fn mode_rules_fault_exactly_when_violated() {
    let fmla = Instruction::FmlaVec {
        fp64: false,
        vd: RegisterRef::v(0),
        vn: RegisterRef::v(1),
        vm: RegisterRef::v(2),
    };
    let ld1w = Instruction::Ld1w {
        zt: RegisterRef::z(0),
        pg: RegisterRef::p(0),
        rn: x(0),
        imm_vl: 0,
    };
    let fmopa = Instruction::Fmopa {
        fp64: false,
        zad: RegisterRef::za(0),
        pn: RegisterRef::p(0),
        pm: RegisterRef::p(1),
        zn: RegisterRef::z(0),
        zm: RegisterRef::z(1),
    };
    let ldr_za = Instruction::LdrZa { ws: x(12), offset: 0, rn: x(0) };

    let fault = |st: &mut MachineState, inst: &Instruction| {
        st.run(&words(&[*inst, Instruction::Ret]), &[], 4)
    };

    let mut st = fresh();
    st.force_modes(true, true);
    assert!(matches!(fault(&mut st, &fmla), Err(StepError::ModeFault { pc: 0, .. })));

    let mut st = fresh();
    assert!(matches!(fault(&mut st, &ld1w), Err(StepError::ModeFault { .. })));
    assert!(matches!(fault(&mut st, &fmopa), Err(StepError::ModeFault { .. })));
    assert!(matches!(fault(&mut st, &ldr_za), Err(StepError::ModeFault { .. })));

    // Streaming without ZA still faults the SME data path.
    let mut st = fresh();
    st.force_modes(true, false);
    assert!(matches!(fault(&mut st, &fmopa), Err(StepError::ModeFault { .. })));
    assert!(matches!(fault(&mut st, &ldr_za), Err(StepError::ModeFault { .. })));

    // And each is legal in its proper mode.
    let mut st = fresh();
    assert!(fault(&mut st, &fmla).is_ok());
    let mut st = fresh();
    st.force_modes(true, true);
    assert!(fault(&mut st, &ld1w).is_ok());
    assert!(fault(&mut st, &fmopa).is_ok());
    assert!(fault(&mut st, &ldr_za).is_ok());
}

#[test]
fn mov_and_arith_respect_register_width() {
    let mut st = fresh();
    let prog = words(&[
        Instruction::Movz { wide: true, rd: x(0), imm16: 0xBEEF, hw: 0 },
        Instruction::Movk { wide: true, rd: x(0), imm16: 0xDEAD, hw: 3 },
        Instruction::Movz { wide: false, rd: x(1), imm16: 0xFFFF, hw: 0 },
        Instruction::Movk { wide: false, rd: x(1), imm16: 0xFFFF, hw: 1 },
        Instruction::AddImm { wide: false, rd: x(1), rn: x(1), imm12: 1, lsl12: false },
        Instruction::AddImm { wide: true, rd: x(2), rn: x(0), imm12: 1, lsl12: true },
        Instruction::SubReg { wide: true, rd: x(3), rn: x(2), rm: x(0) },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 20).unwrap();
    assert_eq!(st.x(0), 0xDEAD_0000_0000_BEEF);
    // Narrow add wraps at 32 bits and zero-extends.
    assert_eq!(st.x(1), 0);
    assert_eq!(st.x(2), 0xDEAD_0000_0000_BEEF + 0x1000);
    assert_eq!(st.x(3), 0x1000);
}

#[test]
fn narrow_movk_clears_upper_half() {
    let mut st = fresh();
    st.set_x(5, 0xFFFF_FFFF_FFFF_FFFF);
    let prog = words(&[
        Instruction::Movk { wide: false, rd: x(5), imm16: 0x1234, hw: 0 },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    assert_eq!(st.x(5), 0x0000_0000_FFFF_1234);
}

#[test]
fn cbnz_loops_and_falls_through() {
    let mut st = fresh();
    // x0 = 3; loop { x0 -= 1 } until zero; x1 = 7.
    let prog = vec![
        encode(&Instruction::SubImm { wide: true, rd: x(0), rn: x(0), imm12: 1, lsl12: false })
            .unwrap(),
        encode(&Instruction::Cbnz { rt: x(0), target: BranchTarget::Resolved(-4) }).unwrap(),
        encode(&Instruction::Movz { wide: true, rd: x(1), imm16: 7, hw: 0 }).unwrap(),
        encode(&Instruction::Ret).unwrap(),
    ];
    let out = st.run(&prog, &[3], 100).unwrap();
    assert_eq!(st.x(0), 0);
    assert_eq!(st.x(1), 7);
    // 3 subs + 3 branches + movz + ret.
    assert_eq!(out.steps, 8);
}

#[test]
fn branch_to_negative_pc_faults() {
    let mut st = fresh();
    let prog = vec![
        encode(&Instruction::Cbnz { rt: x(0), target: BranchTarget::Resolved(-8) }).unwrap(),
    ];
    let err = st.run(&prog, &[1], 10).unwrap_err();
    assert_eq!(err, StepError::PcOutOfBounds { pc: -2 });
}

#[test]
fn running_off_the_end_faults() {
    let mut st = fresh();
    let prog = words(&[Instruction::Movz { wide: true, rd: x(0), imm16: 1, hw: 0 }]);
    let err = st.run(&prog, &[], 10).unwrap_err();
    assert_eq!(err, StepError::PcOutOfBounds { pc: 1 });
}

#[test]
fn step_budget_and_arg_limits_are_enforced() {
    let mut st = fresh();
    let prog = words(&[Instruction::Ret]);
    assert_eq!(
        st.run(&prog, &[], 0).unwrap_err(),
        StepError::StepBudgetExceeded { max_steps: 0 }
    );
    assert_eq!(st.run(&prog, &[0; 9], 10).unwrap_err(), StepError::TooManyArgs { n: 9 });
    let out = st.run(&prog, &[42], 1).unwrap();
    assert_eq!(out.x0, 42);
    assert_eq!(out.steps, 1);
}

#[test]
fn neon_fmla_accumulates_low_lanes_and_zeroes_the_rest() {
    let mut st = fresh();
    set_z_f32(&mut st, 0, |l| l as f32);
    set_z_f32(&mut st, 1, |l| 2.0 + l as f32);
    set_z_f32(&mut st, 2, |l| 10.0 * l as f32);
    let prog = words(&[
        Instruction::FmlaVec {
            fp64: false,
            vd: RegisterRef::v(0),
            vn: RegisterRef::v(1),
            vm: RegisterRef::v(2),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    let got = z_as_f32(&st, 0);
    for l in 0..4 {
        let want = (2.0 + l as f32).mul_add(10.0 * l as f32, l as f32);
        assert_eq!(got[l], want, "lane {l}");
    }
    // Scalable bits above 128 are zeroed by the Neon write.
    assert!(got[4..].iter().all(|&v| v == 0.0));
}

#[test]
fn neon_fmla_fp64_uses_two_lanes() {
    let mut st = fresh();
    let mut bytes = vec![0u8; 64];
    for (l, v) in [(0usize, 1.5f64), (1, -2.0)] {
        bytes[l * 8..l * 8 + 8].copy_from_slice(&v.to_le_bytes());
    }
    st.set_z_bytes(1, &bytes);
    st.set_z_bytes(2, &bytes);
    let prog = words(&[
        Instruction::FmlaVec {
            fp64: true,
            vd: RegisterRef::v(0),
            vn: RegisterRef::v(1),
            vm: RegisterRef::v(2),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    let lane = |i: usize| {
        f64::from_le_bytes(st.z_bytes(0)[i * 8..i * 8 + 8].try_into().unwrap())
    };
    assert_eq!(lane(0), 2.25);
    assert_eq!(lane(1), 4.0);
}

#[test]
fn ptrue_and_whilelt_set_element_lane_bits() {
    let mut st = fresh();
    st.force_modes(true, true);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Whilelt { pd: RegisterRef::p(1), esize: Esize::S, rn: x(0), rm: x(1) },
        Instruction::Whilelt { pd: RegisterRef::p(2), esize: Esize::S, rn: x(2), rm: x(3) },
        Instruction::Ret,
    ]);
    // p1: lanes l with 3 + l < 10 -> l in 0..7. p2: empty (9 >= 2).
    st.run(&prog, &[3, 10, 9, 2], 10).unwrap();
    for lane in 0..16 {
        assert!(st.p_lane(0, lane, Esize::S));
        assert_eq!(st.p_lane(1, lane, Esize::S), lane < 7, "lane {lane}");
        assert!(!st.p_lane(2, lane, Esize::S));
    }
    // Only the element-leading bit of each lane is set.
    assert!(!st.p_bit(0, 1) && !st.p_bit(0, 2) && !st.p_bit(0, 3));
    assert!(st.p_bit(0, 4));
}

#[test]
fn whilelt_compares_signed() {
    let mut st = fresh();
    st.force_modes(true, true);
    let prog = words(&[
        Instruction::Whilelt { pd: RegisterRef::p(0), esize: Esize::S, rn: x(0), rm: x(1) },
        Instruction::Ret,
    ]);
    // rn = -3 (as u64), rm = 2: lanes 0..5 active.
    st.run(&prog, &[(-3i64) as u64, 2], 10).unwrap();
    for lane in 0..16 {
        assert_eq!(st.p_lane(0, lane, Esize::S), lane < 5, "lane {lane}");
    }
}

#[test]
fn counter_predicates_count_elements_across_the_group() {
    let mut st = fresh();
    st.force_modes(true, true);
    let prog = words(&[
        Instruction::PtrueCnt { pnd: RegisterRef::pn(8) },
        Instruction::WhileltCnt {
            pnd: RegisterRef::pn(9),
            rn: x(0),
            rm: x(1),
            nvec: VecGroup::Two,
        },
        Instruction::WhileltCnt {
            pnd: RegisterRef::pn(10),
            rn: x(2),
            rm: x(3),
            nvec: VecGroup::Four,
        },
        Instruction::Ret,
    ]);
    // pn9: 21 of 32 elements. pn10: clamped to the full 64-element group.
    st.run(&prog, &[0, 21, 0, 1000], 10).unwrap();
    for e in 0..64 {
        assert!(st.counter(8).is_active(e));
        assert_eq!(st.counter(9).is_active(e), e < 21, "element {e}");
        assert!(st.counter(10).is_active(e));
    }
    // Reversed bounds produce an all-false counter.
    let prog = words(&[
        Instruction::WhileltCnt {
            pnd: RegisterRef::pn(9),
            rn: x(0),
            rm: x(1),
            nvec: VecGroup::Two,
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[5, 5], 10).unwrap();
    assert!(!st.counter(9).is_active(0));
}

#[test]
fn ld1w_zeroes_inactive_lanes_and_logs_only_active_bytes() {
    let mut st = fresh();
    st.force_modes(true, true);
    let base = 0x1000u64;
    let data: Vec<u8> = (0..64).map(|i| i as u8).collect();
    st.write_memory(base, &data);
    st.set_z_bytes(0, &[0xEE; 64]);
    let prog = words(&[
        Instruction::Whilelt { pd: RegisterRef::p(0), esize: Esize::S, rn: x(1), rm: x(2) },
        Instruction::Ld1w { zt: RegisterRef::z(0), pg: RegisterRef::p(0), rn: x(0), imm_vl: 0 },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base, 0, 5], 10).unwrap();
    let z0 = st.z_bytes(0);
    assert_eq!(&z0[..20], &data[..20]);
    assert!(z0[20..].iter().all(|&b| b == 0), "inactive lanes are zeroed");
    assert_eq!(st.loaded_addrs().len(), 20);
    assert!(st.loaded_addrs().contains(&base));
    assert!(!st.loaded_addrs().contains(&(base + 20)));
    assert!(st.stored_addrs().is_empty());
}

#[test]
fn ld1w_immediate_offset_scales_by_vector_length() {
    let mut st = fresh();
    st.force_modes(true, true);
    let base = 0x2000u64;
    st.write_memory(base + 2 * 64, &[9u8; 64]);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Ld1w { zt: RegisterRef::z(3), pg: RegisterRef::p(0), rn: x(0), imm_vl: 2 },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base], 10).unwrap();
    assert_eq!(st.z_bytes(3), &[9u8; 64][..]);
}

#[test]
fn st1w_writes_only_active_lanes() {
    let mut st = fresh();
    st.force_modes(true, true);
    set_z_f32(&mut st, 1, |l| l as f32 + 1.0);
    let base = 0x3000u64;
    let prog = words(&[
        Instruction::Whilelt { pd: RegisterRef::p(3), esize: Esize::S, rn: x(1), rm: x(2) },
        Instruction::St1w { zt: RegisterRef::z(1), pg: RegisterRef::p(3), rn: x(0), imm_vl: 0 },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base, 0, 3], 10).unwrap();
    assert_eq!(st.stored_addrs().len(), 12);
    let back = st.read_memory(base, 16);
    assert_eq!(f32::from_le_bytes(back[0..4].try_into().unwrap()), 1.0);
    assert_eq!(f32::from_le_bytes(back[8..12].try_into().unwrap()), 3.0);
    // Lane 3 inactive: memory still reads zero.
    assert_eq!(&back[12..16], &[0, 0, 0, 0]);
}

#[test]
fn multi_vector_loads_use_flat_element_numbering() {
    let mut st = fresh();
    st.force_modes(true, true);
    let base = 0x4000u64;
    let data: Vec<u8> = (0..=255).collect();
    st.write_memory(base, &data);
    let prog = words(&[
        Instruction::PtrueCnt { pnd: RegisterRef::pn(8) },
        Instruction::Ld1wMulti {
            zt: RegisterRef::z(0),
            nvec: VecGroup::Four,
            png: RegisterRef::pn(8),
            rn: x(0),
            imm_vl: 0,
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base], 10).unwrap();
    for r in 0..4 {
        assert_eq!(st.z_bytes(r), &data[r * 64..(r + 1) * 64], "register {r}");
    }
}

#[test]
fn multi_vector_load_gates_trailing_elements() {
    let mut st = fresh();
    st.force_modes(true, true);
    let base = 0x5000u64;
    st.write_memory(base, &[0x11; 128]);
    st.set_z_bytes(1, &[0x77; 64]);
    let prog = words(&[
        // 20 of 32 elements: z0 full, z1 lanes 0..4 only.
        Instruction::WhileltCnt {
            pnd: RegisterRef::pn(9),
            rn: x(1),
            rm: x(2),
            nvec: VecGroup::Two,
        },
        Instruction::Ld1wMulti {
            zt: RegisterRef::z(0),
            nvec: VecGroup::Two,
            png: RegisterRef::pn(9),
            rn: x(0),
            imm_vl: 0,
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base, 0, 20], 10).unwrap();
    assert_eq!(st.z_bytes(0), &[0x11; 64][..]);
    assert_eq!(&st.z_bytes(1)[..16], &[0x11; 16]);
    assert!(st.z_bytes(1)[16..].iter().all(|&b| b == 0));
    assert_eq!(st.loaded_addrs().len(), 80);
}

#[test]
fn multi_vector_store_round_trips_with_offset() {
    let mut st = fresh();
    st.force_modes(true, true);
    for r in 0..2 {
        st.set_z_bytes(r, &[(r as u8 + 1) * 0x21; 64]);
    }
    let base = 0x6000u64;
    let prog = words(&[
        Instruction::PtrueCnt { pnd: RegisterRef::pn(8) },
        Instruction::St1wMulti {
            zt: RegisterRef::z(0),
            nvec: VecGroup::Two,
            png: RegisterRef::pn(8),
            rn: x(0),
            imm_vl: 2,
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[base], 10).unwrap();
    assert_eq!(st.read_memory(base + 2 * 64, 64), vec![0x21; 64]);
    assert_eq!(st.read_memory(base + 3 * 64, 64), vec![0x42; 64]);
    assert!(st.read_memory(base, 128).iter().all(|&b| b == 0));
}

#[test]
fn fmopa_matches_outer_product_oracle_and_accumulates() {
    let mut st = fresh();
    st.force_modes(true, true);
    set_z_f32(&mut st, 0, |l| 0.5 + l as f32);
    set_z_f32(&mut st, 1, |l| 1.25 * l as f32 - 3.0);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Whilelt { pd: RegisterRef::p(1), esize: Esize::S, rn: x(0), rm: x(1) },
        Instruction::Fmopa {
            fp64: false,
            zad: RegisterRef::za(2),
            pn: RegisterRef::p(0),
            pm: RegisterRef::p(1),
            zn: RegisterRef::z(0),
            zm: RegisterRef::z(1),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[0, 11], 10).unwrap();
    st.run(&prog, &[0, 11], 10).unwrap();

    let tile = st.read_tile_f32(2).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            let a = 0.5 + i as f32;
            let b = 1.25 * j as f32 - 3.0;
            let want = if j < 11 { a.mul_add(b, a * b) } else { 0.0 };
            assert_eq!(tile[i][j], want, "element ({i}, {j})");
        }
    }
    // Other tiles untouched.
    assert!(st.read_tile_f32(0).unwrap().iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn fmopa_fp64_uses_eight_lane_tiles() {
    let mut st = fresh();
    st.force_modes(true, true);
    let mut bytes = vec![0u8; 64];
    for l in 0..8 {
        bytes[l * 8..l * 8 + 8].copy_from_slice(&(l as f64 + 1.0).to_le_bytes());
    }
    st.set_z_bytes(0, &bytes);
    st.set_z_bytes(1, &bytes);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::D },
        Instruction::Fmopa {
            fp64: true,
            zad: RegisterRef::za(7),
            pn: RegisterRef::p(0),
            pm: RegisterRef::p(0),
            zn: RegisterRef::z(0),
            zm: RegisterRef::z(1),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    let tile = st.read_tile_f64(7).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(tile[i][j], (i as f64 + 1.0) * (j as f64 + 1.0));
        }
    }
}

#[test]
fn mova_group_round_trips_horizontal_and_vertical() {
    let mut st = fresh();
    st.force_modes(true, true);
    for r in 0..4 {
        set_z_f32(&mut st, r, |l| (r * 100 + l) as f32);
    }
    st.set_x(12, 0);
    let to_tile = |vertical| Instruction::MovaToTile {
        zad: RegisterRef::za(1),
        vertical,
        ws: x(12),
        offset: 0,
        nvec: VecGroup::Four,
        zt: RegisterRef::z(0),
    };
    let from_tile = |vertical| Instruction::MovaFromTile {
        zt: RegisterRef::z(16),
        nvec: VecGroup::Four,
        zad: RegisterRef::za(1),
        vertical,
        ws: x(12),
        offset: 0,
    };

    // Horizontal write, horizontal read: identity.
    st.run(&words(&[to_tile(false), from_tile(false), Instruction::Ret]), &[], 10).unwrap();
    for r in 0..4 {
        assert_eq!(z_as_f32(&st, 16 + r), z_as_f32(&st, r));
    }

    // Horizontal write, vertical read: transpose of the written slices.
    st.run(&words(&[from_tile(true), Instruction::Ret]), &[], 10).unwrap();
    let tile = st.read_tile_f32(1).unwrap();
    for r in 0..4 {
        let col: Vec<f32> = (0..16).map(|i| tile[i][r]).collect();
        assert_eq!(z_as_f32(&st, 16 + r), col);
    }
}

#[test]
fn mova_slice_select_adds_offset_modulo_dim() {
    let mut st = fresh();
    st.force_modes(true, true);
    set_z_f32(&mut st, 4, |l| l as f32 + 0.25);
    st.set_x(13, 15);
    // Slice (15 + 2, 15 + 3) mod 16 = 1, 2 for a two-register group.
    let prog = words(&[
        Instruction::MovaToTile {
            zad: RegisterRef::za(0),
            vertical: false,
            ws: x(13),
            offset: 2,
            nvec: VecGroup::Two,
            zt: RegisterRef::z(4),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    let tile = st.read_tile_f32(0).unwrap();
    assert_eq!(tile[1], z_as_f32(&st, 4));
    assert_eq!(tile[2], z_as_f32(&st, 5));
    assert!(tile[0].iter().all(|&v| v == 0.0));
    assert!(tile[3].iter().all(|&v| v == 0.0));
}

#[test]
fn predicated_mova_merges_inactive_lanes() {
    let mut st = fresh();
    st.force_modes(true, true);
    set_z_f32(&mut st, 0, |l| l as f32 + 1.0);
    set_z_f32(&mut st, 1, |_| -1.0);
    st.set_x(12, 3);
    let prog = words(&[
        // Fill slice 3 of za0 from z0, all lanes.
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::MovaToTileP {
            zad: RegisterRef::za(0),
            vertical: false,
            ws: x(12),
            offset: 0,
            pg: RegisterRef::p(0),
            zn: RegisterRef::z(0),
        },
        // Overwrite lanes 0..6 only.
        Instruction::Whilelt { pd: RegisterRef::p(1), esize: Esize::S, rn: x(0), rm: x(1) },
        Instruction::MovaToTileP {
            zad: RegisterRef::za(0),
            vertical: false,
            ws: x(12),
            offset: 0,
            pg: RegisterRef::p(1),
            zn: RegisterRef::z(1),
        },
        // Read back into z2 under the partial predicate, merging.
        Instruction::MovaFromTileP {
            zd: RegisterRef::z(2),
            pg: RegisterRef::p(1),
            zad: RegisterRef::za(0),
            vertical: false,
            ws: x(12),
            offset: 0,
        },
        Instruction::Ret,
    ]);
    set_z_f32(&mut st, 2, |_| 99.0);
    st.run(&prog, &[0, 6], 20).unwrap();
    let tile = st.read_tile_f32(0).unwrap();
    for j in 0..16 {
        let want = if j < 6 { -1.0 } else { j as f32 + 1.0 };
        assert_eq!(tile[3][j], want, "slice element {j}");
    }
    let z2 = z_as_f32(&st, 2);
    for (l, &v) in z2.iter().enumerate() {
        let want = if l < 6 { -1.0 } else { 99.0 };
        assert_eq!(v, want, "lane {l}");
    }
}

#[test]
fn vertical_predicated_mova_writes_a_tile_column() {
    let mut st = fresh();
    st.force_modes(true, true);
    set_z_f32(&mut st, 3, |l| l as f32 * 2.0);
    st.set_x(14, 5);
    let prog = words(&[
        Instruction::Whilelt { pd: RegisterRef::p(2), esize: Esize::S, rn: x(0), rm: x(1) },
        Instruction::MovaToTileP {
            zad: RegisterRef::za(2),
            vertical: true,
            ws: x(14),
            offset: 1,
            pg: RegisterRef::p(2),
            zn: RegisterRef::z(3),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[0, 9], 10).unwrap();
    let tile = st.read_tile_f32(2).unwrap();
    for i in 0..16 {
        let want = if i < 9 { i as f32 * 2.0 } else { 0.0 };
        assert_eq!(tile[i][6], want, "row {i}");
        assert_eq!(tile[i][5], 0.0);
    }
}

#[test]
fn ldr_str_za_move_whole_array_vectors() {
    let mut st = fresh();
    st.force_modes(true, true);
    let src = 0x7000u64;
    let dst = 0x8000u64;
    let data: Vec<u8> = (0..64).map(|i| 255 - i as u8).collect();
    // The immediate offsets both the vector select and the address.
    st.write_memory(src + 3 * 64, &data);
    let prog = words(&[
        Instruction::LdrZa { ws: x(12), offset: 3, rn: x(0) },
        Instruction::StrZa { ws: x(13), offset: 0, rn: x(1) },
        Instruction::Ret,
    ]);
    st.set_x(12, 0);
    st.set_x(13, 3);
    st.run(&prog, &[src, dst], 10).unwrap();
    assert_eq!(st.za_vector(3), &data[..]);
    assert_eq!(st.read_memory(dst, 64), data);
    assert_eq!(st.loaded_addrs().len(), 64);
    assert_eq!(st.stored_addrs().len(), 64);
}

#[test]
fn ldr_za_vector_select_wraps() {
    let mut st = fresh();
    st.force_modes(true, true);
    st.write_memory(0x9000 + 2 * 64, &[0xCD; 64]);
    st.set_x(12, 63);
    let prog = words(&[
        Instruction::LdrZa { ws: x(12), offset: 2, rn: x(0) },
        Instruction::Ret,
    ]);
    st.run(&prog, &[0x9000], 10).unwrap();
    assert_eq!(st.za_vector(1), &[0xCD; 64][..]);
}

#[test]
fn unwritten_memory_reads_zero_but_is_logged() {
    let mut st = fresh();
    st.force_modes(true, true);
    st.set_z_bytes(0, &[0xAA; 64]);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Ld1w { zt: RegisterRef::z(0), pg: RegisterRef::p(0), rn: x(0), imm_vl: 0 },
        Instruction::Ret,
    ]);
    st.run(&prog, &[0xF000], 10).unwrap();
    assert!(st.z_bytes(0).iter().all(|&b| b == 0));
    assert_eq!(st.loaded_addrs().len(), 64);
}

#[test]
fn run_chains_kernels_without_resetting_state() {
    let mut st = fresh();
    let setup = words(&[
        Instruction::Smstart,
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Ret,
    ]);
    st.run(&setup, &[], 10).unwrap();
    assert!(st.streaming());
    // Second kernel sees the predicate the first one built.
    let use_pred = words(&[
        Instruction::Ld1w { zt: RegisterRef::z(0), pg: RegisterRef::p(0), rn: x(0), imm_vl: 0 },
        Instruction::Ret,
    ]);
    st.write_memory(0x100, &[5; 64]);
    st.run(&use_pred, &[0x100], 10).unwrap();
    assert_eq!(st.z_bytes(0), &[5; 64][..]);
}

#[test]
fn decode_failures_carry_the_pc() {
    let mut st = fresh();
    let prog = vec![
        encode(&Instruction::Movz { wide: true, rd: x(0), imm16: 1, hw: 0 }).unwrap(),
        0xFFFF_FFFF,
    ];
    let err = st.run(&prog, &[], 10).unwrap_err();
    assert!(matches!(err, StepError::Decode { pc: 1, .. }));
}

#[test]
fn tile_reads_validate_the_tile_index() {
    let st = fresh();
    assert!(st.read_tile_f32(3).is_ok());
    assert_eq!(
        st.read_tile_f32(4).unwrap_err(),
        MachineError::InvalidTile { tile: 4, lanes: 16 }
    );
    assert!(st.read_tile_f64(7).is_ok());
    assert!(st.read_tile_f64(8).is_err());
}

#[test]
fn state_reports_valid_svl_sizes() {
    for bits in VALID_SVL_BITS {
        let st = MachineState::new(bits).unwrap();
        assert_eq!(st.svl_bytes(), bits as usize / 8);
        assert_eq!(st.za_bytes().len(), st.svl_bytes() * st.svl_bytes());
    }
}

#[test]
fn fmopa_works_at_other_vector_lengths() {
    let mut st = MachineState::new(128).unwrap();
    st.force_modes(true, true);
    let mut bytes = vec![0u8; 16];
    for l in 0..4 {
        bytes[l * 4..l * 4 + 4].copy_from_slice(&(l as f32 + 1.0).to_le_bytes());
    }
    st.set_z_bytes(0, &bytes);
    st.set_z_bytes(1, &bytes);
    let prog = words(&[
        Instruction::Ptrue { pd: RegisterRef::p(0), esize: Esize::S },
        Instruction::Fmopa {
            fp64: false,
            zad: RegisterRef::za(0),
            pn: RegisterRef::p(0),
            pm: RegisterRef::p(0),
            zn: RegisterRef::z(0),
            zm: RegisterRef::z(1),
        },
        Instruction::Ret,
    ]);
    st.run(&prog, &[], 10).unwrap();
    let tile = st.read_tile_f32(0).unwrap();
    assert_eq!(tile.len(), 4);
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(tile[i][j], (i as f32 + 1.0) * (j as f32 + 1.0));
        }
    }
}
