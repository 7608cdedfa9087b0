//! Canonical assembly text for the subset.
//!
//! The canonical spelling is exactly what the reference assembler accepts
//! and what the golden fixture stores: lowercase mnemonics, `{ z0.s, z1.s }`
//! and `{ z0.s - z3.s }` list spellings, explicit `#0`-less memory operands
//! (`[x0]` when the offset is zero), byte offsets on branches, and slice
//! selects spelled `za0h.s[w12, 0:3]`. [`format_instruction`] and
//! [`parse_instruction`] are exact inverses over every encodable form.

use super::{
    BranchTarget, Esize, Instruction, RegClass, RegisterRef, VecGroup,
};

/// Error from [`parse_instruction`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse instruction `{line}`: {reason}")]
pub struct ParseError {
    pub line: String,
    pub reason: String,
}

fn gp(wide: bool, r: RegisterRef) -> String {
    format!("{}{}", if wide { 'x' } else { 'w' }, r.index())
}

fn mem(rn: RegisterRef, imm_vl: i64) -> String {
    if imm_vl == 0 {
        format!("[x{}]", rn.index())
    } else {
        format!("[x{}, #{imm_vl}, mul vl]", rn.index())
    }
}

fn zlist(zt: RegisterRef, count: usize) -> String {
    let t = zt.index();
    match count {
        1 => format!("{{ z{t}.s }}"),
        2 => format!("{{ z{t}.s, z{}.s }}", t + 1),
        4 => format!("{{ z{t}.s - z{}.s }}", t + 3),
        _ => unreachable!("vector list count {count}"),
    }
}

fn za_slice(zad: RegisterRef, vertical: bool, ws: RegisterRef, offset: u8, span: usize) -> String {
    let dir = if vertical { 'v' } else { 'h' };
    let w = ws.index();
    if span == 1 {
        format!("za{}{dir}.s[w{w}, {offset}]", zad.index())
    } else {
        format!("za{}{dir}.s[w{w}, {offset}:{}]", zad.index(), offset + span as u8 - 1)
    }
}

/// Renders an instruction in canonical assembly text.
///
/// A `Cbnz` with an unresolved label renders as `cbnz xN, Lk`; only
/// resolved branches produce parseable text.
pub fn format_instruction(inst: &Instruction) -> String {
    match *inst {
        Instruction::Ret => "ret".into(),
        Instruction::Smstart => "smstart".into(),
        Instruction::Smstop => "smstop".into(),

        Instruction::Movz { wide, rd, imm16, hw } | Instruction::Movk { wide, rd, imm16, hw } => {
            let mn = if matches!(inst, Instruction::Movz { .. }) { "movz" } else { "movk" };
            let mut s = format!("{mn} {}, #{imm16}", gp(wide, rd));
            if hw != 0 {
                s.push_str(&format!(", lsl #{}", u32::from(hw) * 16));
            }
            s
        }

        Instruction::AddImm { wide, rd, rn, imm12, lsl12 }
        | Instruction::SubImm { wide, rd, rn, imm12, lsl12 } => {
            let mn = if matches!(inst, Instruction::AddImm { .. }) { "add" } else { "sub" };
            let mut s = format!("{mn} {}, {}, #{imm12}", gp(wide, rd), gp(wide, rn));
            if lsl12 {
                s.push_str(", lsl #12");
            }
            s
        }

        Instruction::AddReg { wide, rd, rn, rm } | Instruction::SubReg { wide, rd, rn, rm } => {
            let mn = if matches!(inst, Instruction::AddReg { .. }) { "add" } else { "sub" };
            format!("{mn} {}, {}, {}", gp(wide, rd), gp(wide, rn), gp(wide, rm))
        }

        Instruction::Cbnz { rt, target } => match target {
            BranchTarget::Resolved(offset) => format!("cbnz x{}, #{offset}", rt.index()),
            BranchTarget::Label(l) => format!("cbnz x{}, {l}", rt.index()),
        },

        Instruction::FmlaVec { fp64, vd, vn, vm } => {
            let t = if fp64 { "2d" } else { "4s" };
            format!("fmla v{}.{t}, v{}.{t}, v{}.{t}", vd.index(), vn.index(), vm.index())
        }

        Instruction::Ptrue { pd, esize } => format!("ptrue p{}.{}", pd.index(), esize.suffix()),
        Instruction::Whilelt { pd, esize, rn, rm } => format!(
            "whilelt p{}.{}, x{}, x{}",
            pd.index(),
            esize.suffix(),
            rn.index(),
            rm.index()
        ),
        Instruction::PtrueCnt { pnd } => format!("ptrue pn{}.s", pnd.index()),
        Instruction::WhileltCnt { pnd, rn, rm, nvec } => format!(
            "whilelt pn{}.s, x{}, x{}, vlx{}",
            pnd.index(),
            rn.index(),
            rm.index(),
            nvec.count()
        ),

        Instruction::Fmopa { fp64, zad, pn, pm, zn, zm } => {
            let t = if fp64 { 'd' } else { 's' };
            format!(
                "fmopa za{}.{t}, p{}/m, p{}/m, z{}.{t}, z{}.{t}",
                zad.index(),
                pn.index(),
                pm.index(),
                zn.index(),
                zm.index()
            )
        }

        Instruction::Ld1w { zt, pg, rn, imm_vl } => format!(
            "ld1w {}, p{}/z, {}",
            zlist(zt, 1),
            pg.index(),
            mem(rn, imm_vl.into())
        ),
        Instruction::St1w { zt, pg, rn, imm_vl } => {
            format!("st1w {}, p{}, {}", zlist(zt, 1), pg.index(), mem(rn, imm_vl.into()))
        }
        Instruction::Ld1wMulti { zt, nvec, png, rn, imm_vl } => format!(
            "ld1w {}, pn{}/z, {}",
            zlist(zt, nvec.count()),
            png.index(),
            mem(rn, imm_vl.into())
        ),
        Instruction::St1wMulti { zt, nvec, png, rn, imm_vl } => format!(
            "st1w {}, pn{}, {}",
            zlist(zt, nvec.count()),
            png.index(),
            mem(rn, imm_vl.into())
        ),

        Instruction::MovaToTile { zad, vertical, ws, offset, nvec, zt } => format!(
            "mov {}, {}",
            za_slice(zad, vertical, ws, offset, nvec.count()),
            zlist(zt, nvec.count())
        ),
        Instruction::MovaFromTile { zt, nvec, zad, vertical, ws, offset } => format!(
            "mov {}, {}",
            zlist(zt, nvec.count()),
            za_slice(zad, vertical, ws, offset, nvec.count())
        ),
        Instruction::MovaToTileP { zad, vertical, ws, offset, pg, zn } => format!(
            "mov {}, p{}/m, z{}.s",
            za_slice(zad, vertical, ws, offset, 1),
            pg.index(),
            zn.index()
        ),
        Instruction::MovaFromTileP { zd, pg, zad, vertical, ws, offset } => format!(
            "mov z{}.s, p{}/m, {}",
            zd.index(),
            pg.index(),
            za_slice(zad, vertical, ws, offset, 1)
        ),

        Instruction::LdrZa { ws, offset, rn } => {
            format!("ldr za[w{}, {offset}], {}", ws.index(), mem(rn, offset.into()))
        }
        Instruction::StrZa { ws, offset, rn } => {
            format!("str za[w{}, {offset}], {}", ws.index(), mem(rn, offset.into()))
        }
    }
}

struct P<'a> {
    line: &'a str,
}

impl<'a> P<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line: self.line.to_string(), reason: reason.into() })
    }

    /// Splits an operand string on top-level commas; brackets and braces
    /// nest.
    fn operands(&self, s: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        for c in s.chars() {
            match c {
                '[' | '{' => {
                    depth += 1;
                    cur.push(c);
                }
                ']' | '}' => {
                    depth -= 1;
                    cur.push(c);
                }
                ',' if depth == 0 => {
                    out.push(cur.trim().to_string());
                    cur = String::new();
                }
                _ => cur.push(c),
            }
        }
        if !cur.trim().is_empty() {
            out.push(cur.trim().to_string());
        }
        out
    }

    fn int(&self, s: &str) -> Result<i64, ParseError> {
        let body = s.strip_prefix('#').unwrap_or(s);
        body.parse::<i64>().or_else(|_| self.err(format!("bad integer `{s}`")))
    }

    fn reg_index(&self, s: &str, prefix: &str) -> Result<u8, ParseError> {
        let body = match s.strip_prefix(prefix) {
            Some(b) => b,
            None => return self.err(format!("expected {prefix} register, got `{s}`")),
        };
        match body.parse::<u8>() {
            Ok(i) => Ok(i),
            Err(_) => self.err(format!("bad register index in `{s}`")),
        }
    }

    fn gpreg(&self, s: &str) -> Result<(bool, RegisterRef), ParseError> {
        let (wide, prefix) = match s.as_bytes().first() {
            Some(b'x') => (true, "x"),
            Some(b'w') => (false, "w"),
            _ => return self.err(format!("expected general register, got `{s}`")),
        };
        let idx = self.reg_index(s, prefix)?;
        match RegisterRef::try_new(RegClass::X, idx) {
            Some(r) => Ok((wide, r)),
            None => self.err(format!("general register index {idx} out of range")),
        }
    }

    fn xreg(&self, s: &str) -> Result<RegisterRef, ParseError> {
        let (wide, r) = self.gpreg(s)?;
        if !wide {
            return self.err(format!("expected x register, got `{s}`"));
        }
        Ok(r)
    }

    fn esize(&self, suffix: &str) -> Result<Esize, ParseError> {
        match suffix {
            "b" => Ok(Esize::B),
            "h" => Ok(Esize::H),
            "s" => Ok(Esize::S),
            "d" => Ok(Esize::D),
            _ => self.err(format!("bad element size `.{suffix}`")),
        }
    }

    /// `z3.s` (the only z element size in the subset).
    fn zreg_s(&self, s: &str) -> Result<RegisterRef, ParseError> {
        let body = match s.strip_suffix(".s") {
            Some(b) => b,
            None => return self.err(format!("expected zN.s, got `{s}`")),
        };
        let idx = self.reg_index(body, "z")?;
        RegisterRef::try_new(RegClass::Z, idx)
            .map_or_else(|| self.err(format!("z register index {idx} out of range")), Ok)
    }

    /// `p3` with an optional qualifier (`/z`, `/m`) that must match `qual`.
    fn preg(&self, s: &str, qual: &str) -> Result<RegisterRef, ParseError> {
        let body = match (qual, s.find('/')) {
            ("", None) => s,
            ("", Some(_)) => return self.err(format!("unexpected qualifier in `{s}`")),
            (_, Some(pos)) if &s[pos..] == qual => &s[..pos],
            _ => return self.err(format!("expected `{qual}` qualifier in `{s}`")),
        };
        if body.starts_with("pn") {
            return self.err(format!("expected p register, got `{s}`"));
        }
        let idx = self.reg_index(body, "p")?;
        RegisterRef::try_new(RegClass::P, idx)
            .map_or_else(|| self.err(format!("p register index {idx} out of range")), Ok)
    }

    fn pnreg(&self, s: &str, qual: &str) -> Result<RegisterRef, ParseError> {
        let body = match (qual, s.find('/')) {
            ("", None) => s,
            ("", Some(_)) => return self.err(format!("unexpected qualifier in `{s}`")),
            (_, Some(pos)) if &s[pos..] == qual => &s[..pos],
            _ => return self.err(format!("expected `{qual}` qualifier in `{s}`")),
        };
        let idx = self.reg_index(body, "pn")?;
        RegisterRef::try_new(RegClass::Pn, idx)
            .map_or_else(|| self.err(format!("pn register index {idx} out of range")), Ok)
    }

    /// `[x0]` or `[x0, #N, mul vl]`.
    fn memop(&self, s: &str) -> Result<(RegisterRef, i64), ParseError> {
        let body = match s.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            Some(b) => b,
            None => return self.err(format!("expected memory operand, got `{s}`")),
        };
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [base] => Ok((self.xreg(base)?, 0)),
            [base, imm, mulvl] if *mulvl == "mul vl" => Ok((self.xreg(base)?, self.int(imm)?)),
            _ => self.err(format!("bad memory operand `{s}`")),
        }
    }

    /// `{ z0.s }`, `{ z0.s, z1.s }`, or `{ z0.s - z3.s }`.
    fn zlist(&self, s: &str) -> Result<(RegisterRef, usize), ParseError> {
        let body = match s.strip_prefix('{').and_then(|b| b.strip_suffix('}')) {
            Some(b) => b.trim(),
            None => return self.err(format!("expected vector list, got `{s}`")),
        };
        if let Some((a, b)) = body.split_once('-') {
            let first = self.zreg_s(a.trim())?;
            let last = self.zreg_s(b.trim())?;
            if last.index() != first.index() + 3 {
                return self.err(format!("vector range `{s}` is not four consecutive registers"));
            }
            return Ok((first, 4));
        }
        if let Some((a, b)) = body.split_once(',') {
            let first = self.zreg_s(a.trim())?;
            let second = self.zreg_s(b.trim())?;
            if second.index() != first.index() + 1 {
                return self.err(format!("vector pair `{s}` is not consecutive"));
            }
            return Ok((first, 2));
        }
        Ok((self.zreg_s(body)?, 1))
    }

    /// `za0h.s[w12, 0]` or `za0h.s[w12, 0:3]` -> (tile, vertical, ws,
    /// offset, span).
    fn za_slice(&self, s: &str) -> Result<(RegisterRef, bool, RegisterRef, u8, usize), ParseError> {
        let open = match s.find('[') {
            Some(i) => i,
            None => return self.err(format!("expected za slice, got `{s}`")),
        };
        let head = &s[..open];
        let body = match s[open + 1..].strip_suffix(']') {
            Some(b) => b,
            None => return self.err(format!("unterminated za slice `{s}`")),
        };
        let head = match head.strip_suffix(".s") {
            Some(h) => h,
            None => return self.err(format!("za slice `{s}` must be .s")),
        };
        let (tile_part, vertical) = if let Some(t) = head.strip_suffix('h') {
            (t, false)
        } else if let Some(t) = head.strip_suffix('v') {
            (t, true)
        } else {
            return self.err(format!("za slice `{s}` lacks h/v direction"));
        };
        let tile_idx = self.reg_index(tile_part, "za")?;
        let tile = match RegisterRef::try_new(RegClass::ZaTile, tile_idx) {
            Some(t) => t,
            None => return self.err(format!("za tile index {tile_idx} out of range")),
        };
        let (ws_part, sel) = match body.split_once(',') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => return self.err(format!("za slice `{s}` lacks a select immediate")),
        };
        let (wide, ws) = self.gpreg(ws_part)?;
        if wide {
            return self.err(format!("slice select must be a w register in `{s}`"));
        }
        let (offset, span) = if let Some((a, b)) = sel.split_once(':') {
            let lo = self.int(a)?;
            let hi = self.int(b)?;
            if hi < lo {
                return self.err(format!("bad slice range `{sel}`"));
            }
            (lo, (hi - lo + 1) as usize)
        } else {
            (self.int(sel)?, 1)
        };
        if !(0..=255).contains(&offset) {
            return self.err(format!("slice offset {offset} out of range"));
        }
        Ok((tile, vertical, ws, offset as u8, span))
    }

    fn span_group(&self, span: usize) -> Result<VecGroup, ParseError> {
        match span {
            2 => Ok(VecGroup::Two),
            4 => Ok(VecGroup::Four),
            _ => self.err(format!("slice span {span} is not a vector group")),
        }
    }
}

/// Parses one line of canonical assembly text.
pub fn parse_instruction(line: &str) -> Result<Instruction, ParseError> {
    let p = P { line };
    let trimmed = line.trim();
    let (mnemonic, rest) = match trimmed.split_once(' ') {
        Some((m, r)) => (m, r.trim()),
        None => (trimmed, ""),
    };
    let ops = p.operands(rest);

    match mnemonic {
        "ret" if ops.is_empty() => Ok(Instruction::Ret),
        "smstart" if ops.is_empty() => Ok(Instruction::Smstart),
        "smstop" if ops.is_empty() => Ok(Instruction::Smstop),

        "movz" | "movk" => {
            if ops.len() != 2 && ops.len() != 3 {
                return p.err("movz/movk take 2 or 3 operands");
            }
            let (wide, rd) = p.gpreg(&ops[0])?;
            let imm = p.int(&ops[1])?;
            if !(0..=0xFFFF).contains(&imm) {
                return p.err(format!("move-wide immediate {imm} outside [0, 65535]"));
            }
            let hw = if ops.len() == 3 {
                let sh = match ops[2].strip_prefix("lsl ") {
                    Some(s) => p.int(s.trim())?,
                    None => return p.err("expected `lsl #N` shift"),
                };
                if sh % 16 != 0 || !(0..=48).contains(&sh) {
                    return p.err(format!("bad move-wide shift {sh}"));
                }
                (sh / 16) as u8
            } else {
                0
            };
            let imm16 = imm as u16;
            Ok(if mnemonic == "movz" {
                Instruction::Movz { wide, rd, imm16, hw }
            } else {
                Instruction::Movk { wide, rd, imm16, hw }
            })
        }

        "add" | "sub" => {
            if ops.len() != 3 && ops.len() != 4 {
                return p.err("add/sub take 3 or 4 operands");
            }
            let (wide, rd) = p.gpreg(&ops[0])?;
            let (wide_n, rn) = p.gpreg(&ops[1])?;
            if wide_n != wide {
                return p.err("mixed register widths");
            }
            if ops[2].starts_with('#') {
                let imm = p.int(&ops[2])?;
                if !(0..=4095).contains(&imm) {
                    return p.err(format!("add/sub immediate {imm} outside [0, 4095]"));
                }
                let lsl12 = if ops.len() == 4 {
                    if ops[3] != "lsl #12" {
                        return p.err("only `lsl #12` is valid on add/sub immediates");
                    }
                    true
                } else {
                    false
                };
                let imm12 = imm as u16;
                Ok(if mnemonic == "add" {
                    Instruction::AddImm { wide, rd, rn, imm12, lsl12 }
                } else {
                    Instruction::SubImm { wide, rd, rn, imm12, lsl12 }
                })
            } else {
                if ops.len() != 3 {
                    return p.err("register add/sub takes 3 operands");
                }
                let (wide_m, rm) = p.gpreg(&ops[2])?;
                if wide_m != wide {
                    return p.err("mixed register widths");
                }
                Ok(if mnemonic == "add" {
                    Instruction::AddReg { wide, rd, rn, rm }
                } else {
                    Instruction::SubReg { wide, rd, rn, rm }
                })
            }
        }

        "cbnz" => {
            if ops.len() != 2 {
                return p.err("cbnz takes 2 operands");
            }
            let rt = p.xreg(&ops[0])?;
            let offset = p.int(&ops[1])?;
            if offset % 4 != 0 || !(-(1 << 20)..=(1 << 20) - 4).contains(&offset) {
                return p.err(format!("branch offset {offset} invalid"));
            }
            Ok(Instruction::Cbnz { rt, target: BranchTarget::Resolved(offset as i32) })
        }

        "fmla" => {
            if ops.len() != 3 {
                return p.err("fmla takes 3 operands");
            }
            let mut regs = Vec::new();
            let mut fp64 = None;
            for op in &ops {
                let (body, is64) = if let Some(b) = op.strip_suffix(".4s") {
                    (b, false)
                } else if let Some(b) = op.strip_suffix(".2d") {
                    (b, true)
                } else {
                    return p.err(format!("bad vector arrangement in `{op}`"));
                };
                if *fp64.get_or_insert(is64) != is64 {
                    return p.err("mixed vector arrangements");
                }
                let idx = p.reg_index(body, "v")?;
                regs.push(RegisterRef::v(idx));
            }
            Ok(Instruction::FmlaVec { fp64: fp64.unwrap(), vd: regs[0], vn: regs[1], vm: regs[2] })
        }

        "ptrue" => {
            if ops.len() != 1 {
                return p.err("ptrue takes 1 operand");
            }
            let (body, suffix) = match ops[0].rsplit_once('.') {
                Some(x) => x,
                None => return p.err("ptrue operand lacks element size"),
            };
            if body.starts_with("pn") {
                if suffix != "s" {
                    return p.err("counter predicates are .s only");
                }
                let idx = p.reg_index(body, "pn")?;
                let pnd = RegisterRef::try_new(RegClass::Pn, idx)
                    .ok_or_else(|| ParseError {
                        line: line.into(),
                        reason: format!("pn register index {idx} out of range"),
                    })?;
                Ok(Instruction::PtrueCnt { pnd })
            } else {
                let idx = p.reg_index(body, "p")?;
                let pd = RegisterRef::try_new(RegClass::P, idx)
                    .ok_or_else(|| ParseError {
                        line: line.into(),
                        reason: format!("p register index {idx} out of range"),
                    })?;
                Ok(Instruction::Ptrue { pd, esize: p.esize(suffix)? })
            }
        }

        "whilelt" => {
            if ops.len() != 3 && ops.len() != 4 {
                return p.err("whilelt takes 3 or 4 operands");
            }
            let (body, suffix) = match ops[0].rsplit_once('.') {
                Some(x) => x,
                None => return p.err("whilelt destination lacks element size"),
            };
            let rn = p.xreg(&ops[1])?;
            let rm = p.xreg(&ops[2])?;
            if body.starts_with("pn") {
                if suffix != "s" {
                    return p.err("counter predicates are .s only");
                }
                if ops.len() != 4 {
                    return p.err("counter whilelt needs a vlx group");
                }
                let nvec = match ops[3].as_str() {
                    "vlx2" => VecGroup::Two,
                    "vlx4" => VecGroup::Four,
                    other => return p.err(format!("bad vector group `{other}`")),
                };
                let idx = p.reg_index(body, "pn")?;
                let pnd = RegisterRef::try_new(RegClass::Pn, idx)
                    .ok_or_else(|| ParseError {
                        line: line.into(),
                        reason: format!("pn register index {idx} out of range"),
                    })?;
                Ok(Instruction::WhileltCnt { pnd, rn, rm, nvec })
            } else {
                if ops.len() != 3 {
                    return p.err("whilelt takes 3 operands");
                }
                let idx = p.reg_index(body, "p")?;
                let pd = RegisterRef::try_new(RegClass::P, idx)
                    .ok_or_else(|| ParseError {
                        line: line.into(),
                        reason: format!("p register index {idx} out of range"),
                    })?;
                Ok(Instruction::Whilelt { pd, esize: p.esize(suffix)?, rn, rm })
            }
        }

        "fmopa" => {
            if ops.len() != 5 {
                return p.err("fmopa takes 5 operands");
            }
            let (tile_body, tsuf) = match ops[0].rsplit_once('.') {
                Some(x) => x,
                None => return p.err("fmopa tile lacks element size"),
            };
            let fp64 = match tsuf {
                "s" => false,
                "d" => true,
                _ => return p.err(format!("fmopa element size `.{tsuf}` unsupported")),
            };
            let tile_idx = p.reg_index(tile_body, "za")?;
            let zad = RegisterRef::try_new(RegClass::ZaTile, tile_idx)
                .ok_or_else(|| ParseError {
                    line: line.into(),
                    reason: format!("za tile index {tile_idx} out of range"),
                })?;
            let pn = p.preg(&ops[1], "/m")?;
            let pm = p.preg(&ops[2], "/m")?;
            let zsuf = if fp64 { ".d" } else { ".s" };
            let zn_body = ops[3]
                .strip_suffix(zsuf)
                .ok_or_else(|| ParseError {
                    line: line.into(),
                    reason: format!("fmopa source `{}` must be {zsuf}", ops[3]),
                })?;
            let zm_body = ops[4]
                .strip_suffix(zsuf)
                .ok_or_else(|| ParseError {
                    line: line.into(),
                    reason: format!("fmopa source `{}` must be {zsuf}", ops[4]),
                })?;
            let zn = RegisterRef::z(p.reg_index(zn_body, "z")?);
            let zm = RegisterRef::z(p.reg_index(zm_body, "z")?);
            Ok(Instruction::Fmopa { fp64, zad, pn, pm, zn, zm })
        }

        "ld1w" | "st1w" => {
            if ops.len() != 3 {
                return p.err("ld1w/st1w take 3 operands");
            }
            let load = mnemonic == "ld1w";
            let (zt, count) = p.zlist(&ops[0])?;
            let (rn, imm) = p.memop(&ops[2])?;
            if !(-128..=127).contains(&imm) {
                return p.err(format!("vector-length offset {imm} out of range"));
            }
            let imm_vl = imm as i8;
            if count == 1 {
                let pg = p.preg(&ops[1], if load { "/z" } else { "" })?;
                Ok(if load {
                    Instruction::Ld1w { zt, pg, rn, imm_vl }
                } else {
                    Instruction::St1w { zt, pg, rn, imm_vl }
                })
            } else {
                let nvec = p.span_group(count)?;
                let png = p.pnreg(&ops[1], if load { "/z" } else { "" })?;
                Ok(if load {
                    Instruction::Ld1wMulti { zt, nvec, png, rn, imm_vl }
                } else {
                    Instruction::St1wMulti { zt, nvec, png, rn, imm_vl }
                })
            }
        }

        "mov" => {
            if ops.len() != 2 && ops.len() != 3 {
                return p.err("mov takes 2 or 3 operands");
            }
            if ops[0].starts_with("za") {
                let (zad, vertical, ws, offset, span) = p.za_slice(&ops[0])?;
                if ops.len() == 2 {
                    let (zt, count) = p.zlist(&ops[1])?;
                    if count != span {
                        return p.err("slice span does not match vector list");
                    }
                    let nvec = p.span_group(count)?;
                    Ok(Instruction::MovaToTile { zad, vertical, ws, offset, nvec, zt })
                } else {
                    if span != 1 {
                        return p.err("predicated mova moves one slice");
                    }
                    let pg = p.preg(&ops[1], "/m")?;
                    let zn = p.zreg_s(&ops[2])?;
                    Ok(Instruction::MovaToTileP { zad, vertical, ws, offset, pg, zn })
                }
            } else if ops[0].starts_with('{') {
                if ops.len() != 2 {
                    return p.err("vector-list mov takes 2 operands");
                }
                let (zt, count) = p.zlist(&ops[0])?;
                let (zad, vertical, ws, offset, span) = p.za_slice(&ops[1])?;
                if count != span {
                    return p.err("slice span does not match vector list");
                }
                let nvec = p.span_group(count)?;
                Ok(Instruction::MovaFromTile { zt, nvec, zad, vertical, ws, offset })
            } else {
                if ops.len() != 3 {
                    return p.err("predicated mova takes 3 operands");
                }
                let zd = p.zreg_s(&ops[0])?;
                let pg = p.preg(&ops[1], "/m")?;
                let (zad, vertical, ws, offset, span) = p.za_slice(&ops[2])?;
                if span != 1 {
                    return p.err("predicated mova moves one slice");
                }
                Ok(Instruction::MovaFromTileP { zd, pg, zad, vertical, ws, offset })
            }
        }

        "ldr" | "str" => {
            if ops.len() != 2 {
                return p.err("ldr/str take 2 operands");
            }
            let body = match ops[0].strip_prefix("za[").and_then(|b| b.strip_suffix(']')) {
                Some(b) => b,
                None => return p.err(format!("expected za[...] operand, got `{}`", ops[0])),
            };
            let (ws_part, sel) = match body.split_once(',') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => return p.err("za operand lacks a select immediate"),
            };
            let (wide, ws) = p.gpreg(ws_part)?;
            if wide || !(12..=15).contains(&ws.index()) {
                return p.err("vector select must be w12-w15");
            }
            let offset = p.int(sel)?;
            if !(0..=15).contains(&offset) {
                return p.err(format!("vector select offset {offset} outside [0, 15]"));
            }
            let (rn, mem_imm) = p.memop(&ops[1])?;
            if mem_imm != offset {
                return p.err("ldr/str za memory offset must equal the vector select offset");
            }
            let offset = offset as u8;
            Ok(if mnemonic == "ldr" {
                Instruction::LdrZa { ws, offset, rn }
            } else {
                Instruction::StrZa { ws, offset, rn }
            })
        }

        _ => p.err(format!("unknown mnemonic `{mnemonic}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(line: &str) {
        let inst = parse_instruction(line).unwrap();
        assert_eq!(format_instruction(&inst), line);
    }

    #[test]
    fn canonical_spellings_round_trip() {
        for line in [
            "ret",
            "smstart",
            "movz x0, #240",
            "movz w7, #4660, lsl #16",
            "movk x9, #65535, lsl #48",
            "add w12, w12, #4",
            "sub x17, x2, #31, lsl #12",
            "add x4, x2, x30",
            "cbnz x8, #-36",
            "fmla v0.4s, v30.4s, v31.4s",
            "fmla v3.2d, v1.2d, v2.2d",
            "ptrue p5.s",
            "ptrue pn9.s",
            "whilelt p2.s, x13, x14",
            "whilelt pn10.s, x13, x14, vlx4",
            "fmopa za0.s, p1/m, p0/m, z2.s, z0.s",
            "fmopa za7.d, p7/m, p6/m, z30.d, z31.d",
            "ld1w { z0.s }, p0/z, [x0]",
            "ld1w { z0.s, z1.s }, pn8/z, [x0]",
            "ld1w { z12.s - z15.s }, pn10/z, [x2, #28, mul vl]",
            "st1w { z26.s, z27.s }, pn14, [x3, #-10, mul vl]",
            "mov za0h.s[w12, 0:3], { z0.s - z3.s }",
            "mov za3v.s[w14, 0:1], { z28.s, z29.s }",
            "mov { z30.s, z31.s }, za0h.s[w12, 2:3]",
            "mov za0h.s[w12, 3], p7/m, z31.s",
            "mov z9.s, p5/m, za2v.s[w14, 3]",
            "ldr za[w12, 5], [x3, #5, mul vl]",
            "str za[w12, 0], [x0]",
        ] {
            roundtrip(line);
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for line in [
            "",
            "bogus x0",
            "movz x31, #0",
            "add x0, x0",
            "fmla v0.4s, v1.2d, v2.4s",
            "ld1w { z0.s, z2.s }, pn8/z, [x0]",
            "ld1w { z0.s - z2.s }, pn8/z, [x0]",
            "ld1w { z0.s }, pn8/z, [x0]",
            "ld1w { z0.s, z1.s }, p0/z, [x0]",
            "mov za0h.s[w12, 0:3], { z0.s, z1.s }",
            "mov za0h.s[x12, 0], p0/m, z0.s",
            "ldr za[w12, 3], [x0, #4, mul vl]",
            "ldr za[w11, 0], [x0]",
            "whilelt pn8.s, x1, x2",
            "ptrue pn8.d",
        ] {
            assert!(parse_instruction(line).is_err(), "line `{line}` should not parse");
        }
    }
}
