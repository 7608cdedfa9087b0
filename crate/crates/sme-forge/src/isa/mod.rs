//! Symbolic instruction model for the AArch64 subset used by the kernels.
//!
//! The subset covers base data processing (MOVZ/MOVK, ADD/SUB, CBNZ, RET),
//! the Neon FMLA vector form, and the streaming-SVE/SME instructions the
//! generated kernels need: PTRUE and WHILELT (regular and predicate-as-
//! counter), contiguous single- and multi-vector LD1W/ST1W, FMOPA, MOVA
//! tile moves, LDR/STR ZA, and SMSTART/SMSTOP.
//!
//! [`Instruction`] is the symbolic form. [`encode`] lowers one instruction
//! to a 32-bit word and [`decode`] recovers it; [`text::format_instruction`]
//! and [`text::parse_instruction`] convert to and from the canonical
//! assembly spelling. Every supported form round-trips through both
//! representations, pinned by the committed golden fixture.

mod decode;
mod encode;
pub mod text;

use std::collections::HashMap;
use std::fmt;

pub use decode::decode;
pub use encode::encode;

/// One 32-bit AArch64 instruction word. Serialized little-endian.
pub type EncodedWord = u32;

/// Register classes representable in the subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegClass {
    /// General-purpose register x0-x30 (w views share the index).
    X,
    /// Neon vector register v0-v31.
    V,
    /// Scalable vector register z0-z31.
    Z,
    /// Predicate register p0-p15.
    P,
    /// Predicate-as-counter register pn8-pn15.
    Pn,
    /// ZA tile za0-za7 (element size decides how many are addressable).
    ZaTile,
}

impl RegClass {
    fn index_range(self) -> std::ops::RangeInclusive<u8> {
        match self {
            RegClass::X => 0..=30,
            RegClass::V | RegClass::Z => 0..=31,
            RegClass::P => 0..=15,
            RegClass::Pn => 8..=15,
            RegClass::ZaTile => 0..=7,
        }
    }
}

/// A validated register reference: class plus index.
///
/// Constructors panic on indices outside the class range (programmer
/// error); [`RegisterRef::try_new`] is the fallible form used when the
/// index comes from untrusted input (parser, decoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegisterRef {
    class: RegClass,
    index: u8,
}

impl RegisterRef {
    pub fn try_new(class: RegClass, index: u8) -> Option<Self> {
        if class.index_range().contains(&index) {
            Some(Self { class, index })
        } else {
            None
        }
    }

    pub const fn x(index: u8) -> Self {
        assert!(index <= 30, "x register index out of range");
        Self { class: RegClass::X, index }
    }

    pub const fn v(index: u8) -> Self {
        assert!(index <= 31, "v register index out of range");
        Self { class: RegClass::V, index }
    }

    pub const fn z(index: u8) -> Self {
        assert!(index <= 31, "z register index out of range");
        Self { class: RegClass::Z, index }
    }

    pub const fn p(index: u8) -> Self {
        assert!(index <= 15, "p register index out of range");
        Self { class: RegClass::P, index }
    }

    pub const fn pn(index: u8) -> Self {
        assert!(index >= 8 && index <= 15, "pn register index out of range");
        Self { class: RegClass::Pn, index }
    }

    pub const fn za(index: u8) -> Self {
        assert!(index <= 7, "za tile index out of range");
        Self { class: RegClass::ZaTile, index }
    }

    pub fn class(self) -> RegClass {
        self.class
    }

    pub fn index(self) -> u8 {
        self.index
    }
}

/// Element size for predicate-generating instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Esize {
    B,
    H,
    S,
    D,
}

impl Esize {
    pub fn bytes(self) -> usize {
        match self {
            Esize::B => 1,
            Esize::H => 2,
            Esize::S => 4,
            Esize::D => 8,
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Esize::B => 0,
            Esize::H => 1,
            Esize::S => 2,
            Esize::D => 3,
        }
    }

    pub(crate) fn from_code(code: u32) -> Self {
        match code & 3 {
            0 => Esize::B,
            1 => Esize::H,
            2 => Esize::S,
            _ => Esize::D,
        }
    }

    pub fn suffix(self) -> char {
        match self {
            Esize::B => 'b',
            Esize::H => 'h',
            Esize::S => 's',
            Esize::D => 'd',
        }
    }
}

/// Vector-group width for multi-vector loads/stores and MOVA groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VecGroup {
    Two,
    Four,
}

impl VecGroup {
    pub fn count(self) -> usize {
        match self {
            VecGroup::Two => 2,
            VecGroup::Four => 4,
        }
    }
}

/// Symbolic label used inside an [`AsmItem`] stream. Resolved by
/// [`assemble`]; carries no meaning outside the stream that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label(pub(crate) u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// Branch destination: a symbolic label, or a resolved PC-relative byte
/// offset (from the branch instruction itself, word-aligned).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchTarget {
    Label(Label),
    Resolved(i32),
}

/// One instruction of the supported subset.
///
/// `wide` selects the 64-bit (x) general-register form; `fp64` selects the
/// double-precision vector/tile form. Memory offsets named `imm_vl` are in
/// vector-length units, matching the `mul vl` assembly spelling. All MOVA
/// and LDR/STR ZA forms are 32-bit-element (`.s`); `ws` is the w12-w15
/// slice-select register and `offset` the in-granule slice immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    Ret,
    Smstart,
    Smstop,
    Movz { wide: bool, rd: RegisterRef, imm16: u16, hw: u8 },
    Movk { wide: bool, rd: RegisterRef, imm16: u16, hw: u8 },
    AddImm { wide: bool, rd: RegisterRef, rn: RegisterRef, imm12: u16, lsl12: bool },
    SubImm { wide: bool, rd: RegisterRef, rn: RegisterRef, imm12: u16, lsl12: bool },
    AddReg { wide: bool, rd: RegisterRef, rn: RegisterRef, rm: RegisterRef },
    SubReg { wide: bool, rd: RegisterRef, rn: RegisterRef, rm: RegisterRef },
    Cbnz { rt: RegisterRef, target: BranchTarget },
    FmlaVec { fp64: bool, vd: RegisterRef, vn: RegisterRef, vm: RegisterRef },
    Ptrue { pd: RegisterRef, esize: Esize },
    Whilelt { pd: RegisterRef, esize: Esize, rn: RegisterRef, rm: RegisterRef },
    PtrueCnt { pnd: RegisterRef },
    WhileltCnt { pnd: RegisterRef, rn: RegisterRef, rm: RegisterRef, nvec: VecGroup },
    Fmopa { fp64: bool, zad: RegisterRef, pn: RegisterRef, pm: RegisterRef, zn: RegisterRef, zm: RegisterRef },
    Ld1w { zt: RegisterRef, pg: RegisterRef, rn: RegisterRef, imm_vl: i8 },
    St1w { zt: RegisterRef, pg: RegisterRef, rn: RegisterRef, imm_vl: i8 },
    Ld1wMulti { zt: RegisterRef, nvec: VecGroup, png: RegisterRef, rn: RegisterRef, imm_vl: i8 },
    St1wMulti { zt: RegisterRef, nvec: VecGroup, png: RegisterRef, rn: RegisterRef, imm_vl: i8 },
    /// `mov za<t><h|v>.s[ws, o:o+n-1], { z.. }` — vectors into tile slices.
    MovaToTile { zad: RegisterRef, vertical: bool, ws: RegisterRef, offset: u8, nvec: VecGroup, zt: RegisterRef },
    /// `mov { z.. }, za<t><h|v>.s[ws, o:o+n-1]` — tile slices into vectors.
    MovaFromTile { zt: RegisterRef, nvec: VecGroup, zad: RegisterRef, vertical: bool, ws: RegisterRef, offset: u8 },
    /// `mov za<t><h|v>.s[ws, o], pg/m, zn.s` — one slice, merging.
    MovaToTileP { zad: RegisterRef, vertical: bool, ws: RegisterRef, offset: u8, pg: RegisterRef, zn: RegisterRef },
    /// `mov zd.s, pg/m, za<t><h|v>.s[ws, o]` — one slice, merging.
    MovaFromTileP { zd: RegisterRef, pg: RegisterRef, zad: RegisterRef, vertical: bool, ws: RegisterRef, offset: u8 },
    /// `ldr za[ws, o], [xn, #o, mul vl]` — the immediate selects both the
    /// ZA array vector (relative to `ws`) and the memory offset.
    LdrZa { ws: RegisterRef, offset: u8, rn: RegisterRef },
    StrZa { ws: RegisterRef, offset: u8, rn: RegisterRef },
}

/// Errors from [`encode`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("invalid operand: {0}")]
    InvalidOperand(String),
    #[error("immediate out of range: {0}")]
    InvalidImmediate(String),
    #[error("unsupported form: {0}")]
    UnsupportedForm(String),
}

/// Errors from [`decode`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unknown encoding {0:#010x}")]
    UnknownEncoding(EncodedWord),
    #[error("unsupported form: {what} ({word:#010x})")]
    UnsupportedForm { word: EncodedWord, what: &'static str },
}

/// Errors from [`assemble`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssembleError {
    #[error("item {index}: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error("unresolved label {0}")]
    UnresolvedLabel(Label),
    #[error("label {0} bound more than once")]
    DuplicateLabel(Label),
    #[error("branch at item {index} out of range ({offset_bytes} bytes)")]
    BranchOutOfRange { index: usize, offset_bytes: i64 },
}

/// One element of an assembly stream: a label binding or an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsmItem {
    Label(Label),
    Instr(Instruction),
}

/// Resolves labels and encodes an item stream into instruction words.
///
/// Length-preserving: the output has exactly one word per `Instr` item, in
/// order. Labels may be referenced before or after their binding.
pub fn assemble(items: &[AsmItem]) -> Result<Vec<EncodedWord>, AssembleError> {
    let mut bound: HashMap<u32, usize> = HashMap::new();
    let mut word_idx = 0usize;
    for item in items {
        match item {
            AsmItem::Label(l) => {
                if bound.insert(l.0, word_idx).is_some() {
                    return Err(AssembleError::DuplicateLabel(*l));
                }
            }
            AsmItem::Instr(_) => word_idx += 1,
        }
    }

    let mut words = Vec::with_capacity(word_idx);
    let mut cur = 0usize;
    for (index, item) in items.iter().enumerate() {
        let inst = match item {
            AsmItem::Label(_) => continue,
            AsmItem::Instr(i) => i,
        };
        let resolved = match inst {
            Instruction::Cbnz { rt, target: BranchTarget::Label(l) } => {
                let dest = *bound.get(&l.0).ok_or(AssembleError::UnresolvedLabel(*l))?;
                let offset_bytes = (dest as i64 - cur as i64) * 4;
                if !(-(1 << 20)..=(1 << 20) - 4).contains(&offset_bytes) {
                    return Err(AssembleError::BranchOutOfRange { index, offset_bytes });
                }
                Instruction::Cbnz { rt: *rt, target: BranchTarget::Resolved(offset_bytes as i32) }
            }
            other => *other,
        };
        words.push(encode(&resolved).map_err(|source| AssembleError::Encode { index, source })?);
        cur += 1;
    }
    Ok(words)
}

/// Incremental builder over [`AsmItem`] streams with fresh-label supply.
#[derive(Debug, Default)]
pub struct Program {
    items: Vec<AsmItem>,
    next_label: u32,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh_label(&mut self) -> Label {
        let l = Label(self.next_label);
        self.next_label += 1;
        l
    }

    /// Binds `label` at the current position.
    pub fn bind(&mut self, label: Label) {
        self.items.push(AsmItem::Label(label));
    }

    pub fn push(&mut self, inst: Instruction) {
        self.items.push(AsmItem::Instr(inst));
    }

    pub fn items(&self) -> &[AsmItem] {
        &self.items
    }

    /// Number of instruction words emitted so far (labels excluded).
    pub fn len_words(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, AsmItem::Instr(_))).count()
    }

    pub fn assemble(&self) -> Result<Vec<EncodedWord>, AssembleError> {
        assemble(&self.items)
    }
}
