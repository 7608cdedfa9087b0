//! Functional emulator for the architectural state the kernels touch.
//!
//! Models values and architectural effects only — no timing, no pipeline.
//! State covers the general registers, the streaming vector and predicate
//! registers, the ZA array, the two mode bits (streaming, ZA enabled), and
//! a sparse byte-granular memory. NZCV is not modeled; nothing in the
//! subset reads it. Reads of unwritten memory return zero. Every byte
//! address an instruction loads or stores is logged, so verification can
//! prove a kernel touched nothing outside its operand regions.
//!
//! Mode rules enforced per instruction: Neon FMLA faults in streaming
//! mode; streaming-SVE instructions fault outside it; FMOPA and MOVA
//! additionally require ZA; LDR/STR ZA require ZA. SMSTART and SMSTOP
//! zero the affected state on mode transitions, as the architecture
//! specifies.

mod exec;

use std::collections::{HashMap, HashSet};

use crate::isa::{DecodeError, EncodedWord, Esize};

/// Streaming vector lengths the model accepts, in bits.
pub const VALID_SVL_BITS: [u32; 5] = [128, 256, 512, 1024, 2048];

/// Construction-time errors.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("invalid streaming vector length {0} (must be a power of two in 128..=2048)")]
    InvalidSvl(u32),
    #[error("tile index {tile} out of range for {lanes}-lane element size")]
    InvalidTile { tile: usize, lanes: usize },
}

/// Execution faults.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("pc {pc}: {source}")]
    Decode { pc: usize, source: DecodeError },
    #[error("pc {pc}: mode fault: {reason}")]
    ModeFault { pc: usize, reason: &'static str },
    #[error("pc {pc} outside the kernel")]
    PcOutOfBounds { pc: i64 },
    #[error("step budget of {max_steps} exhausted")]
    StepBudgetExceeded { max_steps: u64 },
    #[error("{n} arguments exceed the 8 argument registers")]
    TooManyArgs { n: usize },
}

/// Outcome of one [`MachineState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Continue,
    /// RET executed; carries the x0 return value.
    Halt { x0: u64 },
}

/// Outcome of [`MachineState::run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub x0: u64,
    pub steps: u64,
}

/// The predicate-as-counter view of a predicate register's low 16 bits.
///
/// Internal layout (a model convention; the architecture leaves the raw
/// format opaque to software that uses it correctly): bit 0 inverts the
/// sense, bits 2:1 hold the element-size code, bits 15:3 the element
/// count. `invert=0` activates elements below the count; `invert=1`
/// activates elements at or above it, so all-true is `invert=1, count=0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterPred(pub u16);

impl CounterPred {
    pub fn all_true(esize: Esize) -> Self {
        Self(1 | (esize.code() as u16) << 1)
    }

    pub fn first_n(esize: Esize, n: u16) -> Self {
        Self((esize.code() as u16) << 1 | n << 3)
    }

    pub fn is_active(self, elem: usize) -> bool {
        let invert = self.0 & 1 != 0;
        let count = usize::from(self.0 >> 3);
        (elem < count) != invert
    }
}

/// Complete architectural state of one emulated core.
#[derive(Debug, Clone)]
pub struct MachineState {
    svl_bytes: usize,
    streaming: bool,
    za_enabled: bool,
    x: [u64; 31],
    pc: usize,
    /// 32 vector registers, `svl_bytes` each, concatenated.
    z: Vec<u8>,
    /// 16 predicate registers, one bit per vector byte, concatenated.
    p: Vec<u8>,
    /// ZA array: `svl_bytes` array vectors of `svl_bytes` bytes.
    za: Vec<u8>,
    mem: HashMap<u64, u8>,
    loaded: HashSet<u64>,
    stored: HashSet<u64>,
}

impl MachineState {
    /// Fresh state: everything zero, both modes off.
    pub fn new(svl_bits: u32) -> Result<Self, MachineError> {
        if !VALID_SVL_BITS.contains(&svl_bits) {
            return Err(MachineError::InvalidSvl(svl_bits));
        }
        let svl_bytes = svl_bits as usize / 8;
        Ok(Self {
            svl_bytes,
            streaming: false,
            za_enabled: false,
            x: [0; 31],
            pc: 0,
            z: vec![0; 32 * svl_bytes],
            p: vec![0; 16 * svl_bytes / 8],
            za: vec![0; svl_bytes * svl_bytes],
            mem: HashMap::new(),
            loaded: HashSet::new(),
            stored: HashSet::new(),
        })
    }

    pub fn svl_bytes(&self) -> usize {
        self.svl_bytes
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn streaming(&self) -> bool {
        self.streaming
    }

    pub fn za_enabled(&self) -> bool {
        self.za_enabled
    }

    pub fn x(&self, index: usize) -> u64 {
        self.x[index]
    }

    pub fn set_x(&mut self, index: usize, value: u64) {
        self.x[index] = value;
    }

    /// Sets the mode bits directly, without the architectural zeroing a
    /// real SMSTART/SMSTOP transition performs. Test and bring-up helper
    /// for kernels whose contract assumes a mode is already active.
    pub fn force_modes(&mut self, streaming: bool, za_enabled: bool) {
        self.streaming = streaming;
        self.za_enabled = za_enabled;
    }

    pub fn z_bytes(&self, index: usize) -> &[u8] {
        &self.z[index * self.svl_bytes..(index + 1) * self.svl_bytes]
    }

    pub fn set_z_bytes(&mut self, index: usize, bytes: &[u8]) {
        assert_eq!(bytes.len(), self.svl_bytes, "z register width");
        self.z[index * self.svl_bytes..(index + 1) * self.svl_bytes].copy_from_slice(bytes);
    }

    fn pred_bytes(&self) -> usize {
        self.svl_bytes / 8
    }

    pub fn p_bytes(&self, index: usize) -> &[u8] {
        let n = self.pred_bytes();
        &self.p[index * n..(index + 1) * n]
    }

    pub fn set_p_bytes(&mut self, index: usize, bytes: &[u8]) {
        let n = self.pred_bytes();
        assert_eq!(bytes.len(), n, "p register width");
        self.p[index * n..(index + 1) * n].copy_from_slice(bytes);
    }

    /// Predicate bit for one vector byte position.
    pub fn p_bit(&self, index: usize, byte_pos: usize) -> bool {
        let n = self.pred_bytes();
        self.p[index * n + byte_pos / 8] >> (byte_pos % 8) & 1 != 0
    }

    pub(crate) fn set_p_bit(&mut self, index: usize, byte_pos: usize, value: bool) {
        let n = self.pred_bytes();
        let b = &mut self.p[index * n + byte_pos / 8];
        if value {
            *b |= 1 << (byte_pos % 8);
        } else {
            *b &= !(1 << (byte_pos % 8));
        }
    }

    /// Lane activity of a regular predicate at the given element size.
    pub fn p_lane(&self, index: usize, lane: usize, esize: Esize) -> bool {
        self.p_bit(index, lane * esize.bytes())
    }

    /// The counter view of predicate register `index` (pn8-pn15 overlay
    /// p8-p15; the low 16 bits hold the counter).
    pub fn counter(&self, index: usize) -> CounterPred {
        let b = self.p_bytes(index);
        CounterPred(u16::from(b[0]) | u16::from(b[1]) << 8)
    }

    pub(crate) fn set_counter(&mut self, index: usize, c: CounterPred) {
        let n = self.pred_bytes();
        let base = index * n;
        self.p[base..base + n].fill(0);
        self.p[base] = (c.0 & 0xFF) as u8;
        self.p[base + 1] = (c.0 >> 8) as u8;
    }

    pub fn za_bytes(&self) -> &[u8] {
        &self.za
    }

    pub fn set_za_bytes(&mut self, bytes: &[u8]) {
        assert_eq!(bytes.len(), self.za.len(), "za width");
        self.za.copy_from_slice(bytes);
    }

    /// One ZA array vector (row of the byte-square), by index.
    pub fn za_vector(&self, index: usize) -> &[u8] {
        &self.za[index * self.svl_bytes..(index + 1) * self.svl_bytes]
    }

    /// Byte offset of tile element (row, col) for `ebytes`-wide elements.
    /// There are `ebytes` interleaved tiles at that element size, and
    /// horizontal slice `row` of tile `t` is array vector
    /// `row * ebytes + t`.
    fn tile_elem_offset(&self, tile: usize, row: usize, col: usize, ebytes: usize) -> usize {
        (row * ebytes + tile) * self.svl_bytes + col * ebytes
    }

    /// FP32 tile contents as rows of lanes.
    pub fn read_tile_f32(&self, tile: usize) -> Result<Vec<Vec<f32>>, MachineError> {
        let lanes = self.svl_bytes / 4;
        if tile >= 4 {
            return Err(MachineError::InvalidTile { tile, lanes });
        }
        Ok((0..lanes)
            .map(|r| {
                (0..lanes)
                    .map(|c| {
                        let o = self.tile_elem_offset(tile, r, c, 4);
                        f32::from_le_bytes(self.za[o..o + 4].try_into().unwrap())
                    })
                    .collect()
            })
            .collect())
    }

    /// FP64 tile contents as rows of lanes.
    pub fn read_tile_f64(&self, tile: usize) -> Result<Vec<Vec<f64>>, MachineError> {
        let lanes = self.svl_bytes / 8;
        if tile >= 8 {
            return Err(MachineError::InvalidTile { tile, lanes });
        }
        Ok((0..lanes)
            .map(|r| {
                (0..lanes)
                    .map(|c| {
                        let o = self.tile_elem_offset(tile, r, c, 8);
                        f64::from_le_bytes(self.za[o..o + 8].try_into().unwrap())
                    })
                    .collect()
            })
            .collect())
    }

    /// Host-side memory write (not logged as a kernel store).
    pub fn write_memory(&mut self, addr: u64, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.mem.insert(addr + i as u64, *b);
        }
    }

    /// Host-side memory read (not logged; unwritten bytes read zero).
    pub fn read_memory(&self, addr: u64, len: usize) -> Vec<u8> {
        (0..len).map(|i| self.mem.get(&(addr + i as u64)).copied().unwrap_or(0)).collect()
    }

    /// Byte addresses loaded by executed instructions.
    pub fn loaded_addrs(&self) -> &HashSet<u64> {
        &self.loaded
    }

    /// Byte addresses stored by executed instructions.
    pub fn stored_addrs(&self) -> &HashSet<u64> {
        &self.stored
    }

    pub(crate) fn load_byte(&mut self, addr: u64) -> u8 {
        self.loaded.insert(addr);
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    pub(crate) fn store_byte(&mut self, addr: u64, value: u8) {
        self.stored.insert(addr);
        self.mem.insert(addr, value);
    }

    pub(crate) fn zero_sve_state(&mut self) {
        self.z.fill(0);
        self.p.fill(0);
    }

    pub(crate) fn zero_za(&mut self) {
        self.za.fill(0);
    }

    /// Executes the instruction at `pc` within `kernel`.
    pub fn step(&mut self, kernel: &[EncodedWord]) -> Result<StepEvent, StepError> {
        exec::step(self, kernel)
    }

    /// Runs `kernel` from its first word until RET, with `args` placed in
    /// x0..x7. Architectural state other than pc and the argument
    /// registers is preserved on entry, so kernels can be chained; use a
    /// fresh [`MachineState`] for an isolated run.
    pub fn run(
        &mut self,
        kernel: &[EncodedWord],
        args: &[u64],
        max_steps: u64,
    ) -> Result<RunOutcome, StepError> {
        if args.len() > 8 {
            return Err(StepError::TooManyArgs { n: args.len() });
        }
        for (i, a) in args.iter().enumerate() {
            self.x[i] = *a;
        }
        self.pc = 0;
        let mut steps = 0u64;
        loop {
            if steps == max_steps {
                return Err(StepError::StepBudgetExceeded { max_steps });
            }
            match self.step(kernel)? {
                StepEvent::Continue => steps += 1,
                StepEvent::Halt { x0 } => return Ok(RunOutcome { x0, steps: steps + 1 }),
            }
        }
    }
}

#[cfg(test)]
mod tests;
