//! JIT code generation and functional emulation for AArch64 SME
//! small-matrix kernels.
//!
//! The crate has three layers:
//!
//! * [`isa`] — a symbolic model of the instruction subset the kernels use
//!   (base arithmetic and branches, Neon FMLA, streaming-SVE loads/stores,
//!   FMOPA outer products, ZA tile moves), with bidirectional conversion
//!   between symbolic form, 32-bit encodings, and canonical assembly text.
//! * [`planner`] / [`gemm`] / [`bench`] — emitters that build complete
//!   kernels out of that subset: FP32 GEMM kernels driven by a block
//!   planner, plus FLOP-throughput and ZA load/store bandwidth kernels.
//! * [`machine`] / [`runner`] — a functional (timing-free) emulator of the
//!   architectural state those kernels touch, and verification drivers that
//!   run generated kernels against independent references.
//!
//! Everything is host-neutral: kernels are generated and verified on any
//! platform. Only [`runner::native_execute`] (behind the `native` feature)
//! touches real hardware.

pub mod bench;
pub mod gemm;
pub mod isa;
pub mod machine;
pub mod planner;
pub mod runner;
