//! Command implementations behind the `hetfuse` binary.

pub mod bench;
pub mod config;
pub mod degrade;
pub mod eval;
pub mod fuse;
pub mod pairs;
pub mod register;

pub use bench::cmd_bench;
pub use config::RunConfig;
pub use degrade::cmd_degrade;
pub use eval::cmd_eval;
pub use fuse::{cmd_fuse, FuseMethod};
pub use register::cmd_register;

/// Keeps large freed blocks inside the heap instead of returning them to the
/// kernel. Frame-sized buffers are reallocated for every pair, and with the
/// default glibc thresholds each one is a fresh mmap that page-faults on
/// first touch.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator tunables and is called before
    // any worker threads exist.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
