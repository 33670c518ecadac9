//! Process-level tuning.

/// Keeps freed buffers in the heap instead of returning them to the kernel.
///
/// Training allocates and drops activation tensors of hundreds of megabytes
/// every batch; with glibc's default thresholds each one is a fresh `mmap`
/// whose pages fault in again on first touch. Call once at startup.
pub fn retain_freed_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator parameters.
    unsafe {
        libc::mallopt(libc::M_MMAP_MAX, 0);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
