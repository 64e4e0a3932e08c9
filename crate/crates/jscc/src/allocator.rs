//! Allocator settings for long training runs: freed activation buffers stay
//! in the heap instead of going back to the OS through `munmap`.

const KEEP_BYTES: i32 = 1 << 30;

/// Raises glibc's mmap and trim thresholds. Call once at startup; a no-op
/// on other platforms.
pub fn tune() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: `mallopt` only adjusts allocator tunables and is called before
    // any worker threads exist.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, KEEP_BYTES);
        libc::mallopt(libc::M_TRIM_THRESHOLD, KEEP_BYTES);
    }
}
