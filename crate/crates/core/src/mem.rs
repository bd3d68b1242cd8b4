//! Large random-access tables (walk indexes, per-round arrays) are touched
//! once per delivery at effectively random positions.

/// Asks the kernel for transparent huge pages under `v`. Best effort.
#[cfg(target_os = "linux")]
pub(crate) fn advise_huge<T>(v: &[T]) {
    const PAGE: usize = 4096;
    const MIN: usize = 2 << 20;
    let bytes = std::mem::size_of_val(v);
    if bytes < MIN {
        return;
    }
    let start = (v.as_ptr() as usize).next_multiple_of(PAGE);
    let end = (v.as_ptr() as usize + bytes) & !(PAGE - 1);
    if end > start {
        // SAFETY: the range lies inside the live allocation of `v`, and
        // MADV_HUGEPAGE only changes how it is backed, never its contents.
        unsafe {
            libc::madvise(start as *mut libc::c_void, end - start, libc::MADV_HUGEPAGE);
        }
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn advise_huge<T>(_: &[T]) {}

/// Hints that `x` will be read soon.
#[inline]
pub(crate) fn prefetch<T>(x: &T) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetching is a hint and never faults, and SSE is part of the
    // x86_64 baseline.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        _mm_prefetch::<_MM_HINT_T0>(x as *const T as *const i8);
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = x;
}
