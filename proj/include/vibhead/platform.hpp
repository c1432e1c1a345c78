#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace vibhead {

/// Keeps large activation buffers on the heap between batches instead of
/// returning them to the kernel; fresh mmap pages dominate the batchnorm cost
/// otherwise. Call once from main().
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace vibhead
