#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace petseg {

// Keeps freed training buffers in the heap instead of returning them to the
// kernel, so per-step tensors of several MB are not page-faulted in again.
// Process-wide; call once from main.
inline void keep_heap_resident() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace petseg
