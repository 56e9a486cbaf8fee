#pragma once

// Process-level allocator tuning. Training allocates and frees matrices of tens
// of megabytes every iteration; with glibc defaults each one is a fresh mmap and
// every page faults again on first touch. Keeping freed blocks in the heap
// removes that cost. Call once at program start; a no-op elsewhere.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dualcap {

inline void keep_heap_resident() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace dualcap
