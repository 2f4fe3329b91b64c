#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace owc {

// Keeps large activation buffers on the heap between training steps instead
// of returning them to the kernel, which otherwise re-faults fresh pages on
// every allocation. No-op outside glibc.
inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace owc
