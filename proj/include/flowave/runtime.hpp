#pragma once

#include <climits>
#include <malloc.h>

namespace flowave {

/// Keeps large freed blocks in the allocator arena instead of returning them
/// to the OS; training re-allocates the same activation shapes every step.
inline void configure_allocator() {
#ifdef M_MMAP_THRESHOLD
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, INT_MAX);
#endif
}

}  // namespace flowave
