#pragma once

namespace pdda {

/// Keeps freed tensor buffers in the process heap instead of returning them
/// to the kernel after every graph. The autodiff tape allocates and frees the
/// same few hundred kilobyte-sized buffers per forward pass, and the default
/// glibc thresholds turn each of them into an mmap/munmap pair. No-op on
/// other C libraries.
void tune_allocator();

}  // namespace pdda
