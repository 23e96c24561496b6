#pragma once

#include <cstddef>
#include <functional>

namespace v2v {

/// Upper bound on worker threads used inside layer kernels and batch assembly.
/// 1 (the default) runs everything on the calling thread.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Process-wide setup for long runs: caps threads and keeps freed large
/// blocks in the heap (glibc) so per-step tensors do not page-fault afresh.
void configure_runtime(std::size_t threads);

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks; callers
/// that reduce must do so in index order after the call to stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace v2v
