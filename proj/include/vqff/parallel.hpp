// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace vqff {

/// Process-wide worker count used by every parallel loop. 0 selects
/// std::thread::hardware_concurrency().
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(begin, end) over contiguous, disjoint slices of [0, n).
/// Callers must only write to outputs owned by their slice; results are then
/// independent of the number of threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Fixed-size chunking for reductions. Chunk boundaries depend only on n, so a
/// per-chunk partial followed by an in-order combine is schedule independent.
inline constexpr std::size_t kReductionChunk = 4096;

}  // namespace vqff
