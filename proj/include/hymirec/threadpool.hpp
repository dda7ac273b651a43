#pragma once

#include <cstddef>
#include <functional>

namespace hymirec {

/// Global parallelism cap. 0 = hardware concurrency. Set from --threads or
/// the HYMIREC_THREADS env var.
void set_thread_cap(int n);
int thread_cap();

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks of `grain`.
/// Chunk boundaries depend only on n and grain, never on the worker count,
/// so writes into per-index slots are reproducible for any --threads value.
/// Reductions must go through per-chunk slots combined in chunk order by the
/// caller.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

std::size_t chunk_count(std::size_t n, std::size_t grain);

}  // namespace hymirec
