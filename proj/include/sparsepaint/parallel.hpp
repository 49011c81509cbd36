#pragma once

#include <cstdint>
#include <functional>

namespace sparsepaint {

// Worker cap: SPARSEPAINT_THREADS env var, else hardware concurrency.
int thread_cap();

// Overrides the env-derived cap for this process; n <= 0 restores auto.
void set_thread_cap(int n);

// Runs fn over [0, n) split into contiguous chunks, one per worker.
// Every index is processed exactly once, and per-chunk iteration order is
// ascending, so results are bit-identical for any worker count as long as
// distinct indices never write the same accumulator.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace sparsepaint
