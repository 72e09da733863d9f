#pragma once

#include <functional>

namespace diffmine {

// Runs fn(i) for i in [0, n) on up to n_threads workers. Work items must be
// independent; callers that need ordered output write into index i of a
// preallocated buffer and reduce sequentially afterwards, so results do not
// depend on the worker count. n_threads <= 1 runs inline. Exceptions from
// workers are captured and the first one (lowest index) is rethrown.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

// DIFFMINE_THREADS env var, else hardware concurrency, clamped to [1, 16].
int default_threads();

}  // namespace diffmine
