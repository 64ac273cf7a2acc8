#pragma once

#include <functional>

namespace pmcr {

// Kernel-internal worker count. 1 (the default) keeps every reduction on a
// single thread and therefore bitwise reproducible; larger values split work
// so that each output element is still produced by exactly one thread.
void set_num_threads(int n);
int num_threads();

// Runs fn(job) for every job in [0, jobs). Jobs are split into contiguous
// chunks across the configured worker count.
void parallel_for(int jobs, const std::function<void(int)>& fn);

}  // namespace pmcr
