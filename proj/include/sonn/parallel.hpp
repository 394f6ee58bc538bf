#pragma once

#include <cstddef>
#include <functional>

namespace sonn {

// Worker cap for the process-wide pool. n <= 0 resets to the hardware
// concurrency. Results of every parallel operation in the library are
// bit-identical for any cap; only wall time changes.
void set_threads(int n);
int thread_count();

// Runs body(begin, end) over a contiguous partition of [0, n). Each index is
// visited exactly once by exactly one worker, and a caller-side reduction is
// never split across workers, which is what keeps results independent of the
// thread count. Nested calls run inline on the calling worker.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace sonn
