#pragma once

#include <cstddef>
#include <functional>

namespace sfim {

// Kernel thread budget: hardware concurrency, capped by SFIM_THREADS.
std::size_t kernel_threads();

// Overrides the budget for kernels issued from the calling thread
// (0 restores the process default). Used by trainers running side by side.
void set_thread_kernel_threads(std::size_t n);

// Runs fn(begin, end) over a partition of [0, n). Each index is owned by
// exactly one worker, so kernels that write disjoint outputs per index stay
// deterministic regardless of the thread count.
void parallel_for(std::size_t n, std::size_t min_grain, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace sfim
