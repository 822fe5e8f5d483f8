#include "sfim/core/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace sfim {

namespace {

std::size_t process_default() {
    static const std::size_t value = [] {
        std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("SFIM_THREADS")) {
            try {
                const long cap = std::stol(env);
                if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
            } catch (...) {
                // malformed value: keep the hardware default
            }
        }
        return n;
    }();
    return value;
}

thread_local std::size_t t_override = 0;

} // namespace

std::size_t kernel_threads() { return t_override ? t_override : process_default(); }

void set_thread_kernel_threads(std::size_t n) { t_override = n; }

void parallel_for(std::size_t n, std::size_t min_grain, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t grain = std::max<std::size_t>(1, min_grain);
    const std::size_t workers = std::min(kernel_threads(), (n + grain - 1) / grain);
    if (workers <= 1) {
        if (n) fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, b, e] {
            set_thread_kernel_threads(1);
            fn(b, e);
        });
    }
    fn(0, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

} // namespace sfim
