#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mlchains {

// Worker count comes from the MLCHAINS_WORKERS environment variable,
// falling back to the hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("MLCHAINS_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Runs fn(i) for i in [0, n). Work items must be independent and store their
// results by index, so the outcome cannot depend on scheduling. Nested calls
// degrade to serial execution instead of oversubscribing.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int workers = worker_count();
    if (workers <= 1 || n == 1 || detail::in_parallel_region) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};

    auto run = [&] {
        detail::in_parallel_region = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load(std::memory_order_relaxed)) break;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                break;
            }
        }
        detail::in_parallel_region = false;
    };

    std::vector<std::thread> pool;
    const std::size_t spawn = std::min<std::size_t>(static_cast<std::size_t>(workers), n) - 1;
    pool.reserve(spawn);
    for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mlchains
