#include "deblur/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace deblur {

namespace {

std::atomic<int> g_threads{0};

int resolve_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n > 0)
        return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace

void set_num_threads(int n) {
    g_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed);
}

int num_threads() {
    return resolve_threads();
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0)
        return;
    const int workers = std::min<std::int64_t>(resolve_threads(), n);
    // Forking is not worth it for small loops.
    if (workers <= 1 || n < 4) {
        fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back(fn, lo, hi);
    }
    fn(0, std::min<std::int64_t>(n, chunk));
    for (auto& th : pool)
        th.join();
}

} // namespace deblur
