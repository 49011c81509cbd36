#include "sparsepaint/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace sparsepaint {

namespace {

std::atomic<int> g_cap_override{0};

int env_cap() {
    static const int cached = [] {
        if (const char* v = std::getenv("SPARSEPAINT_THREADS")) {
            const int n = std::atoi(v);
            if (n > 0) return n;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }();
    return cached;
}

} // namespace

int thread_cap() {
    const int o = g_cap_override.load(std::memory_order_relaxed);
    return o > 0 ? o : env_cap();
}

void set_thread_cap(int n) { g_cap_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_cap(), n));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(0, std::min<std::int64_t>(n, chunk));
    for (auto& th : threads) th.join();
}

} // namespace sparsepaint
