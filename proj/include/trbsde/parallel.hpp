#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace trbsde {

/// Process-wide worker cap for per-trajectory loops. 1 forces sequential
/// execution. Results never depend on this value: every loop body writes
/// only to its own index and reductions happen afterwards in index order.
inline int& max_threads() {
    static int value = std::max(1u, std::thread::hardware_concurrency());
    return value;
}

inline void set_max_threads(int n) { max_threads() = std::max(1, n); }

template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
    const int count = end - begin;
    const int workers = std::min(max_threads(), count / 64);
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + w * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace trbsde
