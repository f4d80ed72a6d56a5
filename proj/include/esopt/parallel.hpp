#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace esopt {

/// Worker cap shared by all parallel loops; 0 means hardware concurrency.
inline unsigned& thread_cap() {
    static unsigned cap = 0;
    return cap;
}

inline unsigned worker_count(std::size_t work_items) {
    unsigned n = thread_cap() ? thread_cap() : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(work_items, 1)));
}

/// Runs body(i) for i in [0, n) on contiguous chunks. Iterations must write
/// disjoint memory; the result never depends on the worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = worker_count(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace esopt
