#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace sgs {

// Global worker cap, set once from the CLI --threads flag.
inline int& max_threads() {
    static int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return n;
}

// Chunked parallel loop. Callers must only use it where iterations write
// disjoint outputs (or reduce per-iteration results in index order
// afterwards); under that discipline results are independent of the
// worker count, which keeps every pipeline stage bit-reproducible.
namespace detail {
inline bool& in_parallel_region() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    if (n <= 0) return;
    int workers = std::min<std::int64_t>(max_threads(), n);
    // Nested regions run serially; the outer loop already owns the cores.
    if (workers <= 1 || detail::in_parallel_region()) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto body = [&] {
        detail::in_parallel_region() = true;
        for (;;) {
            std::int64_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
        detail::in_parallel_region() = false;
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int t = 0; t < workers - 1; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
}

}  // namespace sgs
