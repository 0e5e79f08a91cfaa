#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace polarmesh {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0};
    return cap;
}
}  // namespace detail

// Process-wide worker cap. 0 (the default) means hardware concurrency.
inline void set_thread_count(int n) { detail::thread_cap().store(n < 0 ? 0 : n); }

inline int thread_count() {
    int cap = detail::thread_cap().load();
    if (cap > 0) return cap;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, n) into contiguous chunks, one per worker. Each chunk writes
// only its own output slots, so results are identical for any worker count;
// reductions are done by the caller in index order afterwards.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
    int workers = thread_count();
    if (n == 0) return;
    if (workers <= 1 || n < 2 * static_cast<size_t>(workers)) {
        fn(size_t{0}, n);
        return;
    }
    size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        size_t begin = w * chunk;
        if (begin >= n) break;
        size_t end = std::min(begin + chunk, n);
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : threads) t.join();
}

}  // namespace polarmesh
