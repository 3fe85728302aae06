#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace flowinv {

// Worker cap: FLOWINV_THREADS env var, overridable at runtime; defaults to
// hardware concurrency. Work is split into contiguous index chunks, and every
// element is computed by exactly one worker with the same inner order no
// matter the cap, so results are identical for any thread count.
inline int& thread_cap_storage() {
    static int cap = [] {
        if (const char* env = std::getenv("FLOWINV_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }();
    return cap;
}

inline int thread_cap() { return thread_cap_storage(); }
inline void set_thread_cap(int cap) { thread_cap_storage() = std::max(1, cap); }

template <class F>
void parallel_for(std::size_t n, F&& fn) {
    int workers = std::min<std::size_t>(static_cast<std::size_t>(thread_cap()), n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t begin = static_cast<std::size_t>(w) * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace flowinv
