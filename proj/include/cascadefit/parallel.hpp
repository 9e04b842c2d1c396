#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cascadefit {

inline constexpr const char* kThreadsEnv = "CASCADEFIT_THREADS";

inline unsigned thread_count() {
    if (const char* s = std::getenv(kThreadsEnv)) {
        try {
            long v = std::stol(s);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Evaluates f(0..n-1) on a pool of threads; results come back in index
// order, so any reduction over them is independent of the thread count.
// The exception of the lowest failing index is rethrown.
template <class F>
auto parallel_map(std::size_t n, F&& f, unsigned threads = thread_count()) {
    using R = decltype(f(std::size_t{0}));
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errs(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                out[i] = f(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    return out;
}

} // namespace cascadefit
