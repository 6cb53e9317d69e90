#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace asdcap {

/// Runs fn(i) for i in [0, n) on up to `max_workers` threads (0 = hardware
/// concurrency). The first exception thrown by any task is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t max_workers = 0)
{
    if (max_workers == 0) {
        max_workers = std::max(1u, std::thread::hardware_concurrency());
    }
    const std::size_t workers = std::min(max_workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                        next = n;
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace asdcap
