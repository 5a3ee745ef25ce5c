#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace robin_homog::detail {

/// Runs body(i) for i in [0, n) on `threads` workers. Work is handed out in
/// fixed chunks; each index is processed exactly once, so results written by
/// index do not depend on the worker count. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, int threads, const Body& body, std::size_t chunk = 64) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, (n + chunk - 1) / chunk));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        while (!failed.load()) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n) break;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace robin_homog::detail
