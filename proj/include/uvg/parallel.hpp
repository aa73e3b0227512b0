// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace uvg {

/// Runs fn(chunk) for chunk in [0, n) on up to hardware_concurrency threads.
/// Chunks must write disjoint state; callers reduce chunk results in chunk
/// order, which keeps every result independent of scheduling.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn &&fn) {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(hw, n);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n; ++c) {
            fn(c);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t c = next++; c < n; c = next++) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            pool.emplace_back(run);
        }
        run();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace uvg
