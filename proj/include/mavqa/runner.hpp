#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mavqa/errors.hpp"

namespace mavqa {

// Runs fn(0..count-1) on up to worker_limit threads. Items are independent;
// a set cancel flag stops new items from starting while in-flight items
// finish. The first exception thrown by fn is rethrown after all workers
// join.
inline void parallel_for(size_t count, int worker_limit, const std::function<void(size_t)>& fn,
                         const std::atomic<bool>* cancel = nullptr) {
    if (worker_limit < 1) throw PreconditionError("worker limit must be >= 1");
    if (count == 0) return;
    size_t workers = std::min<size_t>(static_cast<size_t>(worker_limit), count);

    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto body = [&] {
        for (;;) {
            if (cancel && cancel->load(std::memory_order_relaxed)) return;
            size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace mavqa
