#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace perp {

inline constexpr std::uint64_t kChunkPaths = 1u << 16;

inline std::uint64_t chunk_count(std::uint64_t n_paths) {
    return (n_paths + kChunkPaths - 1) / kChunkPaths;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers store per-index results
// and merge them in index order, so output never depends on scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    std::size_t threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// Running sums for a mean and its standard error.
struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::uint64_t count = 0;

    void add(double w) {
        sum += w;
        sum_sq += w * w;
        ++count;
    }
    void merge(const Moments& o) {
        sum += o.sum;
        sum_sq += o.sum_sq;
        count += o.count;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    double variance() const;
    double std_error() const;
};

}  // namespace perp
