#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hypo {

/// Pairwise (cascade) summation of values[lo, hi).
template <class T>
T pairwise_sum(const T* values, std::size_t n) {
    if (n == 0) return T(0.0);
    if (n <= 8) {
        T s = values[0];
        for (std::size_t i = 1; i < n; ++i) s = s + values[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

template <class T>
T pairwise_sum(const std::vector<T>& values) {
    return pairwise_sum(values.data(), values.size());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are rethrown (first one wins).
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Block size of the deterministic reduction; fixed so the result never depends on worker count.
inline constexpr std::size_t kReductionBlock = 512;

/// Sums term(i) over [0, n) with a fixed block/pairwise tree, optionally on several threads.
template <class T, class Term>
T deterministic_sum(std::size_t n, std::size_t workers, Term&& term) {
    const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<T> block_sums(n_blocks, T(0.0));
    parallel_for(n_blocks, workers, [&](std::size_t b) {
        const std::size_t lo = b * kReductionBlock;
        const std::size_t hi = std::min(n, lo + kReductionBlock);
        std::vector<T> local;
        local.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) local.push_back(term(i));
        block_sums[b] = pairwise_sum(local);
    });
    return pairwise_sum(block_sums);
}

}  // namespace hypo
