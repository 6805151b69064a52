#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace rbm {

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). Results must be written to preallocated per-index slots so
// scheduling cannot affect outcomes.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    if (n == 0) return;
    unsigned w = workers ? workers : std::thread::hardware_concurrency();
    if (w <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (w > n) w = static_cast<unsigned>(n);
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (unsigned t = 0; t < w; ++t) {
        threads.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += w) fn(i);
        });
    }
    for (auto& th : threads) th.join();
}

}  // namespace rbm
