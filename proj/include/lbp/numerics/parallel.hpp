#pragma once

#include <cstddef>
#include <thread>
#include <vector>

#include "lbp/numerics/random.hpp"

namespace lbp::num {

// Runs fn(replica_index, stream) for every replica on a worker pool; replica
// r always gets stream_split(root, r), so results are identical to a
// sequential run regardless of worker count.
template <class T, class Fn>
std::vector<T> parallel_replicas(long replicas, const RandomStream& root, Fn&& fn,
                                 int threads = 0) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw > 0 ? static_cast<int>(hw) : 1;
    }
    std::vector<T> out(static_cast<std::size_t>(replicas));
    if (threads == 1 || replicas < 4) {
        for (long r = 0; r < replicas; ++r) {
            RandomStream s = root.split(static_cast<std::uint64_t>(r));
            out[static_cast<std::size_t>(r)] = fn(r, s);
        }
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w]() {
            for (long r = w; r < replicas; r += threads) {
                RandomStream s = root.split(static_cast<std::uint64_t>(r));
                out[static_cast<std::size_t>(r)] = fn(r, s);
            }
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

} // namespace lbp::num
