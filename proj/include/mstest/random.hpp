#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace mstest {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Purpose tags used to derive independent substreams from one master seed.
enum class Stream : std::uint64_t {
    Plain = 1,
    Tilted = 2,
    Evaluate = 3,
    SingleRun = 4,
    Sweep = 5,
    Robustness = 6,
    Test = 7,
};

/// Hash (seed, purpose, indices...) into a substream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::initializer_list<std::uint64_t> idx = {}) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag)));
    for (auto i : idx) h = splitmix64(h ^ splitmix64(i + 0x632BE59BD9B4E019ULL));
    return h;
}

using Rng = std::mt19937_64;

/// Draws standard normals; one per replication, never shared.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : rng_(seed) {}
    double normal() { return normal_(rng_); }
    double uniform() { return uniform_(rng_); }
    Rng& engine() { return rng_; }

private:
    Rng rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline unsigned& thread_limit() {
    static unsigned n = 1;
    return n;
}

inline void set_threads(unsigned n) { thread_limit() = std::max(1u, n); }

/// Runs body(i) for i in [0, count). Work is split into contiguous blocks; callers write
/// results by index, so the outcome does not depend on the thread count.
template <class F>
void parallel_for(std::size_t count, F&& body) {
    const unsigned threads = std::min<std::size_t>(thread_limit(), std::max<std::size_t>(1, count / 64));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::size_t block = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = t * block;
        const std::size_t hi = std::min(count, lo + block);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mstest
