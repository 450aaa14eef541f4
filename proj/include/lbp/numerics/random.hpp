#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lbp::num {

// Counter-based random stream built on Philox4x32-10. A stream is fully
// determined by (root seed, path of split indices); streams with distinct
// paths use distinct Philox keys, which makes replica-level parallelism
// reproducible regardless of execution order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed)
        : root_seed_(seed), key_(mix64(seed ^ 0x5bf0f3a2f0a7c1e3ULL)) {}

    // Deterministic child stream; child counters restart at zero.
    RandomStream split(std::uint64_t index) const {
        RandomStream child(*this);
        child.path_.push_back(index);
        child.key_ = mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL));
        child.counter_ = 0;
        child.buf_fill_ = 0;
        child.buf_pos_ = 0;
        child.have_spare_normal_ = false;
        return child;
    }

    std::uint64_t root_seed() const { return root_seed_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

    std::uint64_t next_u64() {
        if (buf_pos_ >= buf_fill_) refill();
        return buf_[buf_pos_++];
    }

    // Uniform on (0,1]; never returns 0 so log() is always safe.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double exponential(double rate) {
        return -std::log(uniform01()) / rate;
    }

    double normal() {
        if (have_spare_normal_) {
            have_spare_normal_ = false;
            return spare_normal_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_normal_ = rad * std::sin(ang);
        have_spare_normal_ = true;
        return rad * std::cos(ang);
    }

    // Index into {0..n-1} proportional to weights; total must be the sum.
    std::size_t pick(const std::vector<double>& weights, double total) {
        double u = uniform01() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u <= 0.0) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

private:
    static std::uint64_t mix64(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    void refill() {
        std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
        std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
        std::uint32_t c2 = 0x2e8487a1u;
        std::uint32_t c3 = 0x714ce563u;
        std::uint32_t k0 = static_cast<std::uint32_t>(key_);
        std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = 0xD2511F53ULL * c0;
            const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
        buf_[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
        buf_fill_ = 2;
        buf_pos_ = 0;
        ++counter_;
    }

    std::uint64_t root_seed_ = 0;
    std::vector<std::uint64_t> path_;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    std::uint64_t buf_[2] = {0, 0};
    int buf_fill_ = 0;
    int buf_pos_ = 0;
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

inline RandomStream stream_split(const RandomStream& parent, std::uint64_t index) {
    return parent.split(index);
}

} // namespace lbp::num
