#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gplab {

// Deterministic random source. Every random quantity in the project flows
// through this class so results depend only on the configured seed.
//
// The generator is std::mt19937_64. Derived draws are implemented here
// instead of through std::*_distribution, so the stream is fully specified
// by this file and does not vary across standard libraries:
//
//   uniform()       (next_u64() >> 11) * 2^-53, in [0, 1)
//   uniform_int(n)  rejection-sampled next_u64() % n (unbiased)
//   normal()        Marsaglia polar method; the second value is cached and
//                   returned by the following call
//   shuffle(v)      Fisher-Yates, i = n-1..1, j = uniform_int(i + 1)
//
// substream(name) derives an independent child generator from the parent
// *seed* (not from the stream position) as mt19937_64 seeded with
// splitmix64(parent_seed ^ fnv1a64(name)). Drawing from one substream never
// shifts another, so e.g. enabling gradient noise does not change batch
// order or weight initialization.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    Rng substream(std::string_view name) const;

    std::uint64_t next_u64() { return gen_(); }
    double uniform();
    double uniform(double lo, double hi);
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();
    double normal(double mean, double stddev);

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace gplab
