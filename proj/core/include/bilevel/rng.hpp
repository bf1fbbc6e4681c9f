#pragma once

#include <cstdint>
#include <random>

namespace bilevel {

/// Seeded random stream with portable output: the raw bits come from
/// std::mt19937_64 (whose sequence the standard pins down) and the
/// uniform/normal transforms are implemented here rather than delegated to
/// the implementation-defined std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws are consumed in pairs.
    double normal();

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bilevel
