// Counter-based splittable random streams. Every stochastic routine takes an
// explicit stream, so runs are reproducible and independent of call order
// elsewhere in the program.
#pragma once

#include <cstdint>
#include <string_view>

namespace gtmsm {

class RngStream {
public:
    RngStream() : key_(0) {}
    static RngStream root(uint64_t seed) { return RngStream(mix(0x67746d736d303173ull, seed)); }

    // Child stream; children with distinct lanes (or names) are independent.
    RngStream split(uint64_t lane) const { return RngStream(mix(key_, lane)); }
    RngStream split(std::string_view name) const { return RngStream(mix(key_, fnv1a(name))); }

    uint64_t next_u64() { return mix(key_, ctr_++); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal();

    // [0, n)
    int uniform_int(int n);

    // Knuth's multiplication method; adequate for the small rates used here.
    int poisson(double rate);

    static uint64_t fnv1a(std::string_view s);

private:
    explicit RngStream(uint64_t key) : key_(key) {}
    static uint64_t mix(uint64_t a, uint64_t b);

    uint64_t key_;
    uint64_t ctr_ = 0;
};

} // namespace gtmsm
