#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rxpp {

// Deterministic splitmix64 generator. All randomness in the project flows
// through this so that runs are byte-reproducible across platforms; the
// standard <random> distributions are implementation-defined and would not be.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Box-Muller with a cached second draw.
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Beta(a, b) for integer shapes via sums of exponentials.
    double beta(int a, int b) {
        double ga = 0.0, gb = 0.0;
        for (int i = 0; i < a; ++i) ga -= std::log(1.0 - uniform());
        for (int i = 0; i < b; ++i) gb -= std::log(1.0 - uniform());
        return ga / (ga + gb);
    }

  private:
    bool has_cached_ = false;
    double cached_ = 0.0;
};

inline uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    x ^= b * 0xff51afd7ed558ccdULL;
    x = (x ^ (x >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return x ^ (x >> 33);
}

inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }

inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// Worker cap from RXPP_THREADS (0 or unset -> hardware concurrency).
int thread_cap();

// Index-parallel loop. Results must be written by index so the reduction
// order stays deterministic regardless of scheduling.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

// Shortest round-trip decimal form; single formatter so every CSV/JSON byte
// is reproducible.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace rxpp
