#ifndef LVLINGAM_RNG_HPP
#define LVLINGAM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lvlingam {

//! 64-bit mix (splitmix64 finalizer); used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

//! Seed for one work unit, decorrelated from neighbours; identical across
//! platforms so parallel schedules never change results.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t grid, std::uint64_t trial) {
    std::uint64_t h = mix64(base);
    h = mix64(h ^ grid);
    h = mix64(h ^ trial);
    return h;
}

//! Deterministic random layer. mt19937_64 has a standard-specified output
//! sequence and every distribution below is written out explicitly, so streams
//! are bit-identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return static_cast<std::uint64_t>(engine_()); }

    //! Uniform on (0,1) with 53-bit resolution; never returns 0 or 1.
    double uniform01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    //! Unbiased integer in [0, n); Lemire's multiply-shift rejection method.
    std::uint64_t below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = -n % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    //! Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double exponential(double scale) { return -scale * std::log1p(-uniform01()); }

    double laplace(double scale) {
        const double u = uniform01() - 0.5;
        const double t = scale * std::log1p(-2.0 * std::abs(u));
        return u < 0 ? t : -t;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace lvlingam

#endif
