#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "implicitflow/vec.hpp"

namespace iflow {

// Deterministic RNG. mt19937_64 is bit-exact by the standard; the
// distributions below are hand-rolled because std:: distributions are
// implementation-defined and would break bitwise reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Box-Muller; u1 nudged away from 0.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    template <int D>
    Vec<D> uniform_in_box(const Vec<D>& lo, const Vec<D>& hi) {
        Vec<D> p;
        for (int i = 0; i < D; ++i) p[i] = uniform(lo[i], hi[i]);
        return p;
    }

    template <int D>
    Vec<D> unit_vector() {
        // Rejection-free: normalize a Gaussian draw.
        Vec<D> p;
        double n2;
        do {
            for (int i = 0; i < D; ++i) p[i] = normal();
            n2 = norm2(p);
        } while (n2 < 1e-24);
        return p / std::sqrt(n2);
    }

    // Derive an independent stream, e.g. one per time step.
    Rng fork(std::uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace iflow
