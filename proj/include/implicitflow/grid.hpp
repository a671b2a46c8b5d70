#pragma once

#include <array>
#include <stdexcept>

#include "implicitflow/rng.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Uniform extraction grid: `resolution` cells per axis over [lo, hi].
/// When jitter > 0, each evolution step draws resolution + U[-jitter, jitter]
/// (one draw, applied to every axis).
template <int D>
struct GridSpec {
    std::array<int, D> resolution{};
    Vec<D> lo = Vec<D>::filled(-1.0);
    Vec<D> hi = Vec<D>::filled(1.0);
    int jitter = 0;

    static GridSpec cube(int res, double lo_v = -1.0, double hi_v = 1.0, int jitter = 0) {
        GridSpec g;
        g.resolution.fill(res);
        g.lo = Vec<D>::filled(lo_v);
        g.hi = Vec<D>::filled(hi_v);
        g.jitter = jitter;
        return g;
    }

    void validate() const {
        for (int i = 0; i < D; ++i) {
            if (resolution[static_cast<std::size_t>(i)] < 2)
                throw std::invalid_argument("grid: resolution must be >= 2");
            if (!(lo[i] < hi[i])) throw std::invalid_argument("grid: min must be < max");
        }
        if (jitter < 0) throw std::invalid_argument("grid: jitter must be >= 0");
    }

    double cell_size(int axis) const {
        return (hi[axis] - lo[axis]) / resolution[static_cast<std::size_t>(axis)];
    }

    double max_cell_size() const {
        double m = 0;
        for (int i = 0; i < D; ++i) m = std::max(m, cell_size(i));
        return m;
    }

    Vec<D> node(const std::array<int, D>& idx) const {
        Vec<D> p;
        for (int i = 0; i < D; ++i)
            p[i] = lo[i] + (hi[i] - lo[i]) * idx[static_cast<std::size_t>(i)] /
                               resolution[static_cast<std::size_t>(i)];
        return p;
    }

    GridSpec jittered(Rng& rng) const {
        GridSpec g = *this;
        if (jitter > 0) {
            const int dr = rng.uniform_int(-jitter, jitter);
            for (auto& r : g.resolution) r = std::max(2, r + dr);
        }
        return g;
    }
};

}  // namespace iflow
