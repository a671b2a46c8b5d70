#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "implicitflow/mlp.hpp"

namespace iflow {

// Checkpoint layout (little-endian, bit-exact):
//   magic "NILS", u32 version=1, u32 input_dim, u32 layer_count,
//   per layer: u32 rows, u32 cols, rows*cols f64 weights (row-major), rows f64 biases,
//   trailing f64 omega0.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& os, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

}  // namespace detail

inline void save_checkpoint(const MlpParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write("NILS", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(p.input_dim()));
    detail::write_u32(os, static_cast<std::uint32_t>(p.layer_count()));
    for (int l = 0; l < p.layer_count(); ++l) {
        const int rows = p.out_dim(l), cols = p.in_dim(l);
        detail::write_u32(os, static_cast<std::uint32_t>(rows));
        detail::write_u32(os, static_cast<std::uint32_t>(cols));
        const double* w = p.weights(l);
        for (int i = 0; i < rows * cols; ++i) detail::write_f64(os, w[i]);
        const double* b = p.bias(l);
        for (int i = 0; i < rows; ++i) detail::write_f64(os, b[i]);
    }
    detail::write_f64(os, p.omega0());
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline MlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "NILS")
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1u) throw std::runtime_error("checkpoint: unsupported version");
    const auto input_dim = static_cast<int>(detail::read_u32(is));
    const auto layer_count = static_cast<int>(detail::read_u32(is));
    if (layer_count < 1 || layer_count > 64 || input_dim < 1 || input_dim > 16)
        throw std::runtime_error("checkpoint: implausible header");
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(layer_count));
    std::vector<std::vector<double>> biases(static_cast<std::size_t>(layer_count));
    std::vector<int> out_dims(static_cast<std::size_t>(layer_count));
    int expect_in = input_dim;
    for (int l = 0; l < layer_count; ++l) {
        const auto rows = static_cast<int>(detail::read_u32(is));
        const auto cols = static_cast<int>(detail::read_u32(is));
        if (!is || rows < 1 || cols < 1) throw std::runtime_error("checkpoint: bad layer header");
        if (cols != expect_in) throw std::runtime_error("checkpoint: layer dims do not chain");
        out_dims[static_cast<std::size_t>(l)] = rows;
        auto& w = weights[static_cast<std::size_t>(l)];
        w.resize(static_cast<std::size_t>(rows) * cols);
        for (auto& x : w) x = detail::read_f64(is);
        auto& b = biases[static_cast<std::size_t>(l)];
        b.resize(static_cast<std::size_t>(rows));
        for (auto& x : b) x = detail::read_f64(is);
        expect_in = rows;
    }
    const double omega0 = detail::read_f64(is);
    if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
    if (out_dims.back() != 1) throw std::runtime_error("checkpoint: output_dim must be 1");
    MlpParams p(input_dim, out_dims, omega0);
    for (int l = 0; l < layer_count; ++l) {
        auto lu = static_cast<std::size_t>(l);
        std::memcpy(p.weights(l), weights[lu].data(), weights[lu].size() * sizeof(double));
        std::memcpy(p.bias(l), biases[lu].data(), biases[lu].size() * sizeof(double));
    }
    return p;
}

}  // namespace iflow
