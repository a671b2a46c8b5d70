#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "implicitflow/mesh.hpp"
#include "implicitflow/mesh_ops.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Pinhole camera with a point light collocated at the position.
struct Camera {
    Vec3 position;
    Vec3 look_at;
    Vec3 up{0, 0, 1};
    double vfov = 0.9;  // radians
    int width = 64;
    int height = 64;

    void validate() const {
        if (!(vfov > 0 && vfov < M_PI)) throw std::invalid_argument("camera: fov out of (0, pi)");
        if (width < 1 || height < 1) throw std::invalid_argument("camera: image size must be >= 1");
        if (norm(look_at - position) == 0) throw std::invalid_argument("camera: look_at equals position");
    }

    // Unit ray through the center of pixel (row, col); rows count from the top.
    Vec3 pixel_dir(int row, int col) const {
        const Vec3 fwd = normalized(look_at - position);
        Vec3 right = cross(fwd, up);
        if (norm(right) < 1e-12) right = cross(fwd, Vec3{1, 0, 0});
        right = normalized(right);
        const Vec3 cup = cross(right, fwd);
        const double half_h = std::tan(0.5 * vfov);
        const double aspect = static_cast<double>(width) / height;
        const double px = ((col + 0.5) / width * 2.0 - 1.0) * half_h * aspect;
        const double py = (1.0 - (row + 0.5) / height * 2.0) * half_h;
        return normalized(fwd + right * px + cup * py);
    }
};

/// Grayscale radiance, row-major, top-left origin.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}
    double& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
};

namespace render_detail {

struct TriHit {
    int tri = -1;
    double t = 0, u = 0, v = 0;
};

// Median-split BVH over triangles; flat nodes, stack traversal.
class Bvh {
public:
    explicit Bvh(const TriangleMesh& mesh) : mesh_(mesh) {
        const int n = mesh.element_count();
        centroids_.resize(static_cast<std::size_t>(n));
        order_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            order_[static_cast<std::size_t>(i)] = i;
            const auto& f = mesh.elements[static_cast<std::size_t>(i)];
            centroids_[static_cast<std::size_t>(i)] =
                (mesh.vertices[static_cast<std::size_t>(f[0])] + mesh.vertices[static_cast<std::size_t>(f[1])] +
                 mesh.vertices[static_cast<std::size_t>(f[2])]) /
                3.0;
        }
        if (n > 0) build(0, n);
    }

    TriHit nearest(const Vec3& origin, const Vec3& dir) const {
        TriHit best;
        if (nodes_.empty()) return best;
        best.t = 1e300;
        std::vector<int> stack{0};
        Vec3 inv;
        for (int k = 0; k < 3; ++k) inv[k] = dir[k] != 0 ? 1.0 / dir[k] : 1e300;
        while (!stack.empty()) {
            const int ni = stack.back();
            stack.pop_back();
            const Node& node = nodes_[static_cast<std::size_t>(ni)];
            if (!hit_box(node, origin, inv, best.t)) continue;
            if (node.count > 0) {
                for (int i = node.first; i < node.first + node.count; ++i)
                    intersect_tri(order_[static_cast<std::size_t>(i)], origin, dir, best);
            } else {
                stack.push_back(node.first);
                stack.push_back(node.first + 1);
            }
        }
        if (best.tri < 0) best.t = 0;
        return best;
    }

private:
    struct Node {
        Vec3 lo, hi;
        int first = 0;  // leaf: index into order_; inner: left child index
        int count = 0;  // leaf triangle count; 0 for inner nodes
    };

    int build(int begin, int end) {
        Node node;
        node.lo = Vec3::filled(1e300);
        node.hi = Vec3::filled(-1e300);
        for (int i = begin; i < end; ++i) {
            const auto& f = mesh_.elements[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
            for (int v : f)
                for (int k = 0; k < 3; ++k) {
                    node.lo[k] = std::min(node.lo[k], mesh_.vertices[static_cast<std::size_t>(v)][k]);
                    node.hi[k] = std::max(node.hi[k], mesh_.vertices[static_cast<std::size_t>(v)][k]);
                }
        }
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= 4) {
            nodes_[static_cast<std::size_t>(idx)].first = begin;
            nodes_[static_cast<std::size_t>(idx)].count = end - begin;
            return idx;
        }
        int axis = 0;
        const Vec3 extent = node.hi - node.lo;
        if (extent[1] > extent[0]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int a, int b) {
                             return centroids_[static_cast<std::size_t>(a)][axis] <
                                    centroids_[static_cast<std::size_t>(b)][axis];
                         });
        const int left = build(begin, mid);
        const int right = build(mid, end);
        (void)left;
        nodes_[static_cast<std::size_t>(idx)].first = left;
        nodes_[static_cast<std::size_t>(idx)].count = 0;
        if (right != left + 1) throw std::logic_error("bvh: unexpected child layout");
        return idx;
    }

    bool hit_box(const Node& n, const Vec3& o, const Vec3& inv, double tmax) const {
        double t0 = 0, t1 = tmax;
        for (int k = 0; k < 3; ++k) {
            double a = (n.lo[k] - o[k]) * inv[k];
            double b = (n.hi[k] - o[k]) * inv[k];
            if (a > b) std::swap(a, b);
            t0 = std::max(t0, a);
            t1 = std::min(t1, b);
            if (t0 > t1) return false;
        }
        return true;
    }

    void intersect_tri(int tri, const Vec3& o, const Vec3& d, TriHit& best) const {
        const auto& f = mesh_.elements[static_cast<std::size_t>(tri)];
        const Vec3& a = mesh_.vertices[static_cast<std::size_t>(f[0])];
        const Vec3& b = mesh_.vertices[static_cast<std::size_t>(f[1])];
        const Vec3& c = mesh_.vertices[static_cast<std::size_t>(f[2])];
        const Vec3 e1 = b - a, e2 = c - a;
        const Vec3 p = cross(d, e2);
        const double det = dot(e1, p);
        if (std::abs(det) < 1e-14) return;  // backface-inclusive: only parallel rays rejected
        const double inv = 1.0 / det;
        const Vec3 tv = o - a;
        const double u = dot(tv, p) * inv;
        if (u < 0 || u > 1) return;
        const Vec3 q = cross(tv, e1);
        const double v = dot(d, q) * inv;
        if (v < 0 || u + v > 1) return;
        const double t = dot(e2, q) * inv;
        if (t <= 1e-9 || t >= best.t) return;
        best = {tri, t, u, v};
    }

    const TriangleMesh& mesh_;
    std::vector<Vec3> centroids_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace render_detail

/// Single-bounce collocated-light diffuse render:
/// radiance = albedo * max(0, n_hat . v_hat) with the smooth-interpolated
/// vertex normal; background 0. Deterministic, fixed pixel order.
inline Image render(const TriangleMesh& mesh, const Camera& cam, double albedo,
                    int* hit_count = nullptr) {
    cam.validate();
    if (!(albedo > 0 && albedo <= 1)) throw std::invalid_argument("render: albedo must be in (0,1]");
    Image img(cam.width, cam.height);
    if (hit_count) *hit_count = 0;
    if (mesh.empty()) return img;
    const render_detail::Bvh bvh(mesh);
    const auto normals = vertex_normals(mesh);
    for (int row = 0; row < cam.height; ++row)
        for (int col = 0; col < cam.width; ++col) {
            const Vec3 d = cam.pixel_dir(row, col);
            const auto hit = bvh.nearest(cam.position, d);
            if (hit.tri < 0) continue;
            if (hit_count) ++(*hit_count);
            const auto& f = mesh.elements[static_cast<std::size_t>(hit.tri)];
            const Vec3 nt = normals[static_cast<std::size_t>(f[0])] * (1.0 - hit.u - hit.v) +
                            normals[static_cast<std::size_t>(f[1])] * hit.u +
                            normals[static_cast<std::size_t>(f[2])] * hit.v;
            const double len = norm(nt);
            if (len < 1e-14) continue;
            const double s = dot(nt / len, -d);
            img.at(row, col) = albedo * std::max(0.0, s);
        }
    return img;
}

/// dE/dx for E = sum_j residual_j^2 with residual = rendered - target, at
/// fixed visibility. Gradients flow through the barycentric coordinates of
/// the hit (Moller-Trumbore partials) and through the area-weighted vertex
/// normals; pixels with zero residual contribute exactly nothing.
inline std::vector<Vec3> render_gradients(const TriangleMesh& mesh, const Camera& cam,
                                          const Image& residual, double albedo) {
    cam.validate();
    if (residual.width != cam.width || residual.height != cam.height)
        throw std::invalid_argument("render_gradients: residual size mismatch");
    std::vector<Vec3> grad_pos(mesh.vertices.size(), Vec3::zero());
    if (mesh.empty()) return grad_pos;
    const render_detail::Bvh bvh(mesh);

    // unnormalized vertex normals m_i and their unit versions
    std::vector<Vec3> m(mesh.vertices.size(), Vec3::zero());
    for (const auto& f : mesh.elements) {
        const Vec3 c = element_normal_raw(mesh, f);
        for (int v : f) m[static_cast<std::size_t>(v)] += c;
    }
    std::vector<Vec3> normals(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) normals[i] = norm(m[i]) > 0 ? m[i] / norm(m[i]) : Vec3::zero();
    std::vector<Vec3> m_bar(m.size(), Vec3::zero());

    for (int row = 0; row < cam.height; ++row)
        for (int col = 0; col < cam.width; ++col) {
            const double res = residual.at(row, col);
            if (res == 0.0) continue;
            const Vec3 d = cam.pixel_dir(row, col);
            const auto hit = bvh.nearest(cam.position, d);
            if (hit.tri < 0) continue;
            const auto& f = mesh.elements[static_cast<std::size_t>(hit.tri)];
            const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
            const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
            const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
            const Vec3& na = normals[static_cast<std::size_t>(f[0])];
            const Vec3& nb = normals[static_cast<std::size_t>(f[1])];
            const Vec3& nc = normals[static_cast<std::size_t>(f[2])];
            const double u = hit.u, v = hit.v, w0 = 1.0 - u - v;
            const Vec3 nt = na * w0 + nb * u + nc * v;
            const double len = norm(nt);
            if (len < 1e-14) continue;
            const Vec3 nh = nt / len;
            const Vec3 vh = -d;
            const double s = dot(nh, vh);
            if (s <= 0) continue;

            const double r_bar = 2.0 * res;          // dE/dR
            const double s_bar = r_bar * albedo;     // dE/ds
            const Vec3 nt_bar = (vh - nh * s) * (s_bar / len);

            // normal interpolation pathway
            m_bar[static_cast<std::size_t>(f[0])] += project_out(na, nt_bar, m[static_cast<std::size_t>(f[0])]) * w0;
            m_bar[static_cast<std::size_t>(f[1])] += project_out(nb, nt_bar, m[static_cast<std::size_t>(f[1])]) * u;
            m_bar[static_cast<std::size_t>(f[2])] += project_out(nc, nt_bar, m[static_cast<std::size_t>(f[2])]) * v;

            // barycentric pathway (w0 = 1 - u - v)
            const double u_bar = dot(nt_bar, nb - na);
            const double v_bar = dot(nt_bar, nc - na);

            // Moller-Trumbore partials at fixed origin o and direction d
            const Vec3 e1 = b - a, e2 = c - a, tv = cam.position - a;
            const Vec3 p = cross(d, e2);
            const double det = dot(e1, p);
            if (std::abs(det) < 1e-14) continue;
            const double inv = 1.0 / det;
            const Vec3 e1xd = cross(e1, d);
            const Vec3 du_dE1 = -p * (u * inv);
            const Vec3 du_dE2 = (cross(tv, d) - e1xd * u) * inv;
            const Vec3 du_dT = p * inv;
            const Vec3 dv_dE1 = (cross(d, tv) - p * v) * inv;
            const Vec3 dv_dE2 = -e1xd * (v * inv);
            const Vec3 dv_dT = e1xd * inv;

            const Vec3 gB = du_dE1 * u_bar + dv_dE1 * v_bar;
            const Vec3 gC = du_dE2 * u_bar + dv_dE2 * v_bar;
            const Vec3 gT = du_dT * u_bar + dv_dT * v_bar;
            grad_pos[static_cast<std::size_t>(f[1])] += gB;
            grad_pos[static_cast<std::size_t>(f[2])] += gC;
            grad_pos[static_cast<std::size_t>(f[0])] -= gB + gC + gT;  // dT/dA = -I
        }

    // push vertex-normal adjoints through the face-normal accumulation
    for (const auto& f : mesh.elements) {
        const Vec3 c_bar = m_bar[static_cast<std::size_t>(f[0])] + m_bar[static_cast<std::size_t>(f[1])] +
                           m_bar[static_cast<std::size_t>(f[2])];
        if (norm2(c_bar) == 0.0) continue;
        const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(f[0])];
        const Vec3& p1 = mesh.vertices[static_cast<std::size_t>(f[1])];
        const Vec3& p2 = mesh.vertices[static_cast<std::size_t>(f[2])];
        const Vec3 e1 = p1 - p0, e2 = p2 - p0;
        const Vec3 e1_bar = cross(e2, c_bar);
        const Vec3 e2_bar = cross(c_bar, e1);
        grad_pos[static_cast<std::size_t>(f[1])] += e1_bar;
        grad_pos[static_cast<std::size_t>(f[2])] += e2_bar;
        grad_pos[static_cast<std::size_t>(f[0])] -= e1_bar + e2_bar;
    }
    return grad_pos;
}

inline Vec3 project_out(const Vec3& n_hat, const Vec3& bar, const Vec3& m_raw) {
    const double len = norm(m_raw);
    if (len < 1e-14) return Vec3::zero();
    return (bar - n_hat * dot(bar, n_hat)) / len;
}

/// 10 log10(peak^2 / MSE), capped at 99 dB (identical images).
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("psnr: image size mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return 99.0;
    return std::min(10.0 * std::log10(peak * peak / mse), 99.0);
}

/// Photometric flow: V_i = -dE/dx_i + lambda_smooth * (L x)_i summed over
/// all views (residual = rendered - target per view). Throws when no view
/// sees the mesh (zero-gradient deadlock).
inline FlowField<3> photometric_flow(const TriangleMesh& mesh, const std::vector<Camera>& cameras,
                                     const std::vector<Image>& targets, double albedo,
                                     double lambda_smooth) {
    if (cameras.size() != targets.size())
        throw std::invalid_argument("photometric_flow: cameras and targets mismatch");
    FlowField<3> flow(mesh.vertices.size(), Vec3::zero());
    int total_hits = 0;
    for (std::size_t k = 0; k < cameras.size(); ++k) {
        int hits = 0;
        Image rendered = render(mesh, cameras[k], albedo, &hits);
        total_hits += hits;
        Image residual = rendered;
        for (std::size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= targets[k].data[i];
        const auto grad = render_gradients(mesh, cameras[k], residual, albedo);
        for (std::size_t i = 0; i < flow.size(); ++i) flow[i] -= grad[i];
    }
    if (total_hits == 0) throw std::runtime_error("photometric_flow: no view sees the mesh");
    if (lambda_smooth != 0.0) {
        const SparseMatrix L = uniform_laplacian(mesh);
        const auto lx = apply_to_positions(L, mesh.vertices);
        for (std::size_t i = 0; i < flow.size(); ++i) flow[i] += lx[i] * lambda_smooth;
    }
    return flow;
}

// --- image files -------------------------------------------------------------

/// Binary PPM (P5, 8-bit): linear radiance clamped to [0,1] then scaled.
inline void write_ppm(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("ppm: cannot open for writing: " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.data) {
        const double c = std::clamp(v, 0.0, 1.0);
        const auto byte = static_cast<unsigned char>(std::lround(c * 255.0));
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!os) throw std::runtime_error("ppm: write failed: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ppm: cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw std::runtime_error("ppm: expected P5 in " + path);
    int w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    is.get();
    if (!is || w < 1 || h < 1 || maxval != 255) throw std::runtime_error("ppm: bad header in " + path);
    Image img(w, h);
    for (auto& v : img.data) {
        unsigned char byte = 0;
        is.read(reinterpret_cast<char*>(&byte), 1);
        v = byte / 255.0;
    }
    if (!is) throw std::runtime_error("ppm: truncated file: " + path);
    return img;
}

/// Raw lossless dump: u32 width, u32 height, then f64 little-endian data.
inline void write_raw_image(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("raw image: cannot open for writing: " + path);
    auto w32 = [&](std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    w32(static_cast<std::uint32_t>(img.width));
    w32(static_cast<std::uint32_t>(img.height));
    for (double v : img.data) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline Image read_raw_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("raw image: cannot open: " + path);
    auto r32 = [&] {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    };
    const auto w = static_cast<int>(r32());
    const auto h = static_cast<int>(r32());
    if (!is || w < 1 || h < 1) throw std::runtime_error("raw image: bad header in " + path);
    Image img(w, h);
    for (auto& v : img.data) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&v, &u, 8);
    }
    if (!is) throw std::runtime_error("raw image: truncated file: " + path);
    return img;
}

}  // namespace iflow
