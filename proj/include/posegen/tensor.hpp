#ifndef POSEGEN_TENSOR_HPP
#define POSEGEN_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "posegen/errors.hpp"

namespace posegen {

// Dense row-major double tensor. Used for latents, images, control maps and
// noise predictions alike; images and latents use (channels, height, width).
// timestep_tag optionally records which diffusion level a latent belongs to
// (-1 = untagged).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    int timestep_tag = -1;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    // (c,h,w) accessors for 3-d tensors
    int channels() const { return shape.size() == 3 ? shape[0] : 1; }
    int height() const { return shape.size() == 3 ? shape[1] : (shape.size() == 2 ? shape[0] : 1); }
    int width() const { return shape.size() == 3 ? shape[2] : (shape.size() == 2 ? shape[1] : static_cast<int>(data.size())); }

    double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw contract_error(std::string(where) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// out = a*x + b*y, elementwise
inline Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y) {
    require_same_shape(x, y, "lincomb");
    Tensor out(x.shape);
    const size_t n = x.data.size();
    for (size_t i = 0; i < n; ++i) out.data[i] = a * x.data[i] + b * y.data[i];
    return out;
}

inline Tensor scaled(const Tensor& x, double a) {
    Tensor out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = a * x.data[i];
    return out;
}

// y += a*x
inline void axpy(double a, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] += a * x.data[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double squared_norm(const Tensor& a) {
    double s = 0;
    for (double v : a.data) s += v * v;
    return s;
}

inline double squared_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "squared_distance");
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

inline double linf_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "linf_distance");
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double mean_abs_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_abs_distance");
    if (a.data.empty()) return 0;
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// sampled values are pinned independent of the standard library.
struct Rng {
    explicit Rng(uint64_t seed) : state(seed == 0 ? 0x9e3779b97f4a7c15ULL : seed) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare = v * m;
        have_spare = true;
        return u * m;
    }

    Tensor normal_tensor(const std::vector<int>& shape) {
        Tensor t(shape);
        for (double& v : t.data) v = normal();
        return t;
    }

  private:
    uint64_t state;
    bool have_spare = false;
    double spare = 0;
};

// FNV-1a 64-bit; used for config digests and prompt hashing.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t seed = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), seed);
}

}  // namespace posegen

#endif
