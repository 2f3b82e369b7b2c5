#pragma once

// Row-major 2-D float tensor plus the small vector helpers the rest of the
// library is built on. Values are f32; dot products accumulate in f64.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvs {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;  // row-major, rows*cols entries

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, float fill = 0.0f)
        : rows(r), cols(c), data(r * c, fill) {}

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Tensor2& other) const {
        return rows == other.rows && cols == other.cols;
    }

    bool operator==(const Tensor2& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

// Deterministic PRNG wrapper. Distributions are hand-rolled so streams do not
// depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return (gen_() >> 11) * (1.0 / 9007199254740992.0);  // 53 bits
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform index in [0, n)
    std::size_t index(std::size_t n) {
        if (n == 0) throw ArgumentError("Rng::index: n must be positive");
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline double dot(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double l2_norm(const float* v, std::size_t n) {
    return std::sqrt(dot(v, v, n));
}

constexpr double kNormEps = 1e-12;

// In-place unit normalization. Throws on a near-zero vector.
inline void l2_normalize(float* v, std::size_t n) {
    double norm = l2_norm(v, n);
    if (norm <= kNormEps)
        throw NumericError("l2_normalize: degenerate near-zero vector");
    float inv = static_cast<float>(1.0 / norm);
    for (std::size_t i = 0; i < n; ++i) v[i] *= inv;
}

inline std::vector<float> l2_normalized(std::vector<float> v) {
    l2_normalize(v.data(), v.size());
    return v;
}

}  // namespace hvs
