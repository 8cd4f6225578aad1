#include "feddar/rng.hpp"

#include <cmath>

namespace feddar {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Vector Rng::normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    // row-major fill so the draw order matches the serialized layout
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
}

// Marsaglia-Tsang squeeze for shape >= 1
double Rng::gamma_ge1(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::gamma(double shape) {
    if (shape < 1.0) return std::exp(log_gamma(shape));
    return gamma_ge1(shape);
}

double Rng::log_gamma(double shape) {
    if (shape >= 1.0) return std::log(gamma_ge1(shape));
    // boost from shape+1: G(a) = G(a+1) * U^(1/a), done in log space so
    // concentrations like 1e-5 do not underflow to zero
    const double g = gamma_ge1(shape + 1.0);
    const double u = uniform_open01();
    return std::log(g) + std::log(u) / shape;
}

Vector Rng::dirichlet(const Vector& concentration) {
    const Index m = concentration.size();
    Vector logs(m);
    for (Index j = 0; j < m; ++j) {
        if (concentration[j] == 0.0) {
            logs[j] = -std::numeric_limits<double>::infinity();
        } else {
            logs[j] = log_gamma(concentration[j]);
        }
    }
    const double mx = logs.maxCoeff();
    Vector out(m);
    for (Index j = 0; j < m; ++j)
        out[j] = std::isinf(logs[j]) ? 0.0 : std::exp(logs[j] - mx);
    const double s = out.sum();
    return out / s;
}

int Rng::categorical(const Vector& probs) {
    const double u = uniform01();
    double acc = 0.0;
    const Index m = probs.size();
    for (Index j = 0; j < m; ++j) {
        acc += probs[j];
        if (u < acc) return static_cast<int>(j);
    }
    // guard against cumulated round-off: return the last positive coordinate
    for (Index j = m - 1; j >= 0; --j)
        if (probs[j] > 0.0) return static_cast<int>(j);
    return static_cast<int>(m - 1);
}

std::uint64_t Rng::derive_seed(std::uint64_t master, std::uint64_t tag_a, std::uint64_t tag_b) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s ^= tag_a * 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= tag_b * 0xd1b54a32d192ed03ULL;
    h ^= splitmix64(s);
    return h;
}

}  // namespace feddar
