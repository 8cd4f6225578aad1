#ifndef FEDDAR_RNG_HPP
#define FEDDAR_RNG_HPP

#include <cstdint>
#include <vector>

#include "feddar/types.hpp"

namespace feddar {

// Deterministic xoshiro256++ stream with explicit distribution code, so that
// identical seeds give bit-identical draws on every platform and standard
// library. Sub-streams are derived with splitmix64 so per-client generation
// can run in parallel without sharing state.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform on [0, 1)
    double uniform01();
    // uniform on (0, 1), safe as a log() argument
    double uniform_open01();
    double normal();  // standard normal, Box-Muller with cached spare
    Vector normal_vector(Index n);
    Matrix normal_matrix(Index rows, Index cols);

    // Gamma(shape, 1). For tiny shapes prefer log_gamma().
    double gamma(double shape);
    // log of a Gamma(shape, 1) draw; stable for shape << 1
    double log_gamma(double shape);

    // Dirichlet(concentration); coordinates with concentration exactly 0 are
    // exactly 0 in the output.
    Vector dirichlet(const Vector& concentration);

    // index draw from a categorical distribution given by `probs`
    int categorical(const Vector& probs);

    // derive an independent sub-stream seed from this rng's seed and tags
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag_a,
                                     std::uint64_t tag_b = 0);

  private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;

    double gamma_ge1(double shape);
};

}  // namespace feddar

#endif
