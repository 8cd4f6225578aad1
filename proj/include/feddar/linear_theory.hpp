#ifndef FEDDAR_LINEAR_THEORY_HPP
#define FEDDAR_LINEAR_THEORY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "feddar/datagen.hpp"
#include "feddar/types.hpp"

namespace feddar::lintheory {

// Sufficient statistics of the per-domain quadratic head objective
// f(w) = 1/2 sum_j (y_j - w^T B^T x_j)^2: the gradient is A w - a.
struct DomainSuffStats {
    int domain;
    Matrix a_mat;  // k x k, sum_j B^T x x^T B
    Vector a_vec;  // k,     sum_j y B^T x
    Index count;   // L_{i,m}
};

struct EncoderGradStats {
    int domain;
    Matrix grad;  // d x k, sum_j (w^T B^T x - y) x w^T
    Index count;
};

struct ConvergenceRecord {
    int round;  // 0 is the initialization
    double dist;
    double predicted_upper_bound;  // Theorem rate from measured dist at round 0
    Vector domain_risk;            // mean squared residual per domain (empty at round 0)
};

struct Alg2Config {
    Index clients = 10;             // n
    Index domains = 5;              // M
    Index dim = 20;                 // d
    Index rank = 2;                 // k
    Index samples_per_client = 200;  // L, drawn per phase
    Index init_samples = 200;        // L0
    double eta = 0.0;                // 0 selects the maximal admissible 1/(4 sigma_max_bar^2)
    int rounds = 50;                 // T
    double noise_sigma = 0.0;
    bool resample = true;  // fresh samples each phase (the regime of the analysis)
    std::uint64_t seed = 0;
    datagen::HeadGen head_gen = datagen::HeadGen::orthonormal_cols;
};

// Per-batch statistics, pure so distributed and centralized runs can be
// compared exactly.
std::vector<DomainSuffStats> collect_domain_stats(const Matrix& b, const Matrix& x,
                                                  const Vector& y, const std::vector<int>& z,
                                                  Index domains);
std::vector<DomainSuffStats> pool_stats(const std::vector<std::vector<DomainSuffStats>>& per_client,
                                        Index domains);

// Row m solves (sum_i A_{i,m}) w_m = sum_i a_{i,m}; a ridge of
// 1e-8 tr(A)/k is added when the pooled quadratic form is ill-conditioned.
Matrix exact_head_solve(const std::vector<DomainSuffStats>& pooled, Index rank);

std::vector<EncoderGradStats> collect_encoder_grads(const Matrix& b, const Matrix& w,
                                                    const Matrix& x, const Vector& y,
                                                    const std::vector<int>& z, Index domains);

// B_tilde = B - eta (1/M) sum_m grad_m / count_m, then QR re-orthonormalization.
Matrix encoder_step(const Matrix& b, const std::vector<EncoderGradStats>& pooled_grads,
                    double eta, Index domains);

struct MomInitResult {
    Matrix basis;  // d x k orthonormal
    bool gap_collapsed;
};

// Method-of-moments initialization: top-k eigenbasis of (1/(n L0)) sum_i Z_i
// with Z_i = sum_j y_j^2 x_j x_j^T.
MomInitResult mom_init(const std::vector<Matrix>& client_x, const std::vector<Vector>& client_y,
                       Index rank);

struct Alg2Result {
    std::vector<ConvergenceRecord> records;
    Matrix final_b;
    Matrix final_w;  // M x k
    datagen::SyntheticGroundTruth ground_truth;
    double eta_used;
    double sigma_max_bar;
    double sigma_min_bar;
    bool init_gap_collapsed;
};

Alg2Result run_algorithm2(const Alg2Config& cfg);

// CSV columns: round, dist, predicted_upper_bound, domain_0_risk..domain_{M-1}_risk
void write_trajectory_csv(const std::string& path, const Alg2Result& result);

}  // namespace feddar::lintheory

#endif
