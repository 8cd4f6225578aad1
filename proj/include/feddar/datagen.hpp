#ifndef FEDDAR_DATAGEN_HPP
#define FEDDAR_DATAGEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "feddar/rng.hpp"
#include "feddar/types.hpp"

namespace feddar::datagen {

enum class Task { regression, binary_classification };

// How the ground-truth head matrix is drawn. sphere_rows rescales each
// Gaussian row to norm sqrt(k); orthonormal_cols takes the QR factor of an
// M x k Gaussian matrix (the convention of the synthetic experiments), which
// makes W*/sqrt(M) perfectly conditioned.
enum class HeadGen { sphere_rows, orthonormal_cols };

struct SyntheticGroundTruth {
    Matrix b_star;       // d x k, orthonormal columns
    Matrix w_star;       // M x k, row m is the head of domain m
    double noise_sigma;  // label noise scale (regression only)
    Task task;
    HeadGen head_gen;

    Index d() const { return b_star.rows(); }
    Index k() const { return b_star.cols(); }
    Index domains() const { return w_star.rows(); }
    // sigma_max(W*/sqrt(M)) and sigma_min(W*/sqrt(M))
    double sigma_max_bar() const;
    double sigma_min_bar() const;
};

struct DomainMixture {
    Vector pi;  // M probabilities, sum 1 within 1e-12
};

struct LabeledSample {
    Vector x;
    double y;
    int z;  // domain index
};

struct ClientDataset {
    int client_id = 0;
    std::vector<std::vector<LabeledSample>> samples_by_domain;  // size M
    std::vector<Index> counts;                                  // L_{i,m}

    // dense views derived from samples_by_domain, used by the trainers
    std::vector<Matrix> x_by_domain;  // L_{i,m} x d
    std::vector<Vector> y_by_domain;
    Matrix x_all;  // L_i x d, generation order
    Vector y_all;
    std::vector<int> z_all;

    Index domains() const { return static_cast<Index>(counts.size()); }
    Index total() const;
    void build_dense_views(Index d);
};

struct DomainTestSet {
    Matrix x;
    Vector y;
};

SyntheticGroundTruth sample_ground_truth(Index d, Index k, Index m, double noise_sigma,
                                         Task task, std::uint64_t rng_seed,
                                         HeadGen head_gen = HeadGen::sphere_rows);

std::vector<DomainMixture> sample_mixtures(Index n, double alpha_dir, const Vector& prior_p,
                                           std::uint64_t rng_seed);

ClientDataset generate_client_dataset(const SyntheticGroundTruth& gt, const DomainMixture& mixture,
                                      Index samples, std::uint64_t rng_seed, int client_id);

// Noiseless evaluation sets, one per domain.
std::vector<DomainTestSet> generate_test_sets(const SyntheticGroundTruth& gt,
                                              Index samples_per_domain, std::uint64_t rng_seed);

// Dataset dump: one CSV per client (columns x0..x{d-1},y,z) plus manifest.json.
void dump_dataset(const std::string& dir, const SyntheticGroundTruth& gt,
                  const std::vector<DomainMixture>& mixtures,
                  const std::vector<ClientDataset>& clients, std::uint64_t seed);

}  // namespace feddar::datagen

#endif
