#include "feddar/datagen.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "feddar/numerics.hpp"
#include "json.hpp"

namespace feddar::datagen {

namespace {
constexpr std::uint64_t kClientTag = 0x636c69656e740000ULL;  // stream namespace tags
constexpr std::uint64_t kTestTag = 0x7465737473657400ULL;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }
}  // namespace

double SyntheticGroundTruth::sigma_max_bar() const {
    Eigen::JacobiSVD<Matrix> svd(w_star / std::sqrt(static_cast<double>(domains())));
    return svd.singularValues()[0];
}

double SyntheticGroundTruth::sigma_min_bar() const {
    Eigen::JacobiSVD<Matrix> svd(w_star / std::sqrt(static_cast<double>(domains())));
    return svd.singularValues()[svd.singularValues().size() - 1];
}

Index ClientDataset::total() const {
    Index t = 0;
    for (Index c : counts) t += c;
    return t;
}

void ClientDataset::build_dense_views(Index d) {
    const Index m = domains();
    x_by_domain.assign(m, Matrix());
    y_by_domain.assign(m, Vector());
    for (Index j = 0; j < m; ++j) {
        const auto& bucket = samples_by_domain[j];
        Matrix x(static_cast<Index>(bucket.size()), d);
        Vector y(static_cast<Index>(bucket.size()));
        for (Index r = 0; r < static_cast<Index>(bucket.size()); ++r) {
            x.row(r) = bucket[r].x.transpose();
            y[r] = bucket[r].y;
        }
        x_by_domain[j] = std::move(x);
        y_by_domain[j] = std::move(y);
    }
}

SyntheticGroundTruth sample_ground_truth(Index d, Index k, Index m, double noise_sigma, Task task,
                                         std::uint64_t rng_seed, HeadGen head_gen) {
    if (k > d) throw ValidationError("sample_ground_truth: k must not exceed d");
    if (m < 1) throw ValidationError("sample_ground_truth: need at least one domain");
    if (noise_sigma < 0) throw ValidationError("sample_ground_truth: negative noise");
    if (head_gen == HeadGen::orthonormal_cols && m < k)
        throw ValidationError("sample_ground_truth: orthonormal_cols heads need M >= k");

    Rng rng(rng_seed);
    SyntheticGroundTruth gt;
    gt.noise_sigma = noise_sigma;
    gt.task = task;
    gt.head_gen = head_gen;
    gt.b_star = numerics::qr_orthonormalize(rng.normal_matrix(d, k)).q;

    const double sqrt_k = std::sqrt(static_cast<double>(k));
    for (int attempt = 0; attempt < 10; ++attempt) {
        Matrix w(m, k);
        if (head_gen == HeadGen::sphere_rows) {
            for (Index r = 0; r < m; ++r) {
                Vector row = rng.normal_vector(k);
                w.row(r) = (row * (sqrt_k / row.norm())).transpose();
            }
        } else {
            w = numerics::qr_orthonormalize(rng.normal_matrix(m, k)).q;
        }
        Eigen::JacobiSVD<Matrix> svd(w / std::sqrt(static_cast<double>(m)));
        if (svd.singularValues()[svd.singularValues().size() - 1] >= 1e-6) {
            gt.w_star = std::move(w);
            return gt;
        }
    }
    throw ValidationError("sample_ground_truth: degenerate head matrix after 10 resamples");
}

std::vector<DomainMixture> sample_mixtures(Index n, double alpha_dir, const Vector& prior_p,
                                           std::uint64_t rng_seed) {
    if (alpha_dir <= 0) throw ValidationError("sample_mixtures: alpha_dir must be positive");
    if ((prior_p.array() < 0).any()) throw ValidationError("sample_mixtures: negative prior entry");
    if (std::abs(prior_p.sum() - 1.0) > 1e-12)
        throw ValidationError("sample_mixtures: prior does not sum to 1");

    Rng rng(rng_seed);
    const Vector conc = alpha_dir * prior_p;
    std::vector<DomainMixture> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back({rng.dirichlet(conc)});
    return out;
}

ClientDataset generate_client_dataset(const SyntheticGroundTruth& gt, const DomainMixture& mixture,
                                      Index samples, std::uint64_t rng_seed, int client_id) {
    if (samples < 1) throw ValidationError("generate_client_dataset: need at least one sample");
    if (mixture.pi.size() != gt.domains())
        throw ValidationError("generate_client_dataset: mixture/ground-truth domain mismatch");

    Rng rng(Rng::derive_seed(rng_seed, static_cast<std::uint64_t>(client_id), kClientTag));
    const Index d = gt.d(), m = gt.domains();
    const Matrix effective = gt.b_star * gt.w_star.transpose();  // d x M, column m = B* w*_m

    ClientDataset ds;
    ds.client_id = client_id;
    ds.samples_by_domain.assign(static_cast<std::size_t>(m), {});
    ds.counts.assign(static_cast<std::size_t>(m), 0);
    ds.x_all.resize(samples, d);
    ds.y_all.resize(samples);
    ds.z_all.resize(static_cast<std::size_t>(samples));

    for (Index j = 0; j < samples; ++j) {
        const int z = rng.categorical(mixture.pi);
        Vector x = rng.normal_vector(d);
        const double signal = effective.col(z).dot(x);
        double y;
        if (gt.task == Task::regression) {
            y = signal + gt.noise_sigma * rng.normal();
        } else {
            y = rng.uniform01() < sigmoid(signal) ? 1.0 : 0.0;
        }
        ds.x_all.row(j) = x.transpose();
        ds.y_all[j] = y;
        ds.z_all[static_cast<std::size_t>(j)] = z;
        ds.samples_by_domain[static_cast<std::size_t>(z)].push_back({std::move(x), y, z});
        ds.counts[static_cast<std::size_t>(z)]++;
    }
    ds.build_dense_views(d);
    return ds;
}

std::vector<DomainTestSet> generate_test_sets(const SyntheticGroundTruth& gt,
                                              Index samples_per_domain, std::uint64_t rng_seed) {
    std::vector<DomainTestSet> out;
    const Index d = gt.d();
    out.reserve(static_cast<std::size_t>(gt.domains()));
    for (Index m = 0; m < gt.domains(); ++m) {
        Rng rng(Rng::derive_seed(rng_seed, static_cast<std::uint64_t>(m), kTestTag));
        DomainTestSet ts;
        ts.x = rng.normal_matrix(samples_per_domain, d);
        const Vector dir = gt.b_star * gt.w_star.row(m).transpose();
        if (gt.task == Task::regression) {
            ts.y = ts.x * dir;
        } else {
            ts.y.resize(samples_per_domain);
            for (Index j = 0; j < samples_per_domain; ++j)
                ts.y[j] = rng.uniform01() < sigmoid(ts.x.row(j).dot(dir)) ? 1.0 : 0.0;
        }
        out.push_back(std::move(ts));
    }
    return out;
}

void dump_dataset(const std::string& dir, const SyntheticGroundTruth& gt,
                  const std::vector<DomainMixture>& mixtures,
                  const std::vector<ClientDataset>& clients, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const Index d = gt.d();

    char buf[64];
    for (const auto& c : clients) {
        std::ofstream f(fs::path(dir) / ("client_" + std::to_string(c.client_id) + ".csv"));
        if (!f) throw std::runtime_error("dump_dataset: cannot open client CSV for writing");
        for (Index j = 0; j < d; ++j) f << "x" << j << ",";
        f << "y,z\n";
        for (Index r = 0; r < c.x_all.rows(); ++r) {
            for (Index j = 0; j < d; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", c.x_all(r, j));
                f << buf << ",";
            }
            std::snprintf(buf, sizeof buf, "%.17g", c.y_all[r]);
            f << buf << "," << c.z_all[static_cast<std::size_t>(r)] << "\n";
        }
    }

    nlohmann::json manifest;
    manifest["d"] = d;
    manifest["k"] = gt.k();
    manifest["M"] = gt.domains();
    manifest["n"] = clients.size();
    manifest["seed"] = seed;
    manifest["noise_sigma"] = gt.noise_sigma;
    manifest["task"] = gt.task == Task::regression ? "regression" : "binary_classification";
    auto& mix = manifest["mixtures"] = nlohmann::json::array();
    for (const auto& m : mixtures) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.pi.size(); ++j) row.push_back(m.pi[j]);
        mix.push_back(std::move(row));
    }
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("dump_dataset: cannot open manifest for writing");
    f << manifest.dump(2) << "\n";
}

}  // namespace feddar::datagen
