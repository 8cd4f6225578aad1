#include "feddar/linear_theory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "feddar/numerics.hpp"
#include "feddar/rng.hpp"

namespace feddar::lintheory {

namespace {
constexpr std::uint64_t kInitTag = 0x6d6f6d696e697400ULL;
constexpr std::uint64_t kHeadTag = 0x6865616473000000ULL;
constexpr std::uint64_t kEncTag = 0x656e636f64657200ULL;

struct Batch {
    Matrix x;
    Vector y;
    std::vector<int> z;
};

Batch draw_batch(const datagen::SyntheticGroundTruth& gt, const Vector& pi, Index samples,
                 Rng& rng) {
    Batch b;
    const Index d = gt.d();
    b.x.resize(samples, d);
    b.y.resize(samples);
    b.z.resize(static_cast<std::size_t>(samples));
    const Matrix effective = gt.b_star * gt.w_star.transpose();
    for (Index j = 0; j < samples; ++j) {
        const int z = rng.categorical(pi);
        const Vector x = rng.normal_vector(d);
        b.x.row(j) = x.transpose();
        b.y[j] = effective.col(z).dot(x) + gt.noise_sigma * rng.normal();
        b.z[static_cast<std::size_t>(j)] = z;
    }
    return b;
}

}  // namespace

std::vector<DomainSuffStats> collect_domain_stats(const Matrix& b, const Matrix& x,
                                                  const Vector& y, const std::vector<int>& z,
                                                  Index domains) {
    const Index k = b.cols();
    const Matrix features = x * b;
    std::vector<DomainSuffStats> out;
    out.reserve(static_cast<std::size_t>(domains));
    for (Index m = 0; m < domains; ++m)
        out.push_back({static_cast<int>(m), Matrix::Zero(k, k), Vector::Zero(k), 0});
    for (Index j = 0; j < x.rows(); ++j) {
        auto& s = out[static_cast<std::size_t>(z[static_cast<std::size_t>(j)])];
        const Vector phi = features.row(j).transpose();
        s.a_mat.noalias() += phi * phi.transpose();
        s.a_vec.noalias() += y[j] * phi;
        ++s.count;
    }
    return out;
}

std::vector<DomainSuffStats> pool_stats(const std::vector<std::vector<DomainSuffStats>>& per_client,
                                        Index domains) {
    if (per_client.empty()) throw ValidationError("pool_stats: no contributions");
    std::vector<DomainSuffStats> pooled;
    for (Index m = 0; m < domains; ++m) {
        const auto& first = per_client[0][static_cast<std::size_t>(m)];
        DomainSuffStats acc{static_cast<int>(m), Matrix::Zero(first.a_mat.rows(), first.a_mat.cols()),
                            Vector::Zero(first.a_vec.size()), 0};
        for (const auto& client : per_client) {
            const auto& s = client[static_cast<std::size_t>(m)];
            if (s.domain != static_cast<int>(m)) throw ValidationError("pool_stats: domain order");
            acc.a_mat += s.a_mat;
            acc.a_vec += s.a_vec;
            acc.count += s.count;
        }
        pooled.push_back(std::move(acc));
    }
    return pooled;
}

Matrix exact_head_solve(const std::vector<DomainSuffStats>& pooled, Index rank) {
    Matrix w(static_cast<Index>(pooled.size()), rank);
    for (std::size_t m = 0; m < pooled.size(); ++m) {
        const auto& s = pooled[m];
        if (s.count == 0)
            throw EmptyDomainError(static_cast<int>(m));
        try {
            w.row(static_cast<Index>(m)) = numerics::solve_spd(s.a_mat, s.a_vec, 0.0).transpose();
        } catch (const SingularMatrixError&) {
            const double ridge = 1e-8 * s.a_mat.trace() / static_cast<double>(rank);
            w.row(static_cast<Index>(m)) =
                numerics::solve_spd(s.a_mat, s.a_vec, ridge).transpose();
        }
    }
    return w;
}

std::vector<EncoderGradStats> collect_encoder_grads(const Matrix& b, const Matrix& w,
                                                    const Matrix& x, const Vector& y,
                                                    const std::vector<int>& z, Index domains) {
    std::vector<EncoderGradStats> out;
    out.reserve(static_cast<std::size_t>(domains));
    for (Index m = 0; m < domains; ++m)
        out.push_back({static_cast<int>(m), Matrix::Zero(b.rows(), b.cols()), 0});
    const Matrix features = x * b;  // L x k
    for (Index j = 0; j < x.rows(); ++j) {
        const int m = z[static_cast<std::size_t>(j)];
        auto& s = out[static_cast<std::size_t>(m)];
        const double residual = features.row(j).dot(w.row(m)) - y[j];
        s.grad.noalias() += residual * (x.row(j).transpose() * w.row(m));
        ++s.count;
    }
    return out;
}

Matrix encoder_step(const Matrix& b, const std::vector<EncoderGradStats>& pooled_grads,
                    double eta, Index domains) {
    if (eta <= 0) throw ValidationError("encoder_step: eta must be positive");
    Matrix step = Matrix::Zero(b.rows(), b.cols());
    for (const auto& g : pooled_grads) {
        if (g.count == 0) continue;
        step += g.grad / static_cast<double>(g.count);
    }
    const Matrix b_tilde = b - (eta / static_cast<double>(domains)) * step;
    return numerics::qr_orthonormalize(b_tilde).q;
}

MomInitResult mom_init(const std::vector<Matrix>& client_x, const std::vector<Vector>& client_y,
                       Index rank) {
    if (client_x.empty() || client_x.size() != client_y.size())
        throw ValidationError("mom_init: malformed client data");
    const Index d = client_x[0].cols();
    Matrix z = Matrix::Zero(d, d);
    Index total = 0;
    for (std::size_t i = 0; i < client_x.size(); ++i) {
        const Matrix& x = client_x[i];
        const Vector& y = client_y[i];
        if (x.rows() != y.size() || x.rows() < 1)
            throw ValidationError("mom_init: each client needs at least one sample");
        // Z_i = sum_j y_j^2 x_j x_j^T
        z.noalias() += x.transpose() * (y.array().square().matrix().asDiagonal() * x);
        total += x.rows();
    }
    z /= static_cast<double>(total);
    const auto eigs = numerics::top_k_eigvecs(0.5 * (z + z.transpose()), rank);
    return {eigs.vectors, eigs.gap_collapsed};
}

Alg2Result run_algorithm2(const Alg2Config& cfg) {
    if (cfg.rank > cfg.dim || cfg.domains < 1 || cfg.clients < 1)
        throw ConfigError("run_algorithm2: invalid dimensions");
    if (cfg.samples_per_client < 1 || cfg.init_samples < 1)
        throw ConfigError("run_algorithm2: need positive sample counts");

    Alg2Result result;
    result.ground_truth =
        datagen::sample_ground_truth(cfg.dim, cfg.rank, cfg.domains, cfg.noise_sigma,
                                     datagen::Task::regression, cfg.seed, cfg.head_gen);
    const auto& gt = result.ground_truth;
    result.sigma_max_bar = gt.sigma_max_bar();
    result.sigma_min_bar = gt.sigma_min_bar();

    const double eta_bound = 1.0 / (4.0 * result.sigma_max_bar * result.sigma_max_bar);
    const double eta = cfg.eta > 0 ? cfg.eta : eta_bound;
    if (eta > eta_bound * (1.0 + 1e-12))
        throw ConfigError("run_algorithm2: eta exceeds the admissible 1/(4 sigma_max_bar^2)");
    result.eta_used = eta;

    // uniform mixtures: the regime of the convergence analysis
    const Vector pi = Vector::Constant(cfg.domains, 1.0 / static_cast<double>(cfg.domains));

    // initialization phase
    std::vector<Matrix> init_x;
    std::vector<Vector> init_y;
    for (Index i = 0; i < cfg.clients; ++i) {
        Rng rng(Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(i), kInitTag));
        Batch b = draw_batch(gt, pi, cfg.init_samples, rng);
        init_x.push_back(std::move(b.x));
        init_y.push_back(std::move(b.y));
    }
    const auto init = mom_init(init_x, init_y, cfg.rank);
    result.init_gap_collapsed = init.gap_collapsed;
    Matrix b = init.basis;

    const double dist0 = numerics::principal_angle_dist(gt.b_star, b);
    const double e0 = 1.0 - dist0 * dist0;
    const double rate = 1.0 - eta * e0 * result.sigma_min_bar * result.sigma_min_bar / 2.0;

    result.records.push_back({0, dist0, dist0, Vector()});

    // fixed-sample mode draws one dataset per client up front and reuses it
    std::vector<Batch> fixed;
    if (!cfg.resample) {
        for (Index i = 0; i < cfg.clients; ++i) {
            Rng rng(Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(i), kHeadTag));
            fixed.push_back(draw_batch(gt, pi, cfg.samples_per_client, rng));
        }
    }

    Matrix w = Matrix::Zero(cfg.domains, cfg.rank);
    for (int t = 1; t <= cfg.rounds; ++t) {
        // head phase
        std::vector<std::vector<DomainSuffStats>> stats;
        std::vector<Batch> head_batches;
        for (Index i = 0; i < cfg.clients; ++i) {
            Batch batch;
            if (cfg.resample) {
                Rng rng(Rng::derive_seed(
                    cfg.seed, static_cast<std::uint64_t>(i) * 0x10001ULL + static_cast<std::uint64_t>(t),
                    kHeadTag));
                batch = draw_batch(gt, pi, cfg.samples_per_client, rng);
            } else {
                batch = fixed[static_cast<std::size_t>(i)];
            }
            stats.push_back(collect_domain_stats(b, batch.x, batch.y, batch.z, cfg.domains));
            head_batches.push_back(std::move(batch));
        }
        w = exact_head_solve(pool_stats(stats, cfg.domains), cfg.rank);

        // encoder phase
        std::vector<std::vector<EncoderGradStats>> grads;
        std::vector<Batch> enc_batches;
        for (Index i = 0; i < cfg.clients; ++i) {
            Batch batch;
            if (cfg.resample) {
                Rng rng(Rng::derive_seed(
                    cfg.seed, static_cast<std::uint64_t>(i) * 0x10001ULL + static_cast<std::uint64_t>(t),
                    kEncTag));
                batch = draw_batch(gt, pi, cfg.samples_per_client, rng);
            } else {
                batch = fixed[static_cast<std::size_t>(i)];
            }
            grads.push_back(collect_encoder_grads(b, w, batch.x, batch.y, batch.z, cfg.domains));
            enc_batches.push_back(std::move(batch));
        }
        std::vector<EncoderGradStats> pooled;
        for (Index m = 0; m < cfg.domains; ++m) {
            EncoderGradStats acc{static_cast<int>(m), Matrix::Zero(cfg.dim, cfg.rank), 0};
            for (const auto& g : grads) {
                acc.grad += g[static_cast<std::size_t>(m)].grad;
                acc.count += g[static_cast<std::size_t>(m)].count;
            }
            pooled.push_back(std::move(acc));
        }
        b = encoder_step(b, pooled, eta, cfg.domains);

        // round record: risk of (W^{t+1}, B^{t+1}) on this round's encoder batches
        Vector risk = Vector::Zero(cfg.domains);
        Vector counts = Vector::Zero(cfg.domains);
        for (const auto& batch : enc_batches) {
            const Matrix features = batch.x * b;
            for (Index j = 0; j < batch.x.rows(); ++j) {
                const int m = batch.z[static_cast<std::size_t>(j)];
                const double r = features.row(j).dot(w.row(m)) - batch.y[j];
                risk[m] += r * r;
                counts[m] += 1.0;
            }
        }
        for (Index m = 0; m < cfg.domains; ++m)
            risk[m] = counts[m] > 0 ? risk[m] / counts[m] : std::numeric_limits<double>::quiet_NaN();

        const double dist = numerics::principal_angle_dist(gt.b_star, b);
        const double bound = std::pow(std::max(rate, 0.0), static_cast<double>(t) / 2.0) * dist0;
        result.records.push_back({t, dist, bound, risk});
    }
    result.final_b = b;
    result.final_w = w;
    return result;
}

void write_trajectory_csv(const std::string& path, const Alg2Result& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
    const Index domains = result.final_w.rows();
    f << "round,dist,predicted_upper_bound";
    for (Index m = 0; m < domains; ++m) f << ",domain_" << m << "_risk";
    f << "\n";
    char buf[64];
    for (const auto& rec : result.records) {
        f << rec.round;
        std::snprintf(buf, sizeof buf, ",%.17g", rec.dist);
        f << buf;
        std::snprintf(buf, sizeof buf, ",%.17g", rec.predicted_upper_bound);
        f << buf;
        for (Index m = 0; m < domains; ++m) {
            if (rec.domain_risk.size() == 0) {
                f << ",nan";
            } else {
                std::snprintf(buf, sizeof buf, ",%.17g", rec.domain_risk[m]);
                f << buf;
            }
        }
        f << "\n";
    }
}

}  // namespace feddar::lintheory
