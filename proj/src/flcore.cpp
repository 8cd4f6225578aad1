#include "feddar/flcore.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace feddar::flcore {

void TrainConfig::validate() const {
    if (rounds < 1 || head_steps < 1 || encoder_steps < 1)
        throw ConfigError("TrainConfig: rounds, head_steps and encoder_steps must be >= 1");
    if (lr <= 0) throw ConfigError("TrainConfig: lr must be positive");
    if (k_rep < 1) throw ConfigError("TrainConfig: k_rep must be >= 1");
    if (k_proj && *k_proj < 1) throw ConfigError("TrainConfig: k_proj must be >= 1");
}

void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    if (workers == 1) {
        for (Index i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const Index i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void optimizer_step(Optimizer opt, double lr, const Vector& grad, Vector& param,
                    OptimizerState& state) {
    if (opt == Optimizer::gd) {
        param -= lr * grad;
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.t == 0) {
        state.m = Vector::Zero(param.size());
        state.v = Vector::Zero(param.size());
    }
    ++state.t;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, state.t);
    const double c2 = 1.0 - std::pow(beta2, state.t);
    param -= (lr / c1) * state.m.cwiseQuotient(((state.v / c2).cwiseSqrt().array() + eps).matrix());
}

Vector domain_weights(const std::vector<std::vector<Index>>& counts_per_client) {
    if (counts_per_client.empty()) throw ValidationError("domain_weights: no clients");
    const std::size_t m = counts_per_client[0].size();
    std::vector<double> pooled(m, 0.0);
    double total = 0.0;
    for (const auto& counts : counts_per_client) {
        if (counts.size() != m) throw ValidationError("domain_weights: ragged counts");
        for (std::size_t j = 0; j < m; ++j) {
            pooled[j] += static_cast<double>(counts[j]);
            total += static_cast<double>(counts[j]);
        }
    }
    Vector u(static_cast<Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
        if (pooled[j] < 1.0) throw EmptyDomainError(static_cast<int>(j));
        u[static_cast<Index>(j)] = total / (pooled[j] * static_cast<double>(m));
    }
    return u;
}

Vector domain_weights(const std::vector<datagen::ClientDataset>& clients) {
    std::vector<std::vector<Index>> counts;
    counts.reserve(clients.size());
    for (const auto& c : clients) counts.push_back(c.counts);
    return domain_weights(counts);
}

std::vector<HeadUpdateMsg> local_head_update(const datagen::ClientDataset& client,
                                             const GlobalState& state, const TrainConfig& cfg,
                                             model::TaskSpec task) {
    std::vector<HeadUpdateMsg> msgs;
    const Index m = client.domains();
    for (Index dom = 0; dom < m; ++dom) {
        const Index count = client.counts[static_cast<std::size_t>(dom)];
        if (count == 0) continue;  // absent domain: no message
        // encoder frozen for the whole phase: features computed once
        const Matrix feats = model::encode_batch(state.encoder, client.x_by_domain[dom]);
        const Vector& y = client.y_by_domain[dom];

        HeadUpdateMsg msg;
        msg.domain = static_cast<int>(dom);
        msg.count = count;
        msg.head = state.heads[static_cast<std::size_t>(dom)];
        msg.loss_trace.reserve(static_cast<std::size_t>(cfg.head_steps));
        OptimizerState opt;
        for (int s = 0; s < cfg.head_steps; ++s) {
            const auto eval = model::head_loss_grad_from_features(feats, y, msg.head.w, task);
            msg.loss_trace.push_back(eval.loss);
            optimizer_step(cfg.optimizer, cfg.lr, eval.grad, msg.head.w, opt);
        }
        msg.hessian = model::head_hessian_from_features(feats, y, msg.head.w, task);
        msgs.push_back(std::move(msg));
    }
    return msgs;
}

EncoderUpdateMsg local_encoder_update(const datagen::ClientDataset& client,
                                      const GlobalState& state, const TrainConfig& cfg,
                                      model::TaskSpec task, const Vector& u) {
    EncoderUpdateMsg msg;
    msg.encoder = state.encoder;
    msg.count = client.total();
    Vector flat = model::flatten(msg.encoder);
    OptimizerState opt;
    for (int s = 0; s < cfg.encoder_steps; ++s) {
        const model::EncoderParams grad = model::encoder_gradient(
            msg.encoder, state.heads, client.x_all, client.y_all, client.z_all, task, u);
        optimizer_step(cfg.optimizer, cfg.lr, model::flatten(grad), flat, opt);
        model::unflatten(flat, msg.encoder);
    }
    return msg;
}

GlobalState feddar_round(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                         const TrainConfig& cfg, model::TaskSpec task, RoundStats* stats,
                         int threads) {
    const Index n = static_cast<Index>(clients.size());
    if (n == 0) throw ValidationError("feddar_round: no clients");
    const Index m = static_cast<Index>(state.heads.size());
    const Vector u = domain_weights(clients);

    // head phase
    std::vector<std::vector<HeadUpdateMsg>> all_msgs(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](Index i) {
        all_msgs[static_cast<std::size_t>(i)] =
            local_head_update(clients[static_cast<std::size_t>(i)], state, cfg, task);
    });

    GlobalState next = state;
    RoundStats local_stats;
    for (Index dom = 0; dom < m; ++dom) {
        std::vector<agg::HeadContribution> contributions;
        for (Index i = 0; i < n; ++i) {
            for (const auto& msg : all_msgs[static_cast<std::size_t>(i)]) {
                if (msg.domain == static_cast<int>(dom))
                    contributions.push_back({msg.head, msg.hessian, msg.count});
            }
        }
        if (contributions.empty()) {
            // nobody saw this domain this round: keep the previous head
            local_stats.kept_domains.push_back(static_cast<int>(dom));
            continue;
        }
        if (cfg.agg == Aggregation::second_order) {
            const auto result = agg::second_order_aggregate(contributions);
            next.heads[static_cast<std::size_t>(dom)] = result.head;
            if (result.used_fallback) ++local_stats.sa_fallbacks;
        } else {
            std::vector<model::HeadParams> heads;
            std::vector<Index> counts;
            for (const auto& c : contributions) {
                heads.push_back(c.head);
                counts.push_back(c.count);
            }
            next.heads[static_cast<std::size_t>(dom)] =
                agg::weighted_average_heads(heads, agg::AggWeights::from_counts(counts));
        }
    }

    // encoder phase against the freshly aggregated heads
    std::vector<EncoderUpdateMsg> enc_msgs(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](Index i) {
        enc_msgs[static_cast<std::size_t>(i)] =
            local_encoder_update(clients[static_cast<std::size_t>(i)], next, cfg, task, u);
    });
    std::vector<model::EncoderParams> encoders;
    std::vector<Index> counts;
    encoders.reserve(static_cast<std::size_t>(n));
    for (const auto& msg : enc_msgs) {
        encoders.push_back(msg.encoder);
        counts.push_back(msg.count);
    }
    next.encoder = agg::weighted_average_encoders(encoders, agg::AggWeights::from_counts(counts));
    next.round = state.round + 1;
    if (stats) *stats = std::move(local_stats);
    return next;
}

namespace {

// joint full-batch update of encoder plus one head on a single client
void joint_local_update(model::EncoderParams& enc, model::HeadParams& head,
                        const datagen::ClientDataset& client, const TrainConfig& cfg,
                        model::TaskSpec task, int steps) {
    const Index enc_size = model::param_count(enc);
    Vector flat(enc_size + head.w.size());
    flat.head(enc_size) = model::flatten(enc);
    flat.tail(head.w.size()) = head.w;
    const std::vector<model::HeadParams> heads = {head};
    const std::vector<int> zeros(static_cast<std::size_t>(client.x_all.rows()), 0);
    const Vector ones = Vector::Ones(1);

    OptimizerState opt;
    for (int s = 0; s < steps; ++s) {
        const model::EncoderParams enc_grad = model::encoder_gradient(
            enc, {head}, client.x_all, client.y_all, zeros, task, ones);
        const Vector head_grad =
            model::head_gradient(enc, head, client.x_all, client.y_all, task);
        Vector grad(flat.size());
        grad.head(enc_size) = model::flatten(enc_grad);
        grad.tail(head.w.size()) = head_grad;
        optimizer_step(cfg.optimizer, cfg.lr, grad, flat, opt);
        model::unflatten(flat.head(enc_size), enc);
        head.w = flat.tail(head.w.size());
    }
}

}  // namespace

GlobalState fedavg_round(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                         const TrainConfig& cfg, model::TaskSpec task, int threads) {
    const Index n = static_cast<Index>(clients.size());
    if (n == 0) throw ValidationError("fedavg_round: no clients");
    if (state.heads.size() != 1) throw ValidationError("fedavg_round: expects a single shared head");

    std::vector<model::EncoderParams> encoders(static_cast<std::size_t>(n), state.encoder);
    std::vector<model::HeadParams> heads(static_cast<std::size_t>(n), state.heads[0]);
    std::vector<Index> counts(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](Index i) {
        const auto& client = clients[static_cast<std::size_t>(i)];
        joint_local_update(encoders[static_cast<std::size_t>(i)], heads[static_cast<std::size_t>(i)],
                           client, cfg, task, cfg.head_steps + cfg.encoder_steps);
        counts[static_cast<std::size_t>(i)] = client.total();
    });

    GlobalState next = state;
    const auto weights = agg::AggWeights::from_counts(counts);
    next.encoder = agg::weighted_average_encoders(encoders, weights);
    next.heads[0] = agg::weighted_average_heads(heads, weights);
    next.round = state.round + 1;
    return next;
}

GlobalState fedrep_round(const GlobalState& state, std::vector<model::HeadParams>& client_heads,
                         const std::vector<datagen::ClientDataset>& clients, const TrainConfig& cfg,
                         model::TaskSpec task, int threads) {
    const Index n = static_cast<Index>(clients.size());
    if (n == 0) throw ValidationError("fedrep_round: no clients");
    if (client_heads.size() != clients.size())
        throw ValidationError("fedrep_round: one persistent head per client required");

    std::vector<model::EncoderParams> encoders(static_cast<std::size_t>(n), state.encoder);
    std::vector<Index> counts(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](Index i) {
        const auto& client = clients[static_cast<std::size_t>(i)];
        auto& head = client_heads[static_cast<std::size_t>(i)];
        // head phase on the client's own single head, encoder frozen
        const Matrix feats = model::encode_batch(state.encoder, client.x_all);
        OptimizerState head_opt;
        for (int s = 0; s < cfg.head_steps; ++s) {
            const auto eval =
                model::head_loss_grad_from_features(feats, client.y_all, head.w, task);
            optimizer_step(cfg.optimizer, cfg.lr, eval.grad, head.w, head_opt);
        }
        // encoder phase with the personal head frozen
        auto& enc = encoders[static_cast<std::size_t>(i)];
        const std::vector<int> zeros(static_cast<std::size_t>(client.x_all.rows()), 0);
        const Vector ones = Vector::Ones(1);
        Vector flat = model::flatten(enc);
        OptimizerState enc_opt;
        for (int s = 0; s < cfg.encoder_steps; ++s) {
            const model::EncoderParams grad = model::encoder_gradient(
                enc, {head}, client.x_all, client.y_all, zeros, task, ones);
            optimizer_step(cfg.optimizer, cfg.lr, model::flatten(grad), flat, enc_opt);
            model::unflatten(flat, enc);
        }
        counts[static_cast<std::size_t>(i)] = client.total();
    });

    GlobalState next = state;
    next.encoder =
        agg::weighted_average_encoders(encoders, agg::AggWeights::from_counts(counts));
    next.round = state.round + 1;
    return next;
}

std::vector<LocalModel> local_only_round(const std::vector<LocalModel>& models,
                                         const std::vector<datagen::ClientDataset>& clients,
                                         const TrainConfig& cfg, model::TaskSpec task,
                                         int threads) {
    if (models.size() != clients.size())
        throw ValidationError("local_only_round: one model per client required");
    std::vector<LocalModel> next = models;
    parallel_for(static_cast<Index>(clients.size()), threads, [&](Index i) {
        auto& m = next[static_cast<std::size_t>(i)];
        joint_local_update(m.encoder, m.head, clients[static_cast<std::size_t>(i)], cfg, task,
                           cfg.head_steps + cfg.encoder_steps);
    });
    return next;
}

double client_risk(const GlobalState& state, const datagen::ClientDataset& client,
                   model::TaskSpec task, const Vector& u) {
    return model::weighted_client_loss(state.encoder, state.heads, client.x_all, client.y_all,
                                       client.z_all, task, u);
}

double domain_risk(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                   int domain, model::TaskSpec task) {
    double acc = 0.0;
    Index total = 0;
    for (const auto& client : clients) {
        const Index count = client.counts[static_cast<std::size_t>(domain)];
        if (count == 0) continue;
        const double risk = model::batch_loss(state.encoder, state.heads[static_cast<std::size_t>(domain)],
                                              client.x_by_domain[domain], client.y_by_domain[domain],
                                              task);
        acc += static_cast<double>(count) * risk;
        total += count;
    }
    if (total == 0) throw EmptyDomainError(domain);
    return acc / static_cast<double>(total);
}

}  // namespace feddar::flcore
