#ifndef FEDDAR_FLCORE_HPP
#define FEDDAR_FLCORE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "feddar/aggregate.hpp"
#include "feddar/datagen.hpp"
#include "feddar/model.hpp"

namespace feddar::flcore {

enum class Aggregation { weighted_average, second_order };
enum class Optimizer { gd, adam };

struct TrainConfig {
    int rounds = 1;         // T
    int head_steps = 1;     // tau_h
    int encoder_steps = 1;  // tau_phi
    double lr = 0.1;
    Aggregation agg = Aggregation::weighted_average;
    Optimizer optimizer = Optimizer::gd;
    Index k_rep = 1;
    std::optional<Index> k_proj;
    bool resample_each_round = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct HeadUpdateMsg {
    int domain;
    model::HeadParams head;
    Matrix hessian;  // k x k at the final local iterate
    Index count;     // L_{i,m}
    std::vector<double> loss_trace;
};

struct EncoderUpdateMsg {
    model::EncoderParams encoder;
    Index count;  // L_i
};

struct GlobalState {
    model::EncoderParams encoder;
    std::vector<model::HeadParams> heads;
    int round = 0;
};

struct RoundStats {
    int sa_fallbacks = 0;
    std::vector<int> kept_domains;  // domains with no samples this round
};

// u_m = L / (L_m * M) from pooled per-domain counts.
// Throws EmptyDomainError for a domain with no samples anywhere.
Vector domain_weights(const std::vector<std::vector<Index>>& counts_per_client);
Vector domain_weights(const std::vector<datagen::ClientDataset>& clients);

// tau_h full-batch steps per present domain, encoder frozen; one message per
// domain with data, carrying the final head, its Hessian and the count.
std::vector<HeadUpdateMsg> local_head_update(const datagen::ClientDataset& client,
                                             const GlobalState& state, const TrainConfig& cfg,
                                             model::TaskSpec task);

// tau_phi full-batch steps on the u-weighted client risk, heads frozen.
EncoderUpdateMsg local_encoder_update(const datagen::ClientDataset& client,
                                      const GlobalState& state, const TrainConfig& cfg,
                                      model::TaskSpec task, const Vector& u);

// One FedDAR communication round (Algorithm 1): broadcast, local head
// updates, per-domain aggregation (WA or SA), local encoder updates, encoder
// averaging weighted by L_i / L.
GlobalState feddar_round(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                         const TrainConfig& cfg, model::TaskSpec task, RoundStats* stats = nullptr,
                         int threads = 1);

// FedAvg: one shared head, tau_h + tau_phi joint local steps, then a single
// weighted average of all parameters.
GlobalState fedavg_round(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                         const TrainConfig& cfg, model::TaskSpec task, int threads = 1);

// FedRep: persistent per-client heads (never aggregated), shared encoder
// averaged as in FedAvg.
GlobalState fedrep_round(const GlobalState& state, std::vector<model::HeadParams>& client_heads,
                         const std::vector<datagen::ClientDataset>& clients, const TrainConfig& cfg,
                         model::TaskSpec task, int threads = 1);

struct LocalModel {
    model::EncoderParams encoder;
    model::HeadParams head;
};

// Local-only baseline: each client trains on its own data, no communication.
std::vector<LocalModel> local_only_round(const std::vector<LocalModel>& models,
                                         const std::vector<datagen::ClientDataset>& clients,
                                         const TrainConfig& cfg, model::TaskSpec task,
                                         int threads = 1);

// Client empirical risk with u_m re-weighting, and the per-domain pooled risk;
// these two satisfy sum_i (L_i/L) R_i = (1/M) sum_m R_m.
double client_risk(const GlobalState& state, const datagen::ClientDataset& client,
                   model::TaskSpec task, const Vector& u);
double domain_risk(const GlobalState& state, const std::vector<datagen::ClientDataset>& clients,
                   int domain, model::TaskSpec task);

// Deterministic parallel map: fn(i) runs on worker threads, results land in
// index order regardless of scheduling.
void parallel_for(Index count, int threads, const std::function<void(Index)>& fn);

// One optimizer step on a flat parameter vector.
struct OptimizerState {
    Vector m, v;
    int t = 0;
};
void optimizer_step(Optimizer opt, double lr, const Vector& grad, Vector& param,
                    OptimizerState& state);

}  // namespace feddar::flcore

#endif
