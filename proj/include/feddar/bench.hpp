#ifndef FEDDAR_BENCH_HPP
#define FEDDAR_BENCH_HPP

#include <optional>
#include <string>
#include <vector>

#include "feddar/flcore.hpp"
#include "feddar/linear_theory.hpp"
#include "json.hpp"

namespace feddar::bench {

enum class Method { local_only, fedavg, fedrep, feddar_wa, feddar_sa, algorithm2 };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct DatasetConfig {
    Index d = 20;
    Index k = 2;
    Index domains = 5;  // M
    Index clients = 1;  // n
    Index samples_per_client = 20;
    double noise_sigma = 0.0;
    double alpha_dir = 0.4;
    std::optional<Vector> prior;  // default uniform
    datagen::Task task = datagen::Task::regression;
    std::uint64_t seed = 0;
    datagen::HeadGen head_gen = datagen::HeadGen::sphere_rows;
};

struct EvaluationConfig {
    Index test_samples_per_domain = 1000;
    int metric_window = 10;
};

struct Alg2Block {
    Index init_samples = 200;
    double eta = 0.0;  // 0 selects the maximal admissible step size
};

struct EncoderConfig {
    model::EncoderKind kind = model::EncoderKind::linear;
    Index hidden = 16;  // mlp1 only
};

struct ExperimentConfig {
    DatasetConfig dataset;
    Method method = Method::feddar_sa;
    flcore::TrainConfig train;
    EncoderConfig encoder;
    Alg2Block algorithm2;
    EvaluationConfig evaluation;

    nlohmann::json to_json() const;
    std::string hash() const;  // FNV-1a of the canonical JSON dump
};

// Parses and validates a config document; unknown keys are rejected at every
// level. The accepted shape is published in schemas/experiment_config.schema.json.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

struct RoundMetrics {
    int round = 0;
    Vector domain_risk;
    double min_risk = 0, avg_risk = 0, max_risk = 0;
    double dist = std::numeric_limits<double>::quiet_NaN();
    int sa_fallbacks = 0;
    double wall_time_sec = 0;
};

struct MetricsLog {
    nlohmann::json config;
    std::vector<RoundMetrics> records;
};

struct EvalResult {
    Vector domain_risk;
    double min_risk, avg_risk, max_risk;
    double dist = std::numeric_limits<double>::quiet_NaN();
};

// Per-domain noiseless-test risk of a domain-headed model (heads[m] scores
// domain m). With one head, that head scores every domain.
EvalResult evaluate(const flcore::GlobalState& state,
                    const datagen::SyntheticGroundTruth* ground_truth,
                    const std::vector<datagen::DomainTestSet>& test_sets, model::TaskSpec task);

// Client-personalized models: domain m averages the client scores weighted by
// the client's share of domain-m training data.
EvalResult evaluate_client_models(const std::vector<model::EncoderParams>& encoders,
                                  const std::vector<model::HeadParams>& heads,
                                  const std::vector<datagen::ClientDataset>& clients,
                                  const datagen::SyntheticGroundTruth* ground_truth,
                                  const std::vector<datagen::DomainTestSet>& test_sets,
                                  model::TaskSpec task);

struct ExperimentResult {
    MetricsLog log;
    flcore::GlobalState final_state;              // methods with a server model
    std::vector<model::HeadParams> client_heads;  // fedrep
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1);

// Average of avg_risk over the final `window` rounds.
double final_window_avg(const MetricsLog& log, int window);

enum class EmitFormat { csv, json };
void emit_results(const MetricsLog& log, const std::string& path, EmitFormat format);
MetricsLog read_metrics_json(const std::string& path);

struct SweepSpec {
    std::string parameter;  // "samples_per_client" or "alpha_dir"
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
};

SweepSpec parse_sweep(const nlohmann::json& doc);

struct SweepPoint {
    double value;
    std::uint64_t seed;
    std::string file_stem;
    double final_avg_risk;
};

// One experiment per (value, seed); emits a log per grid point plus
// manifest.json recording the grid.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, const SweepSpec& sweep,
                                  const std::string& out_dir, EmitFormat format, int threads);

// Quick built-in invariant checks; prints one line per check.
bool selftest();

}  // namespace feddar::bench

#endif
