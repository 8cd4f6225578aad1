#ifndef FEDDAR_AGGREGATE_HPP
#define FEDDAR_AGGREGATE_HPP

#include <vector>

#include "feddar/model.hpp"
#include "feddar/types.hpp"

namespace feddar::agg {

struct AggWeights {
    Vector alpha;  // nonnegative, sums to 1

    static AggWeights from_counts(const std::vector<Index>& counts);
};

// Entrywise sum of alpha_i * value_i over shape-identical flat collections.
Vector weighted_average(const std::vector<Vector>& values, const AggWeights& weights);
model::HeadParams weighted_average_heads(const std::vector<model::HeadParams>& heads,
                                         const AggWeights& weights);
model::EncoderParams weighted_average_encoders(const std::vector<model::EncoderParams>& encoders,
                                               const AggWeights& weights);

struct RidgePolicy {
    double condition_threshold = 1e10;
    double ridge_coeff = 1e-8;
};

struct HeadContribution {
    model::HeadParams head;
    Matrix hessian;  // k x k, per-sample mean, symmetric PSD
    Index count;
};

struct SecondOrderResult {
    model::HeadParams head;
    bool used_fallback = false;  // weighted average taken because the pooled
                                 // Hessian stayed singular after the ridge
    double ridge = 0.0;
};

// Hessian-weighted head aggregation: solve (sum_i a_i H_i) w = sum_i a_i H_i w_i
// with a_i = count_i / sum(counts). Applies the ridge policy when the pooled
// Hessian is badly conditioned and falls back to the weighted average if the
// solve still fails.
SecondOrderResult second_order_aggregate(const std::vector<HeadContribution>& msgs,
                                         const RidgePolicy& policy = {});

}  // namespace feddar::agg

#endif
