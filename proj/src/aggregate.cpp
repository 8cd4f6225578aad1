#include "feddar/aggregate.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "feddar/numerics.hpp"

namespace feddar::agg {

AggWeights AggWeights::from_counts(const std::vector<Index>& counts) {
    if (counts.empty()) throw ValidationError("AggWeights: empty contributor list");
    double total = 0.0;
    for (Index c : counts) {
        if (c < 0) throw ValidationError("AggWeights: negative count");
        total += static_cast<double>(c);
    }
    if (total <= 0.0) throw ValidationError("AggWeights: all counts are zero");
    AggWeights w;
    w.alpha.resize(static_cast<Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i)
        w.alpha[static_cast<Index>(i)] = static_cast<double>(counts[i]) / total;
    return w;
}

Vector weighted_average(const std::vector<Vector>& values, const AggWeights& weights) {
    if (values.empty()) throw ValidationError("weighted_average: empty contributor list");
    if (static_cast<Index>(values.size()) != weights.alpha.size())
        throw ValidationError("weighted_average: weight count mismatch");
    Vector out = Vector::Zero(values[0].size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != out.size())
            throw ValidationError("weighted_average: shape mismatch between contributors");
        out += weights.alpha[static_cast<Index>(i)] * values[i];
    }
    return out;
}

model::HeadParams weighted_average_heads(const std::vector<model::HeadParams>& heads,
                                         const AggWeights& weights) {
    std::vector<Vector> flat;
    flat.reserve(heads.size());
    for (const auto& h : heads) flat.push_back(h.w);
    return {weighted_average(flat, weights)};
}

model::EncoderParams weighted_average_encoders(const std::vector<model::EncoderParams>& encoders,
                                               const AggWeights& weights) {
    if (encoders.empty()) throw ValidationError("weighted_average: empty contributor list");
    std::vector<Vector> flat;
    flat.reserve(encoders.size());
    for (const auto& e : encoders) flat.push_back(model::flatten(e));
    model::EncoderParams out = encoders[0];
    model::unflatten(weighted_average(flat, weights), out);
    return out;
}

SecondOrderResult second_order_aggregate(const std::vector<HeadContribution>& msgs,
                                         const RidgePolicy& policy) {
    if (msgs.empty()) throw ValidationError("second_order_aggregate: no messages");
    const Index k = msgs[0].head.w.size();

    std::vector<Index> counts;
    counts.reserve(msgs.size());
    for (const auto& m : msgs) {
        if (m.head.w.size() != k || m.hessian.rows() != k || m.hessian.cols() != k)
            throw ValidationError("second_order_aggregate: shape mismatch between messages");
        counts.push_back(m.count);
    }
    const AggWeights weights = AggWeights::from_counts(counts);

    Matrix pooled = Matrix::Zero(k, k);
    Vector rhs = Vector::Zero(k);
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        const double a = weights.alpha[static_cast<Index>(i)];
        pooled += a * msgs[i].hessian;
        rhs += a * (msgs[i].hessian * msgs[i].head.w);
    }

    SecondOrderResult result;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (pooled + pooled.transpose()));
    const double lam_min = eig.eigenvalues().minCoeff();
    const double lam_max = eig.eigenvalues().maxCoeff();
    const bool ill = lam_min <= 0.0 || lam_max / lam_min > policy.condition_threshold;
    if (ill) result.ridge = policy.ridge_coeff * pooled.trace() / static_cast<double>(k);

    try {
        result.head.w = numerics::solve_spd(pooled, rhs, result.ridge);
        if (!result.head.w.allFinite()) throw SingularMatrixError(lam_min);
    } catch (const SingularMatrixError&) {
        std::vector<model::HeadParams> heads;
        heads.reserve(msgs.size());
        for (const auto& m : msgs) heads.push_back(m.head);
        result.head = weighted_average_heads(heads, weights);
        result.used_fallback = true;
    }
    return result;
}

}  // namespace feddar::agg
