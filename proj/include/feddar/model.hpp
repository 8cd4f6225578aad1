#ifndef FEDDAR_MODEL_HPP
#define FEDDAR_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "feddar/datagen.hpp"
#include "feddar/types.hpp"

namespace feddar::model {

enum class EncoderKind { linear, mlp1 };

// Shared encoder phi. `linear` maps x -> B^T x; `mlp1` is one tanh hidden
// layer. An optional projection sits on top of the representation and is
// trained as part of the encoder; heads live in the projected space.
struct EncoderParams {
    EncoderKind kind = EncoderKind::linear;
    Matrix linear;  // d x k_rep (kind == linear)
    Matrix w1;      // d x h    (kind == mlp1)
    Vector b1;      // h
    Matrix w2;      // h x k_rep
    Vector b2;      // k_rep
    std::optional<Matrix> projection;  // k_rep x k_proj

    Index input_dim() const { return kind == EncoderKind::linear ? linear.rows() : w1.rows(); }
    Index rep_dim() const { return kind == EncoderKind::linear ? linear.cols() : b2.size(); }
    Index head_dim() const { return projection ? projection->cols() : rep_dim(); }
};

struct HeadParams {
    Vector w;
};

struct TaskSpec {
    enum class Kind { squared_error, binary_cross_entropy };
    Kind kind = Kind::squared_error;

    static TaskSpec for_task(datagen::Task t) {
        return {t == datagen::Task::regression ? Kind::squared_error
                                               : Kind::binary_cross_entropy};
    }
};

Vector encode(const EncoderParams& enc, const Vector& x);
// rows of `x` are samples; returns L x head_dim feature matrix
Matrix encode_batch(const EncoderParams& enc, const Matrix& x);

double predict(const EncoderParams& enc, const HeadParams& head, const Vector& x, TaskSpec task);
Vector predict_batch(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                     TaskSpec task);

// Mean over the batch of weight_j * loss_j. Squared error carries a 1/2;
// cross-entropy probabilities are clamped to [1e-12, 1-1e-12].
double batch_loss(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                  const Vector& y, TaskSpec task, const Vector& sample_weights);
double batch_loss(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                  const Vector& y, TaskSpec task);

Vector head_gradient(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                     const Vector& y, TaskSpec task);
Matrix head_hessian(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                    const Vector& y, TaskSpec task);

// Loss and gradient of the mean per-sample loss in one pass over
// precomputed features (the head-phase inner loop).
struct HeadEval {
    double loss;
    Vector grad;
};
HeadEval head_loss_grad_from_features(const Matrix& features, const Vector& y, const Vector& w,
                                      TaskSpec task);
Matrix head_hessian_from_features(const Matrix& features, const Vector& y, const Vector& w,
                                  TaskSpec task);

// Gradient of the weighted client risk (1/L) sum_j u_{z_j} loss_j with the
// heads frozen, with respect to every encoder parameter.
EncoderParams encoder_gradient(const EncoderParams& enc, const std::vector<HeadParams>& heads,
                               const Matrix& x, const Vector& y, const std::vector<int>& z,
                               TaskSpec task, const Vector& domain_weights);
double weighted_client_loss(const EncoderParams& enc, const std::vector<HeadParams>& heads,
                            const Matrix& x, const Vector& y, const std::vector<int>& z,
                            TaskSpec task, const Vector& domain_weights);

// Flat parameter views; layout is row-major per block, blocks in declaration
// order. Gradients reuse the EncoderParams shape.
Index param_count(const EncoderParams& enc);
Vector flatten(const EncoderParams& enc);
void unflatten(const Vector& flat, EncoderParams& enc);
EncoderParams zeros_like(const EncoderParams& enc);

// JSON checkpoint with dimension metadata, flat row-major parameter arrays,
// round number and config hash.
void save_checkpoint(const std::string& path, const EncoderParams& enc,
                     const std::vector<HeadParams>& heads, int round,
                     const std::string& config_hash);
struct Checkpoint {
    EncoderParams encoder;
    std::vector<HeadParams> heads;
    int round;
    std::string config_hash;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace feddar::model

#endif
