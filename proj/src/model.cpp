#include "feddar/model.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace feddar::model {

namespace {

constexpr double kProbClamp = 1e-12;

inline double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

void check_input_dim(const EncoderParams& enc, Index dim) {
    if (dim != enc.input_dim()) throw ValidationError("encoder: input dimension mismatch");
}

// representation before the projection layer
Matrix representation_batch(const EncoderParams& enc, const Matrix& x) {
    if (enc.kind == EncoderKind::linear) return x * enc.linear;
    Matrix a1 = ((x * enc.w1).rowwise() + enc.b1.transpose()).array().tanh().matrix();
    return (a1 * enc.w2).rowwise() + enc.b2.transpose();
}

}  // namespace

Matrix encode_batch(const EncoderParams& enc, const Matrix& x) {
    check_input_dim(enc, x.cols());
    Matrix rep = representation_batch(enc, x);
    if (enc.projection) return rep * (*enc.projection);
    return rep;
}

Vector encode(const EncoderParams& enc, const Vector& x) {
    return encode_batch(enc, x.transpose()).row(0).transpose();
}

Vector predict_batch(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                     TaskSpec task) {
    Vector s = encode_batch(enc, x) * head.w;
    if (task.kind == TaskSpec::Kind::binary_cross_entropy)
        for (Index j = 0; j < s.size(); ++j) s[j] = sigmoid(s[j]);
    return s;
}

double predict(const EncoderParams& enc, const HeadParams& head, const Vector& x, TaskSpec task) {
    return predict_batch(enc, head, x.transpose(), task)[0];
}

HeadEval head_loss_grad_from_features(const Matrix& features, const Vector& y, const Vector& w,
                                      TaskSpec task) {
    const Index count = features.rows();
    if (count == 0) throw ValidationError("head update: empty batch");
    const double inv = 1.0 / static_cast<double>(count);
    Vector s = features * w;
    HeadEval out;
    if (task.kind == TaskSpec::Kind::squared_error) {
        Vector r = s - y;
        out.loss = 0.5 * inv * r.squaredNorm();
        out.grad = inv * (features.transpose() * r);
    } else {
        double loss = 0.0;
        Vector r(count);
        for (Index j = 0; j < count; ++j) {
            const double mu = sigmoid(s[j]);
            const double mu_c = std::min(std::max(mu, kProbClamp), 1.0 - kProbClamp);
            loss -= y[j] * std::log(mu_c) + (1.0 - y[j]) * std::log(1.0 - mu_c);
            r[j] = mu - y[j];
        }
        out.loss = loss * inv;
        out.grad = inv * (features.transpose() * r);
    }
    return out;
}

Matrix head_hessian_from_features(const Matrix& features, const Vector& y, const Vector& w,
                                  TaskSpec task) {
    const Index count = features.rows();
    if (count == 0) throw ValidationError("head_hessian: empty batch");
    const double inv = 1.0 / static_cast<double>(count);
    if (task.kind == TaskSpec::Kind::squared_error)
        return inv * (features.transpose() * features);
    Vector s = features * w;
    Vector diag(count);
    for (Index j = 0; j < count; ++j) {
        const double mu = sigmoid(s[j]);
        diag[j] = mu * (1.0 - mu);
    }
    return inv * (features.transpose() * diag.asDiagonal() * features);
}

double batch_loss(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                  const Vector& y, TaskSpec task, const Vector& sample_weights) {
    const Index count = x.rows();
    if (count == 0) throw ValidationError("batch_loss: empty batch");
    if (sample_weights.size() != count) throw ValidationError("batch_loss: weight length mismatch");
    Vector s = encode_batch(enc, x) * head.w;
    double acc = 0.0;
    for (Index j = 0; j < count; ++j) {
        double loss_j;
        if (task.kind == TaskSpec::Kind::squared_error) {
            const double r = s[j] - y[j];
            loss_j = 0.5 * r * r;
        } else {
            const double mu = sigmoid(s[j]);
            const double mu_c = std::min(std::max(mu, kProbClamp), 1.0 - kProbClamp);
            loss_j = -(y[j] * std::log(mu_c) + (1.0 - y[j]) * std::log(1.0 - mu_c));
        }
        acc += sample_weights[j] * loss_j;
    }
    return acc / static_cast<double>(count);
}

double batch_loss(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                  const Vector& y, TaskSpec task) {
    return batch_loss(enc, head, x, y, task, Vector::Ones(x.rows()));
}

Vector head_gradient(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                     const Vector& y, TaskSpec task) {
    return head_loss_grad_from_features(encode_batch(enc, x), y, head.w, task).grad;
}

Matrix head_hessian(const EncoderParams& enc, const HeadParams& head, const Matrix& x,
                    const Vector& y, TaskSpec task) {
    return head_hessian_from_features(encode_batch(enc, x), y, head.w, task);
}

double weighted_client_loss(const EncoderParams& enc, const std::vector<HeadParams>& heads,
                            const Matrix& x, const Vector& y, const std::vector<int>& z,
                            TaskSpec task, const Vector& domain_weights) {
    const Index count = x.rows();
    if (count == 0) throw ValidationError("weighted_client_loss: empty batch");
    Matrix feats = encode_batch(enc, x);
    double acc = 0.0;
    for (Index j = 0; j < count; ++j) {
        const int m = z[static_cast<std::size_t>(j)];
        if (m < 0 || m >= static_cast<int>(heads.size()))
            throw ValidationError("weighted_client_loss: sample domain has no head");
        const double s = feats.row(j).dot(heads[static_cast<std::size_t>(m)].w);
        double loss_j;
        if (task.kind == TaskSpec::Kind::squared_error) {
            const double r = s - y[j];
            loss_j = 0.5 * r * r;
        } else {
            const double mu = sigmoid(s);
            const double mu_c = std::min(std::max(mu, kProbClamp), 1.0 - kProbClamp);
            loss_j = -(y[j] * std::log(mu_c) + (1.0 - y[j]) * std::log(1.0 - mu_c));
        }
        acc += domain_weights[m] * loss_j;
    }
    return acc / static_cast<double>(count);
}

EncoderParams encoder_gradient(const EncoderParams& enc, const std::vector<HeadParams>& heads,
                               const Matrix& x, const Vector& y, const std::vector<int>& z,
                               TaskSpec task, const Vector& domain_weights) {
    const Index count = x.rows();
    if (count == 0) throw ValidationError("encoder_gradient: empty batch");
    check_input_dim(enc, x.cols());

    const Index k_head = enc.head_dim();
    // stack the frozen head of each sample's domain
    Matrix head_rows(count, k_head);
    Vector weight(count);
    for (Index j = 0; j < count; ++j) {
        const int m = z[static_cast<std::size_t>(j)];
        if (m < 0 || m >= static_cast<int>(heads.size()))
            throw ValidationError("encoder_gradient: sample domain has no head");
        head_rows.row(j) = heads[static_cast<std::size_t>(m)].w.transpose();
        weight[j] = domain_weights[m];
    }

    Matrix a1;  // tanh activations, mlp1 only
    Matrix rep;
    if (enc.kind == EncoderKind::linear) {
        rep = x * enc.linear;
    } else {
        a1 = ((x * enc.w1).rowwise() + enc.b1.transpose()).array().tanh().matrix();
        rep = (a1 * enc.w2).rowwise() + enc.b2.transpose();
    }
    Matrix feats = enc.projection ? Matrix(rep * (*enc.projection)) : rep;

    Vector s = (feats.cwiseProduct(head_rows)).rowwise().sum();
    Vector dl(count);
    const double inv = 1.0 / static_cast<double>(count);
    for (Index j = 0; j < count; ++j) {
        const double residual =
            task.kind == TaskSpec::Kind::squared_error ? s[j] - y[j] : sigmoid(s[j]) - y[j];
        dl[j] = residual * weight[j] * inv;
    }

    Matrix g_feats = dl.asDiagonal() * head_rows;  // count x k_head
    EncoderParams grad = zeros_like(enc);
    Matrix g_rep;
    if (enc.projection) {
        grad.projection = rep.transpose() * g_feats;
        g_rep = g_feats * enc.projection->transpose();
    } else {
        g_rep = std::move(g_feats);
    }
    if (enc.kind == EncoderKind::linear) {
        grad.linear = x.transpose() * g_rep;
    } else {
        grad.b2 = g_rep.colwise().sum().transpose();
        grad.w2 = a1.transpose() * g_rep;
        Matrix g_a1 = g_rep * enc.w2.transpose();
        Matrix g_z1 = g_a1.cwiseProduct((1.0 - a1.array().square()).matrix());
        grad.b1 = g_z1.colwise().sum().transpose();
        grad.w1 = x.transpose() * g_z1;
    }
    return grad;
}

Index param_count(const EncoderParams& enc) {
    Index n = 0;
    if (enc.kind == EncoderKind::linear) {
        n += enc.linear.size();
    } else {
        n += enc.w1.size() + enc.b1.size() + enc.w2.size() + enc.b2.size();
    }
    if (enc.projection) n += enc.projection->size();
    return n;
}

namespace {
void copy_out(const Matrix& m, Vector& flat, Index& pos) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) flat[pos++] = m(r, c);
}
void copy_out(const Vector& v, Vector& flat, Index& pos) {
    for (Index r = 0; r < v.size(); ++r) flat[pos++] = v[r];
}
void copy_in(Matrix& m, const Vector& flat, Index& pos) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = flat[pos++];
}
void copy_in(Vector& v, const Vector& flat, Index& pos) {
    for (Index r = 0; r < v.size(); ++r) v[r] = flat[pos++];
}
}  // namespace

Vector flatten(const EncoderParams& enc) {
    Vector flat(param_count(enc));
    Index pos = 0;
    if (enc.kind == EncoderKind::linear) {
        copy_out(enc.linear, flat, pos);
    } else {
        copy_out(enc.w1, flat, pos);
        copy_out(enc.b1, flat, pos);
        copy_out(enc.w2, flat, pos);
        copy_out(enc.b2, flat, pos);
    }
    if (enc.projection) copy_out(*enc.projection, flat, pos);
    return flat;
}

void unflatten(const Vector& flat, EncoderParams& enc) {
    if (flat.size() != param_count(enc)) throw ValidationError("unflatten: size mismatch");
    Index pos = 0;
    if (enc.kind == EncoderKind::linear) {
        copy_in(enc.linear, flat, pos);
    } else {
        copy_in(enc.w1, flat, pos);
        copy_in(enc.b1, flat, pos);
        copy_in(enc.w2, flat, pos);
        copy_in(enc.b2, flat, pos);
    }
    if (enc.projection) copy_in(*enc.projection, flat, pos);
}

EncoderParams zeros_like(const EncoderParams& enc) {
    EncoderParams z = enc;
    if (z.kind == EncoderKind::linear) {
        z.linear.setZero();
    } else {
        z.w1.setZero();
        z.b1.setZero();
        z.w2.setZero();
        z.b2.setZero();
    }
    if (z.projection) z.projection->setZero();
    return z;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    auto& data = j["data"] = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
    const auto& data = j.at("data");
    if (static_cast<Index>(data.size()) != m.size())
        throw ValidationError("checkpoint: matrix payload size mismatch");
    Index pos = 0;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = data[pos++].get<double>();
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderParams& enc,
                     const std::vector<HeadParams>& heads, int round,
                     const std::string& config_hash) {
    nlohmann::json j;
    j["round"] = round;
    j["config_hash"] = config_hash;
    j["encoder"]["kind"] = enc.kind == EncoderKind::linear ? "linear" : "mlp1";
    if (enc.kind == EncoderKind::linear) {
        j["encoder"]["linear"] = matrix_to_json(enc.linear);
    } else {
        j["encoder"]["w1"] = matrix_to_json(enc.w1);
        j["encoder"]["b1"] = matrix_to_json(enc.b1);
        j["encoder"]["w2"] = matrix_to_json(enc.w2);
        j["encoder"]["b2"] = matrix_to_json(enc.b2);
    }
    if (enc.projection) j["encoder"]["projection"] = matrix_to_json(*enc.projection);
    auto& hj = j["heads"] = nlohmann::json::array();
    for (const auto& h : heads) {
        nlohmann::json row = nlohmann::json::array();
        for (Index i = 0; i < h.w.size(); ++i) row.push_back(h.w[i]);
        hj.push_back(std::move(row));
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    Checkpoint ck;
    ck.round = j.at("round").get<int>();
    ck.config_hash = j.at("config_hash").get<std::string>();
    const auto& ej = j.at("encoder");
    ck.encoder.kind =
        ej.at("kind").get<std::string>() == "linear" ? EncoderKind::linear : EncoderKind::mlp1;
    if (ck.encoder.kind == EncoderKind::linear) {
        ck.encoder.linear = matrix_from_json(ej.at("linear"));
    } else {
        ck.encoder.w1 = matrix_from_json(ej.at("w1"));
        ck.encoder.b1 = Vector(matrix_from_json(ej.at("b1")).reshaped());
        ck.encoder.w2 = matrix_from_json(ej.at("w2"));
        ck.encoder.b2 = Vector(matrix_from_json(ej.at("b2")).reshaped());
    }
    if (ej.contains("projection")) ck.encoder.projection = matrix_from_json(ej.at("projection"));
    for (const auto& row : j.at("heads")) {
        HeadParams h;
        h.w.resize(static_cast<Index>(row.size()));
        for (Index i = 0; i < h.w.size(); ++i) h.w[i] = row[static_cast<std::size_t>(i)].get<double>();
        ck.heads.push_back(std::move(h));
    }
    return ck;
}

}  // namespace feddar::model
