#include "feddar/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace feddar::numerics {

QrResult qr_orthonormalize(const Matrix& a) {
    const Index d = a.rows(), k = a.cols();
    if (d < k) throw ValidationError("qr_orthonormalize: need rows >= cols");
    if (!all_finite(a)) throw ValidationError("qr_orthonormalize: non-finite input");

    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(d, k);
    Matrix r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();

    double max_diag = 0.0;
    for (Index j = 0; j < k; ++j) max_diag = std::max(max_diag, std::abs(r(j, j)));
    const double tol = std::max(max_diag, 1.0e-300) * 1e-12 * static_cast<double>(d);
    for (Index j = 0; j < k; ++j) {
        if (std::abs(r(j, j)) <= tol) throw RankDeficientError(static_cast<int>(j));
    }
    // sign convention: positive R diagonal
    for (Index j = 0; j < k; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
            r.row(j) = -r.row(j);
        }
    }
    return {std::move(q), std::move(r)};
}

TopKEigs top_k_eigvecs(const Matrix& s, Index k) {
    const Index p = s.rows();
    if (s.cols() != p) throw ValidationError("top_k_eigvecs: matrix not square");
    if (k > p) throw ValidationError("top_k_eigvecs: k exceeds dimension");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ValidationError("top_k_eigvecs: matrix not symmetric within 1e-10");

    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
    // Eigen returns ascending eigenvalues; take the top k reversed.
    TopKEigs out;
    out.vectors.resize(p, k);
    out.values.resize(k);
    for (Index j = 0; j < k; ++j) {
        const Index src = p - 1 - j;
        out.values[j] = eig.eigenvalues()[src];
        Vector v = eig.eigenvectors().col(src);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        out.vectors.col(j) = v;
    }
    out.gap_collapsed = false;
    if (k < p) {
        const double next = eig.eigenvalues()[p - 1 - k];
        out.gap_collapsed = std::abs(out.values[k - 1] - next) <= 1e-12;
    }
    return out;
}

Vector solve_spd(const Matrix& h, const Vector& b, double ridge) {
    const Index k = h.rows();
    if (h.cols() != k || b.size() != k) throw ValidationError("solve_spd: dimension mismatch");
    if (ridge < 0.0) throw ValidationError("solve_spd: negative ridge");
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ValidationError("solve_spd: matrix not symmetric within 1e-10");

    Matrix shifted = 0.5 * (h + h.transpose());
    shifted.diagonal().array() += ridge;

    Eigen::LDLT<Matrix> ldlt(shifted);
    Vector x;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
        x = ldlt.solve(b);
        const double denom = std::max(b.norm(), 1.0e-300);
        ok = x.allFinite() && (shifted * x - b).norm() <= 1e-10 * std::max(1.0, denom);
    }
    if (!ok) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(shifted);
        throw SingularMatrixError(eig.eigenvalues().minCoeff());
    }
    return x;
}

bool is_orthonormal(const Matrix& q, double tol) {
    const Matrix g = q.transpose() * q;
    return (g - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff() <= tol;
}

double principal_angle_dist(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ValidationError("principal_angle_dist: row mismatch");
    if (!is_orthonormal(a, 1e-8) || !is_orthonormal(b, 1e-8))
        throw ValidationError("principal_angle_dist: inputs must be orthonormal within 1e-8");
    const Matrix proj = b - a * (a.transpose() * b);
    Eigen::JacobiSVD<Matrix> svd(proj);
    const double v = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace feddar::numerics
