#ifndef FEDDAR_TYPES_HPP
#define FEDDAR_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace feddar {

// All numeric state is dense 64-bit. Matrices are serialized row-major; the
// in-memory layout is Eigen's.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RankDeficientError : std::runtime_error {
    int column;
    explicit RankDeficientError(int col)
        : std::runtime_error("matrix is rank deficient at column " + std::to_string(col)),
          column(col) {}
};

struct SingularMatrixError : std::runtime_error {
    double min_eigenvalue_estimate;
    explicit SingularMatrixError(double min_eig)
        : std::runtime_error("matrix numerically singular, estimated smallest eigenvalue " +
                             std::to_string(min_eig)),
          min_eigenvalue_estimate(min_eig) {}
};

struct EmptyDomainError : std::runtime_error {
    int domain;
    explicit EmptyDomainError(int m)
        : std::runtime_error("domain " + std::to_string(m) + " has no samples on any client"),
          domain(m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace feddar

#endif
