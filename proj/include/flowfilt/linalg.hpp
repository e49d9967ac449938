#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <string>

namespace flowfilt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Smallest eigenvalue of the symmetric part of `a`.
double min_eigenvalue(const Matrix& a);

// Largest |eigenvalue| of the symmetric part of `a` (spectral norm for symmetric input).
double symmetric_norm(const Matrix& a);

// ||a - b|| / max(||b||, floor). Frobenius norm.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-300);

bool all_finite(const Matrix& a);

// Cholesky of an SPD matrix; throws AdmissibilityError naming `what` on failure.
Eigen::LLT<Matrix> checked_cholesky(const Matrix& a, const std::string& what);

void require_size(const Vector& v, Eigen::Index n, const std::string& what);
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what);

}  // namespace flowfilt
