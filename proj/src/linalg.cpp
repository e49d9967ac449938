#include "flowfilt/linalg.hpp"

#include "flowfilt/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <sstream>

namespace flowfilt {

double min_eigenvalue(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

double symmetric_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
    return (a - b).norm() / std::max(b.norm(), floor);
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

Eigen::LLT<Matrix> checked_cholesky(const Matrix& a, const std::string& what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
        throw AdmissibilityError(what + " is not symmetric positive definite");
    }
    return llt;
}

void require_size(const Vector& v, Eigen::Index n, const std::string& what) {
    if (v.size() != n) {
        std::ostringstream os;
        os << what << ": expected length " << n << ", got " << v.size();
        throw DimensionError(os.str());
    }
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream os;
        os << what << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
        throw DimensionError(os.str());
    }
}

}  // namespace flowfilt
