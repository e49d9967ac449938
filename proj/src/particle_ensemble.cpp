#include "flowfilt/particle_ensemble.hpp"

#include "flowfilt/errors.hpp"

#include <sstream>

namespace flowfilt {

void ParticleEnsemble::validate() const {
    if (particles.cols() < 1) throw ParameterError("ensemble must hold at least one particle");
    if (particles.rows() < 1) throw DimensionError("ensemble state dimension must be >= 1");
    if (ids.size() != size()) {
        std::ostringstream os;
        os << "ensemble has " << size() << " particles but " << ids.size() << " ids";
        throw ParameterError(os.str());
    }
    for (Eigen::Index i = 0; i < particles.cols(); ++i) {
        if (!particles.col(i).allFinite()) {
            std::ostringstream os;
            os << "particle " << i << " is not finite";
            throw ParameterError(os.str());
        }
    }
}

}  // namespace flowfilt
