#pragma once

#include "flowfilt/linalg.hpp"

#include <cstdint>
#include <vector>

namespace flowfilt {

/// N particles at a common homotopy position. Column i of `particles` belongs
/// to particle `ids[i]`; the id, not the column, selects the noise stream.
struct ParticleEnsemble {
    Matrix particles;  // n x N
    std::vector<std::uint64_t> ids;
    double lambda = 0.0;
    std::uint64_t seed = 0;

    Eigen::Index dim() const { return particles.rows(); }
    std::size_t size() const { return static_cast<std::size_t>(particles.cols()); }

    // Throws when N < 1, ids and columns disagree, or a particle is not finite.
    void validate() const;
};

}  // namespace flowfilt
