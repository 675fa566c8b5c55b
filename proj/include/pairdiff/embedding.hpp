#pragma once

#include <cmath>

#include "pairdiff/errors.hpp"
#include "pairdiff/tensor.hpp"

namespace pairdiff {

// Sinusoidal timestep features: sin(t w_k) then cos(t w_k) over dim/2
// frequencies geometrically spaced from 1 down to 1/10000.
inline Tensor embed_timestep(int t, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw ParameterError("embed_timestep: dim must be a positive even integer, got " +
                             std::to_string(dim));
    if (t < 0) throw IndexError("embed_timestep: negative timestep");

    const int half = dim / 2;
    Tensor e({dim});
    for (int k = 0; k < half; ++k) {
        double w = half == 1 ? 1.0 : std::pow(10000.0, -static_cast<double>(k) / (half - 1));
        e[static_cast<size_t>(k)] = std::sin(t * w);
        e[static_cast<size_t>(half + k)] = std::cos(t * w);
    }
    return e;
}

}  // namespace pairdiff
