#pragma once

#include <cmath>

#include "tag/errors.hpp"
#include "tag/vec.hpp"

namespace tag {

// Norm floor below which a vector carries no usable direction.
inline constexpr double kNormFloor = 1e-30;

// x / ||x||. Throws DegenerateState when ||x|| is below the floor.
inline Vec unit(const Vec& x) {
    double n = norm(x);
    if (!(n > kNormFloor)) {
        throw DegenerateState("unit: norm below floor (" + std::to_string(n) + ")");
    }
    return scale(x, 1.0 / n);
}

// Component of v along the direction of basis: <v, b_hat> b_hat.
// Implemented as inner product times unit vector; the rank-one matrix is
// never materialized.
inline Vec project_parallel(const Vec& v, const Vec& basis) {
    check_same_dim(v, basis, "project_parallel");
    Vec u = unit(basis);
    return scale(u, dot(v, u));
}

// Component of v orthogonal to the direction of basis.
inline Vec project_tangential(const Vec& v, const Vec& basis) {
    check_same_dim(v, basis, "project_tangential");
    Vec u = unit(basis);
    double c = dot(v, u);
    Vec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - c * u[i];
    return r;
}

struct Decomposition {
    Vec parallel;
    Vec tangential;
};

// Split delta into its radial part (along state) and the remainder.
// delta = parallel + tangential and <parallel, tangential> = 0 up to
// rounding.
inline Decomposition decompose(const Vec& delta, const Vec& state) {
    check_same_dim(delta, state, "decompose");
    Vec u = unit(state);
    double c = dot(delta, u);
    Decomposition d;
    d.parallel = scale(u, c);
    d.tangential.resize(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        d.tangential[i] = delta[i] - d.parallel[i];
    }
    return d;
}

}  // namespace tag
