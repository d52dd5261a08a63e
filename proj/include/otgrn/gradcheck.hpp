#pragma once

#include <functional>
#include <string>
#include <vector>

#include "otgrn/autodiff.hpp"

namespace otgrn {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

/// Central finite-difference check of d(forward)/d(params). The forward
/// closure must rebuild the graph from the current parameter values and
/// be deterministic (fix any dropout or sampling seeds).
double finite_diff_max_rel_error(const std::function<ad::Tensor()>& forward,
                                 const std::vector<ad::Tensor>& params, double h = 1e-5);

/// Checks every autodiff primitive on random inputs.
std::vector<GradCheckEntry> gradcheck_primitives(uint64_t seed);

/// Checks the full NRI loss (encoder, Gumbel relaxation, decoder, all
/// loss terms, dropout) on a 3-gene toy instance.
GradCheckEntry gradcheck_nri_toy(uint64_t seed);

}  // namespace otgrn
