#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfim/core/tensor.hpp"

namespace sfim {

struct GradCheckOptions {
    std::size_t samples = 200;  // total coordinates, spread over groups
    double h = 1e-5;
    std::uint64_t seed = 0;
};

struct GradCheckGroup {
    std::string name;
    std::size_t sampled = 0;
    double max_rel_error = 0.0;
    double analytic = 0.0;  // at the worst coordinate
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    std::string failure;  // set when the forward itself failed

    double max_rel_error() const;
    bool passed(double tol) const { return failure.empty() && max_rel_error() < tol; }
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares reverse-mode gradients of L = sum(r * forward()) against central
// differences, r a fixed random projection. forward must be deterministic
// and read the tensors in `groups` by handle. Never throws.
GradCheckReport gradient_check(const std::function<Tensor()>& forward,
                               const std::vector<std::pair<std::string, Tensor>>& groups,
                               const GradCheckOptions& opt = {});

} // namespace sfim
