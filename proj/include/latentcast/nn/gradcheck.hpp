#pragma once

#include <cstdint>
#include <string>

#include "latentcast/nn/network.hpp"

namespace latentcast::nn {

struct GradCheckOptions {
    double epsilon = 1e-4;
    std::size_t samples_per_tensor = 12;  // 0 checks every entry
    double denominator_floor = 1e-6;
    std::uint64_t seed = 7;
    bool check_input = true;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst;  // "<layer>.<param>[index]" or "input[index]"
    std::size_t checked = 0;
};

/// Compares backward() against central finite differences of the scalar loss,
/// evaluated in 64-bit arithmetic. Relative error = |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(Network<double>& net, const Tensor<double>& x, const Tensor<double>& target,
                               LossKind loss, const GradCheckOptions& options = {});

} // namespace latentcast::nn
