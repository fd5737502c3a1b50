#pragma once

#include <string_view>

#include "latentcast/nn/tensor.hpp"

namespace latentcast::nn {

enum class LossKind { L1, MSE, MSLE, RMSE };

std::string_view loss_name(LossKind kind);
LossKind loss_from_name(std::string_view name);

/// Scalar loss averaged over every element. MSLE clamps both operands to >= 0.
template <typename T>
double loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
struct LossGrad {
    double value = 0.0;
    Tensor<T> grad;  // d loss / d pred
};

template <typename T>
LossGrad<T> loss_with_grad(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target);

} // namespace latentcast::nn
