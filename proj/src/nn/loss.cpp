#include "latentcast/nn/loss.hpp"

#include <cctype>
#include <cmath>
#include <string>

namespace latentcast::nn {

std::string_view loss_name(LossKind kind) {
    switch (kind) {
    case LossKind::L1: return "L1";
    case LossKind::MSE: return "MSE";
    case LossKind::MSLE: return "MSLE";
    case LossKind::RMSE: return "RMSE";
    }
    return "?";
}

LossKind loss_from_name(std::string_view name) {
    std::string upper(name);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (LossKind k : {LossKind::L1, LossKind::MSE, LossKind::MSLE, LossKind::RMSE})
        if (loss_name(k) == upper) return k;
    throw Error(ErrorKind::Config, "unknown loss '" + std::string(name) + "'");
}

namespace {

template <typename T>
void check(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw Error(ErrorKind::Shape,
                    "loss operands differ: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    if (pred.empty()) throw Error(ErrorKind::Shape, "loss of an empty tensor");
}

double log1p_clamped(double v) { return std::log1p(v > 0.0 ? v : 0.0); }

} // namespace

template <typename T>
double loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target) {
    check(pred, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i], t = target[i];
        switch (kind) {
        case LossKind::L1: acc += std::abs(p - t); break;
        case LossKind::MSE:
        case LossKind::RMSE: acc += (p - t) * (p - t); break;
        case LossKind::MSLE: {
            const double d = log1p_clamped(p) - log1p_clamped(t);
            acc += d * d;
            break;
        }
        }
    }
    const double mean = acc / static_cast<double>(pred.size());
    return kind == LossKind::RMSE ? std::sqrt(mean) : mean;
}

template <typename T>
LossGrad<T> loss_with_grad(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target) {
    LossGrad<T> out;
    out.value = loss(kind, pred, target);
    out.grad = Tensor<T>(pred.shape());
    const double n = static_cast<double>(pred.size());
    double scale = 1.0 / n;
    if (kind == LossKind::MSE) scale = 2.0 / n;
    if (kind == LossKind::RMSE) scale = out.value > 0.0 ? 1.0 / (n * out.value) : 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i], t = target[i];
        double g = 0.0;
        switch (kind) {
        case LossKind::L1: g = p > t ? 1.0 : (p < t ? -1.0 : 0.0); break;
        case LossKind::MSE:
        case LossKind::RMSE: g = p - t; break;
        case LossKind::MSLE:
            g = p > 0.0 ? 2.0 * (log1p_clamped(p) - log1p_clamped(t)) / (1.0 + p) : 0.0;
            break;
        }
        out.grad[i] = static_cast<T>(g * scale);
    }
    return out;
}

template double loss<float>(LossKind, const Tensor<float>&, const Tensor<float>&);
template double loss<double>(LossKind, const Tensor<double>&, const Tensor<double>&);
template LossGrad<float> loss_with_grad<float>(LossKind, const Tensor<float>&, const Tensor<float>&);
template LossGrad<double> loss_with_grad<double>(LossKind, const Tensor<double>&, const Tensor<double>&);

} // namespace latentcast::nn
