#include "latentcast/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "latentcast/error.hpp"

namespace latentcast::nn {

std::string_view optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::Adam ? "Adam" : "RMSProp";
}

OptimizerKind optimizer_from_name(std::string_view name) {
    if (name == "Adam" || name == "adam") return OptimizerKind::Adam;
    if (name == "RMSProp" || name == "rmsprop") return OptimizerKind::RMSProp;
    throw Error(ErrorKind::Config, "unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error(ErrorKind::Config, "learning rate must be a positive finite number");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(alpha >= 0.0 && alpha < 1.0))
        throw Error(ErrorKind::Config, "optimizer decay coefficients must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw Error(ErrorKind::Config, "optimizer epsilon must be positive");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
    j = nlohmann::json{{"kind", optimizer_name(c.kind)}, {"learning_rate", c.learning_rate},
                       {"beta1", c.beta1},                {"beta2", c.beta2},
                       {"alpha", c.alpha},                {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
    c = OptimizerConfig{};
    c.kind = optimizer_from_name(j.at("kind").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.alpha = j.value("alpha", c.alpha);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.validate();
}

template <typename T>
void optimizer_step(const OptimizerConfig& config, std::span<Parameter<T>* const> params,
                    std::vector<OptimizerSlots<T>>& slots, std::uint64_t t) {
    if (t == 0) throw Error(ErrorKind::State, "optimizer step index starts at 1");
    for (const auto* p : params) {
        for (std::size_t i = 0; i < p->grad.size(); ++i)
            if (!std::isfinite(p->grad[i]))
                throw Error(ErrorKind::NonFinite, "non-finite gradient in parameter '" + p->name + "'");
    }
    if (slots.size() != params.size()) {
        slots.assign(params.size(), {});
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (config.kind == OptimizerKind::Adam) slots[k].first.assign(params[k]->value.size(), T{0});
            slots[k].second.assign(params[k]->value.size(), T{0});
        }
    }
    const double lr = config.learning_rate, eps = config.epsilon;
    if (config.kind == OptimizerKind::Adam) {
        const double b1 = config.beta1, b2 = config.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            auto& m = slots[k].first;
            auto& v = slots[k].second;
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                const double mi = b1 * m[i] + (1.0 - b1) * g;
                const double vi = b2 * v[i] + (1.0 - b2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mh = mi / c1, vh = vi / c2;
                p.value[i] = static_cast<T>(p.value[i] - lr * mh / (std::sqrt(vh) + eps));
            }
        }
    } else {
        const double a = config.alpha;
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            auto& s = slots[k].second;
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                const double si = a * s[i] + (1.0 - a) * g * g;
                s[i] = static_cast<T>(si);
                p.value[i] = static_cast<T>(p.value[i] - lr * g / (std::sqrt(si) + eps));
            }
        }
    }
}

template void optimizer_step<float>(const OptimizerConfig&, std::span<Parameter<float>* const>,
                                    std::vector<OptimizerSlots<float>>&, std::uint64_t);
template void optimizer_step<double>(const OptimizerConfig&, std::span<Parameter<double>* const>,
                                     std::vector<OptimizerSlots<double>>&, std::uint64_t);

} // namespace latentcast::nn
