#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "latentcast/nn/layers.hpp"

namespace latentcast::nn {

enum class OptimizerKind { Adam, RMSProp };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double alpha = 0.99;  // RMSProp decay
    double epsilon = 1e-8;

    void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Per-parameter moment slots. Adam uses first and second; RMSProp only second.
template <typename T>
struct OptimizerSlots {
    std::vector<T> first;
    std::vector<T> second;
};

/// One update at step index t (t >= 1). Every gradient is checked for finiteness
/// before any parameter is touched.
template <typename T>
void optimizer_step(const OptimizerConfig& config, std::span<Parameter<T>* const> params,
                    std::vector<OptimizerSlots<T>>& slots, std::uint64_t t);

/// Owns the slot state and step counter for one network.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) { config_.validate(); }

    void step(std::span<Parameter<T>* const> params) { optimizer_step(config_, params, slots_, ++t_); }

    const OptimizerConfig& config() const noexcept { return config_; }
    std::uint64_t steps() const noexcept { return t_; }
    std::vector<OptimizerSlots<T>>& slots() noexcept { return slots_; }
    const std::vector<OptimizerSlots<T>>& slots() const noexcept { return slots_; }
    void restore(std::uint64_t t, std::vector<OptimizerSlots<T>> slots) {
        t_ = t;
        slots_ = std::move(slots);
    }

private:
    OptimizerConfig config_;
    std::vector<OptimizerSlots<T>> slots_;
    std::uint64_t t_ = 0;
};

} // namespace latentcast::nn
