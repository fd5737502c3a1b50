#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "latentcast/nn/network.hpp"

namespace latentcast::nn {

/// Directory layout: manifest.json plus one float32 .npy per parameter, buffer and
/// optimizer slot. Reloading restores training state exactly.
struct Checkpoint {
    Network<float> network;
    std::optional<OptimizerConfig> optimizer;
    std::uint64_t step = 0;
    std::vector<OptimizerSlots<float>> slots;
    std::uint64_t seed = 0;
    nlohmann::json extra = nlohmann::json::object();

    Optimizer<float> make_optimizer() const;
};

void save_checkpoint(const std::filesystem::path& dir, const Network<float>& network,
                     const Optimizer<float>* optimizer, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace latentcast::nn
