#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "latentcast/nn/network.hpp"

namespace latentcast {

struct TrainSchedule {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;  // epochs without validation improvement; 0 disables early stopping
    std::uint64_t seed = 0;     // drives the per-epoch shuffle
    bool restore_best = true;
    double min_delta = 0.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // equals train_loss when there is no validation data
};

struct TrainRun {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
    std::uint64_t steps = 0;
};

void to_json(nlohmann::json& j, const TrainRun& r);
void from_json(const nlohmann::json& j, TrainRun& r);

/// Assembles (input, target) tensors for the given sample indices.
using BatchFn = std::function<std::pair<nn::Tensor<float>, nn::Tensor<float>>(std::span<const std::size_t>)>;

/// Mini-batch training with a seeded per-epoch shuffle, eval-mode validation after
/// every epoch, patience-based early stopping and restoration of the best epoch.
TrainRun fit(nn::Network<float>& net, nn::Optimizer<float>& optimizer, nn::LossKind loss, std::size_t n_train,
             const BatchFn& train_batch, std::size_t n_val, const BatchFn& val_batch, const TrainSchedule& schedule);

/// Mean eval-mode loss over all samples, batched; each batch weighted by its size.
double evaluate_loss(nn::Network<float>& net, nn::LossKind loss, std::size_t n, const BatchFn& batch,
                     std::size_t batch_size = 32);

/// Deterministic permutation of 0..n-1 for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

} // namespace latentcast
