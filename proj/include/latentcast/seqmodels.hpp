#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/nn/network.hpp"
#include "latentcast/training.hpp"

namespace latentcast::seq {

using autoencoder::FeatureMap;
using autoencoder::LatentDataset;
using autoencoder::LatentSequence;

enum class SeqModelKind { RNN, LSTM, GRU, CNN3D, ConvLSTM, CRNN };

inline constexpr SeqModelKind all_kinds[] = {SeqModelKind::RNN,   SeqModelKind::LSTM,     SeqModelKind::GRU,
                                             SeqModelKind::CNN3D, SeqModelKind::ConvLSTM, SeqModelKind::CRNN};

std::string kind_name(SeqModelKind kind);
/// Accepts "rnn", "LSTM", "conv_lstm", "3dcnn" and similar spellings.
SeqModelKind kind_from_name(const std::string& name);
/// RNN, LSTM, GRU and ConvLSTM stack a configurable number of recurrent layers.
bool uses_hidden_layers(SeqModelKind kind);

struct SeqModelConfig {
    SeqModelKind kind = SeqModelKind::ConvLSTM;
    std::optional<std::size_t> hidden_layers = 1;
    std::size_t hidden_size = 128;
    nn::LossKind loss = nn::LossKind::MSE;
    nn::OptimizerConfig optimizer{};
    std::size_t window = 5;
    double slope = 0.01;
    bool sigmoid_head = false;  // pixel-space baseline only

    /// sequence_length, when given, must exceed the window.
    void validate(std::optional<std::size_t> sequence_length = std::nullopt) const;
};

void to_json(nlohmann::json& j, const SeqModelConfig& c);
void from_json(const nlohmann::json& j, SeqModelConfig& c);

struct MapShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t size() const { return channels * height * width; }
    bool operator==(const MapShape&) const = default;
};

MapShape shape_of(const FeatureMap& map);

/// A view: maps [start, start + k) of *sequence are the inputs, map start + k the target.
struct WindowSample {
    const LatentSequence* sequence = nullptr;
    std::size_t start = 0;
};

/// T - k samples with stride 1; T <= k is a window error.
std::vector<WindowSample> make_windows(const LatentSequence& sequence, std::size_t window);
std::vector<WindowSample> make_windows(const LatentDataset& dataset, std::size_t window);
std::size_t window_count(std::size_t length, std::size_t window);

std::vector<nn::LayerSpec> seq_specs(const SeqModelConfig& config, const MapShape& shape);

class SeqModel {
public:
    SeqModel() = default;
    SeqModel(SeqModelConfig config, MapShape shape, nn::Network<float> network);
    static SeqModel build(const SeqModelConfig& config, const MapShape& shape, std::uint64_t seed);

    const SeqModelConfig& config() const noexcept { return config_; }
    const MapShape& shape() const noexcept { return shape_; }
    nn::Network<float>& network() noexcept { return net_; }
    const nn::Network<float>& network() const noexcept { return net_; }

    FeatureMap predict_next(std::span<const FeatureMap> inputs);
    std::vector<FeatureMap> predict(std::span<const WindowSample> samples, std::size_t batch_size = 64);

    /// Input (B, k, C, H, W) and target (B, C, H, W) tensors.
    std::pair<nn::Tensor<float>, nn::Tensor<float>> batch(std::span<const WindowSample> samples) const;

    void save(const std::filesystem::path& dir, const nn::Optimizer<float>* optimizer, std::uint64_t seed,
              const nlohmann::json& extra = nlohmann::json::object()) const;
    static SeqModel load(const std::filesystem::path& dir);

private:
    void check_map(const FeatureMap& map) const;

    SeqModelConfig config_;
    MapShape shape_;
    nn::Network<float> net_;
};

TrainRun train_seq_model(SeqModel& model, std::span<const WindowSample> train, std::span<const WindowSample> val,
                         const TrainSchedule& schedule, nn::Optimizer<float>* optimizer = nullptr);

/// Mean eval-mode loss of the given kind over the samples.
double evaluate_seq_model(SeqModel& model, std::span<const WindowSample> samples, nn::LossKind loss,
                          std::size_t batch_size = 64);

/// Frames as (C, H, W) maps so the pixel-space baseline reuses the same predictors.
LatentDataset frames_as_maps(const dataio::Dataset& dataset);

} // namespace latentcast::seq
