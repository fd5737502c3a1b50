#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/dataio.hpp"
#include "latentcast/nn/network.hpp"
#include "latentcast/training.hpp"

namespace latentcast::autoencoder {

using dataio::Frame;

struct AutoencoderConfig {
    std::vector<std::size_t> dims{64, 128, 256};
    nn::LossKind loss = nn::LossKind::L1;
    nn::OptimizerConfig optimizer{};
    std::size_t input_channels = 1;
    std::size_t input_size = 64;
    double slope = 0.01;

    /// Throws Config when the bottleneck side input_size / 2^|dims| is not an integer.
    void validate() const;
    std::size_t bottleneck_side() const;
};

void to_json(nlohmann::json& j, const AutoencoderConfig& c);
void from_json(const nlohmann::json& j, AutoencoderConfig& c);

/// A bottleneck activation volume. Values are stored channel-major (C, H, W);
/// files use the channel-last layout of frames.
struct FeatureMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : height(h), width(w), channels(c), data(c * h * w, fill) {}
    std::size_t size() const { return data.size(); }
    bool same_shape(const FeatureMap& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

struct LatentSequence {
    std::string id;
    std::vector<FeatureMap> maps;
};
using LatentDataset = std::vector<LatentSequence>;

// Frame (H, W, C) <-> per-sample tensor layout (C, H, W).
void frame_to_chw(const Frame& frame, float* out);
Frame chw_to_frame(const float* data, std::size_t channels, std::size_t height, std::size_t width);
nn::Tensor<float> frames_to_tensor(std::span<const Frame* const> frames);

class Autoencoder {
public:
    Autoencoder() = default;
    Autoencoder(AutoencoderConfig config, nn::Network<float> network);
    static Autoencoder build(const AutoencoderConfig& config, std::uint64_t seed);

    const AutoencoderConfig& config() const noexcept { return config_; }
    nn::Network<float>& network() noexcept { return net_; }
    const nn::Network<float>& network() const noexcept { return net_; }
    /// Number of layers belonging to the encoder.
    std::size_t encoder_layers() const noexcept { return 3 * config_.dims.size(); }

    FeatureMap encode(const Frame& frame);
    std::vector<FeatureMap> encode_batch(std::span<const Frame* const> frames);
    Frame decode(const FeatureMap& map);
    std::vector<Frame> decode_batch(std::span<const FeatureMap* const> maps);
    Frame reconstruct(const Frame& frame);

    void save(const std::filesystem::path& dir, const nn::Optimizer<float>* optimizer, std::uint64_t seed,
              const nlohmann::json& extra = nlohmann::json::object()) const;
    static Autoencoder load(const std::filesystem::path& dir);

private:
    void check_frame(const Frame& frame) const;
    void check_map(const FeatureMap& map) const;

    AutoencoderConfig config_;
    nn::Network<float> net_;
};

/// Layer stack: |dims| x [Conv2D(k3,s2,p1), Norm, LeakyReLU] then the mirrored
/// [ConvTranspose2D(k3,s2,p1,op1), Norm, LeakyReLU] blocks and a final
/// ConvTranspose2D to the input channels followed by Sigmoid.
std::vector<nn::LayerSpec> autoencoder_specs(const AutoencoderConfig& config);

/// Trains on frame reconstruction; restores the best-validation epoch.
TrainRun train_autoencoder(Autoencoder& model, std::span<const Frame* const> train,
                           std::span<const Frame* const> val, const TrainSchedule& schedule,
                           nn::Optimizer<float>* optimizer = nullptr);

/// Pointers to every frame of the given sequences, in order.
std::vector<const Frame*> frame_pointers(const dataio::Dataset& dataset);

LatentDataset extract_latents(Autoencoder& model, const dataio::Dataset& dataset, std::size_t batch_size = 64);

/// Per-channel standardization of latent maps (optional; off by default in the pipeline).
struct LatentNormalizer {
    std::vector<float> mean;
    std::vector<float> stddev;

    static LatentNormalizer fit(const LatentDataset& latents);
    void apply(LatentDataset& latents) const;
    void apply(FeatureMap& map) const;
    void invert(FeatureMap& map) const;
};

/// (num_sequences, T, h, w, c) float32 container, channel-last like frames.
void save_latents(const std::filesystem::path& path, const LatentDataset& latents);
LatentDataset load_latents(const std::filesystem::path& path);

} // namespace latentcast::autoencoder
