#include "latentcast/autoencoder.hpp"

#include <cmath>

#include "latentcast/error.hpp"
#include "latentcast/nn/checkpoint.hpp"

namespace latentcast::autoencoder {

using nn::LayerSpec;
using nn::Mode;
using nn::Tensor;

void AutoencoderConfig::validate() const {
    if (dims.empty()) throw Error(ErrorKind::Config, "autoencoder needs at least one encoder block");
    for (auto d : dims)
        if (d == 0) throw Error(ErrorKind::Config, "autoencoder channel counts must be positive");
    if (input_channels != 1 && input_channels != 3) throw Error(ErrorKind::Config, "input channels must be 1 or 3");
    const std::size_t f = std::size_t{1} << dims.size();
    if (input_size == 0 || input_size % f != 0)
        throw Error(ErrorKind::Config, "input size " + std::to_string(input_size) + " is not divisible by 2^" +
                                           std::to_string(dims.size()));
    optimizer.validate();
}

std::size_t AutoencoderConfig::bottleneck_side() const { return input_size >> dims.size(); }

void to_json(nlohmann::json& j, const AutoencoderConfig& c) {
    j = nlohmann::json{{"dims", c.dims},
                       {"loss", nn::loss_name(c.loss)},
                       {"optimizer", c.optimizer},
                       {"input_channels", c.input_channels},
                       {"input_size", c.input_size},
                       {"slope", c.slope}};
}

void from_json(const nlohmann::json& j, AutoencoderConfig& c) {
    c = AutoencoderConfig{};
    c.dims = j.at("dims").get<std::vector<std::size_t>>();
    c.loss = nn::loss_from_name(j.at("loss").get<std::string>());
    c.optimizer = j.at("optimizer").get<nn::OptimizerConfig>();
    c.input_channels = j.value("input_channels", c.input_channels);
    c.input_size = j.value("input_size", c.input_size);
    c.slope = j.value("slope", c.slope);
}

std::vector<LayerSpec> autoencoder_specs(const AutoencoderConfig& config) {
    config.validate();
    std::vector<LayerSpec> specs;
    std::size_t in = config.input_channels;
    for (auto d : config.dims) {
        specs.push_back(LayerSpec::conv2d(in, d, 3, 2, 1));
        specs.push_back(LayerSpec::norm(d));
        specs.push_back(LayerSpec::leaky_relu(config.slope));
        in = d;
    }
    for (std::size_t i = config.dims.size(); i-- > 1;) {
        specs.push_back(LayerSpec::conv_transpose2d(config.dims[i], config.dims[i - 1], 3, 2, 1, 1));
        specs.push_back(LayerSpec::norm(config.dims[i - 1]));
        specs.push_back(LayerSpec::leaky_relu(config.slope));
    }
    specs.push_back(LayerSpec::conv_transpose2d(config.dims.front(), config.input_channels, 3, 2, 1, 1));
    specs.push_back(LayerSpec::sigmoid());
    return specs;
}

void frame_to_chw(const Frame& frame, float* out) {
    const std::size_t hw = frame.height * frame.width, c = frame.channels;
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + i] = frame.data[i * c + ch];
}

Frame chw_to_frame(const float* data, std::size_t channels, std::size_t height, std::size_t width) {
    Frame f(height, width, channels);
    const std::size_t hw = height * width;
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t ch = 0; ch < channels; ++ch) f.data[i * channels + ch] = data[ch * hw + i];
    return f;
}

Tensor<float> frames_to_tensor(std::span<const Frame* const> frames) {
    if (frames.empty()) throw Error(ErrorKind::InsufficientData, "no frames");
    const Frame& p = *frames.front();
    Tensor<float> t({frames.size(), p.channels, p.height, p.width});
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!frames[i]->same_shape(p)) throw Error(ErrorKind::Shape, "frames in a batch differ in shape");
        frame_to_chw(*frames[i], t.data() + i * n);
    }
    return t;
}

Autoencoder::Autoencoder(AutoencoderConfig config, nn::Network<float> network)
    : config_(std::move(config)), net_(std::move(network)) {
    config_.validate();
    if (net_.specs() != autoencoder_specs(config_))
        throw Error(ErrorKind::Config, "network layers do not match the autoencoder configuration");
}

Autoencoder Autoencoder::build(const AutoencoderConfig& config, std::uint64_t seed) {
    auto specs = autoencoder_specs(config);
    return Autoencoder(config, nn::Network<float>::build(
                                   specs, {config.input_channels, config.input_size, config.input_size}, seed,
                                   config.slope));
}

void Autoencoder::check_frame(const Frame& f) const {
    if (f.height != config_.input_size || f.width != config_.input_size || f.channels != config_.input_channels)
        throw Error(ErrorKind::Shape, "frame " + std::to_string(f.height) + "x" + std::to_string(f.width) + "x" +
                                          std::to_string(f.channels) + " does not match the autoencoder input " +
                                          std::to_string(config_.input_size) + "x" +
                                          std::to_string(config_.input_size) + "x" +
                                          std::to_string(config_.input_channels));
}

void Autoencoder::check_map(const FeatureMap& m) const {
    const std::size_t s = config_.bottleneck_side();
    if (m.height != s || m.width != s || m.channels != config_.dims.back() || m.data.size() != m.channels * s * s)
        throw Error(ErrorKind::Shape, "feature map " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                                          "x" + std::to_string(m.channels) + " does not match the bottleneck " +
                                          std::to_string(s) + "x" + std::to_string(s) + "x" +
                                          std::to_string(config_.dims.back()));
}

std::vector<FeatureMap> Autoencoder::encode_batch(std::span<const Frame* const> frames) {
    for (const auto* f : frames) check_frame(*f);
    const auto z = net_.forward_range(frames_to_tensor(frames), 0, encoder_layers(), Mode::Eval);
    const std::size_t s = config_.bottleneck_side(), c = config_.dims.back(), n = c * s * s;
    std::vector<FeatureMap> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        FeatureMap m(c, s, s);
        std::copy_n(z.data() + i * n, n, m.data.begin());
        out.push_back(std::move(m));
    }
    return out;
}

FeatureMap Autoencoder::encode(const Frame& frame) {
    const Frame* p = &frame;
    return encode_batch(std::span<const Frame* const>(&p, 1)).front();
}

std::vector<Frame> Autoencoder::decode_batch(std::span<const FeatureMap* const> maps) {
    if (maps.empty()) return {};
    for (const auto* m : maps) check_map(*m);
    const std::size_t s = config_.bottleneck_side(), c = config_.dims.back(), n = c * s * s;
    Tensor<float> z({maps.size(), c, s, s});
    for (std::size_t i = 0; i < maps.size(); ++i) std::copy(maps[i]->data.begin(), maps[i]->data.end(), z.data() + i * n);
    const auto y = net_.forward_range(z, encoder_layers(), net_.size(), Mode::Eval);
    const std::size_t C = config_.input_channels, S = config_.input_size;
    std::vector<Frame> out;
    for (std::size_t i = 0; i < maps.size(); ++i) out.push_back(chw_to_frame(y.data() + i * C * S * S, C, S, S));
    return out;
}

Frame Autoencoder::decode(const FeatureMap& map) {
    const FeatureMap* p = &map;
    return decode_batch(std::span<const FeatureMap* const>(&p, 1)).front();
}

Frame Autoencoder::reconstruct(const Frame& frame) { return decode(encode(frame)); }

void Autoencoder::save(const std::filesystem::path& dir, const nn::Optimizer<float>* optimizer, std::uint64_t seed,
                       const nlohmann::json& extra) const {
    nlohmann::json e = extra;
    e["autoencoder"] = config_;
    nn::save_checkpoint(dir, net_, optimizer, seed, e);
}

Autoencoder Autoencoder::load(const std::filesystem::path& dir) {
    auto cp = nn::load_checkpoint(dir);
    if (!cp.extra.contains("autoencoder"))
        throw Error(ErrorKind::Format, dir.string() + " is not an autoencoder checkpoint");
    return Autoencoder(cp.extra["autoencoder"].get<AutoencoderConfig>(), std::move(cp.network));
}

TrainRun train_autoencoder(Autoencoder& model, std::span<const Frame* const> train, std::span<const Frame* const> val,
                           const TrainSchedule& schedule, nn::Optimizer<float>* optimizer) {
    for (const auto* f : train)
        if (f->raw) throw Error(ErrorKind::Config, "autoencoder training expects frames normalized to [0,1]");
    nn::Optimizer<float> local(model.config().optimizer);
    nn::Optimizer<float>& opt = optimizer ? *optimizer : local;
    auto batch_of = [](std::span<const Frame* const> frames) {
        return [frames](std::span<const std::size_t> idx) {
            std::vector<const Frame*> sel;
            for (auto i : idx) sel.push_back(frames[i]);
            auto x = frames_to_tensor(sel);
            return std::pair{x, x};
        };
    };
    return fit(model.network(), opt, model.config().loss, train.size(), batch_of(train), val.size(), batch_of(val),
               schedule);
}

std::vector<const Frame*> frame_pointers(const dataio::Dataset& dataset) {
    std::vector<const Frame*> out;
    for (const auto& seq : dataset)
        for (const auto& f : seq.frames) out.push_back(&f);
    return out;
}

LatentDataset extract_latents(Autoencoder& model, const dataio::Dataset& dataset, std::size_t batch_size) {
    LatentDataset out;
    for (const auto& seq : dataset) {
        LatentSequence ls{seq.id, {}};
        std::vector<const Frame*> ptrs;
        for (const auto& f : seq.frames) ptrs.push_back(&f);
        for (std::size_t s = 0; s < ptrs.size(); s += batch_size) {
            const std::size_t e = std::min(ptrs.size(), s + batch_size);
            auto maps = model.encode_batch(std::span<const Frame* const>(ptrs.data() + s, e - s));
            for (auto& m : maps) ls.maps.push_back(std::move(m));
        }
        out.push_back(std::move(ls));
    }
    return out;
}

LatentNormalizer LatentNormalizer::fit(const LatentDataset& latents) {
    if (latents.empty() || latents.front().maps.empty()) throw Error(ErrorKind::InsufficientData, "no latent maps");
    const auto& p = latents.front().maps.front();
    const std::size_t hw = p.height * p.width;
    std::vector<double> sum(p.channels, 0.0), sq(p.channels, 0.0);
    double count = 0;
    for (const auto& seq : latents)
        for (const auto& m : seq.maps) {
            for (std::size_t c = 0; c < p.channels; ++c)
                for (std::size_t i = 0; i < hw; ++i) {
                    const double v = m.data[c * hw + i];
                    sum[c] += v;
                    sq[c] += v * v;
                }
            count += static_cast<double>(hw);
        }
    LatentNormalizer n;
    for (std::size_t c = 0; c < p.channels; ++c) {
        const double mean = sum[c] / count;
        const double var = std::max(0.0, sq[c] / count - mean * mean);
        n.mean.push_back(static_cast<float>(mean));
        n.stddev.push_back(static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0));
    }
    return n;
}

void LatentNormalizer::apply(FeatureMap& m) const {
    const std::size_t hw = m.height * m.width;
    for (std::size_t c = 0; c < m.channels; ++c)
        for (std::size_t i = 0; i < hw; ++i) m.data[c * hw + i] = (m.data[c * hw + i] - mean[c]) / stddev[c];
}

void LatentNormalizer::apply(LatentDataset& latents) const {
    for (auto& seq : latents)
        for (auto& m : seq.maps) apply(m);
}

void LatentNormalizer::invert(FeatureMap& m) const {
    const std::size_t hw = m.height * m.width;
    for (std::size_t c = 0; c < m.channels; ++c)
        for (std::size_t i = 0; i < hw; ++i) m.data[c * hw + i] = m.data[c * hw + i] * stddev[c] + mean[c];
}

void save_latents(const std::filesystem::path& path, const LatentDataset& latents) {
    dataio::Dataset ds;
    for (const auto& seq : latents) {
        dataio::FrameSequence fs;
        fs.id = seq.id;
        for (const auto& m : seq.maps) {
            // Reuse the frame container: channel-last layout.
            Frame f = chw_to_frame(m.data.data(), m.channels, m.height, m.width);
            fs.frames.push_back(std::move(f));
        }
        ds.push_back(std::move(fs));
    }
    dataio::save_dataset(path, ds);
}

LatentDataset load_latents(const std::filesystem::path& path) {
    dataio::ArrayParseOptions opts;
    opts.time_axis_override = 1;
    auto array = dataio::read_array_file(path, opts);
    if (array.shape.size() != 5) throw Error(ErrorKind::Shape, "latent file must be (N, T, h, w, c)");
    auto ds = dataio::dataset_from_array(array);
    LatentDataset out;
    for (auto& seq : ds) {
        LatentSequence ls{seq.id, {}};
        for (const auto& f : seq.frames) {
            FeatureMap m(f.channels, f.height, f.width);
            frame_to_chw(f, m.data.data());
            ls.maps.push_back(std::move(m));
        }
        out.push_back(std::move(ls));
    }
    return out;
}

} // namespace latentcast::autoencoder
