#include "latentcast/seqmodels.hpp"

#include <algorithm>
#include <cctype>

#include "latentcast/error.hpp"
#include "latentcast/nn/checkpoint.hpp"

namespace latentcast::seq {

using nn::LayerSpec;
using nn::Mode;
using nn::Tensor;

std::string kind_name(SeqModelKind kind) {
    switch (kind) {
    case SeqModelKind::RNN: return "RNN";
    case SeqModelKind::LSTM: return "LSTM";
    case SeqModelKind::GRU: return "GRU";
    case SeqModelKind::CNN3D: return "CNN3D";
    case SeqModelKind::ConvLSTM: return "ConvLSTM";
    case SeqModelKind::CRNN: return "CRNN";
    }
    return "?";
}

SeqModelKind kind_from_name(const std::string& name) {
    std::string s;
    for (char ch : name)
        if (std::isalnum(static_cast<unsigned char>(ch))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s == "rnn" || s == "elman") return SeqModelKind::RNN;
    if (s == "lstm") return SeqModelKind::LSTM;
    if (s == "gru") return SeqModelKind::GRU;
    if (s == "cnn3d" || s == "3dcnn" || s == "conv3d") return SeqModelKind::CNN3D;
    if (s == "convlstm") return SeqModelKind::ConvLSTM;
    if (s == "crnn" || s == "rcnn") return SeqModelKind::CRNN;
    throw Error(ErrorKind::Config, "unknown model kind '" + name + "'");
}

bool uses_hidden_layers(SeqModelKind kind) {
    return kind != SeqModelKind::CNN3D && kind != SeqModelKind::CRNN;
}

void SeqModelConfig::validate(std::optional<std::size_t> sequence_length) const {
    if (uses_hidden_layers(kind)) {
        if (!hidden_layers) throw Error(ErrorKind::Config, kind_name(kind) + " needs hidden_layers");
        if (*hidden_layers < 1 || *hidden_layers > 3)
            throw Error(ErrorKind::Config, "hidden_layers must be 1..3, got " + std::to_string(*hidden_layers));
    } else if (hidden_layers) {
        throw Error(ErrorKind::Config, kind_name(kind) + " does not take hidden_layers");
    }
    if (hidden_size == 0) throw Error(ErrorKind::Config, "hidden_size must be positive");
    if (window == 0) throw Error(ErrorKind::Config, "window must be positive");
    if (kind == SeqModelKind::CNN3D && window < 3)
        throw Error(ErrorKind::Config, "CNN3D needs a window of at least 3");
    if (sequence_length && window >= *sequence_length)
        throw Error(ErrorKind::Window, "window " + std::to_string(window) + " must be shorter than the sequence (" +
                                           std::to_string(*sequence_length) + ")");
    optimizer.validate();
}

void to_json(nlohmann::json& j, const SeqModelConfig& c) {
    j = nlohmann::json{{"kind", kind_name(c.kind)},
                       {"hidden_size", c.hidden_size},
                       {"loss", nn::loss_name(c.loss)},
                       {"optimizer", c.optimizer},
                       {"window", c.window},
                       {"slope", c.slope},
                       {"sigmoid_head", c.sigmoid_head}};
    j["hidden_layers"] = c.hidden_layers ? nlohmann::json(*c.hidden_layers) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SeqModelConfig& c) {
    c = SeqModelConfig{};
    c.kind = kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("hidden_layers") && !j["hidden_layers"].is_null())
        c.hidden_layers = j["hidden_layers"].get<std::size_t>();
    else
        c.hidden_layers.reset();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.loss = nn::loss_from_name(j.at("loss").get<std::string>());
    c.optimizer = j.at("optimizer").get<nn::OptimizerConfig>();
    c.window = j.at("window").get<std::size_t>();
    c.slope = j.value("slope", c.slope);
    c.sigmoid_head = j.value("sigmoid_head", false);
}

MapShape shape_of(const FeatureMap& m) { return {m.channels, m.height, m.width}; }

std::size_t window_count(std::size_t length, std::size_t window) {
    if (length <= window)
        throw Error(ErrorKind::Window, "sequence of length " + std::to_string(length) +
                                           " is too short for window " + std::to_string(window));
    return length - window;
}

std::vector<WindowSample> make_windows(const LatentSequence& sequence, std::size_t window) {
    const std::size_t n = window_count(sequence.maps.size(), window);
    std::vector<WindowSample> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) out.push_back({&sequence, s});
    return out;
}

std::vector<WindowSample> make_windows(const LatentDataset& dataset, std::size_t window) {
    std::vector<WindowSample> out;
    for (const auto& seq : dataset) {
        auto w = make_windows(seq, window);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

std::vector<LayerSpec> seq_specs(const SeqModelConfig& config, const MapShape& shape) {
    config.validate();
    const std::size_t C = shape.channels, H = shape.height, W = shape.width, n = config.hidden_size;
    if (C == 0 || H == 0 || W == 0) throw Error(ErrorKind::Shape, "empty map shape");
    std::vector<LayerSpec> specs;
    switch (config.kind) {
    case SeqModelKind::RNN:
    case SeqModelKind::LSTM:
    case SeqModelKind::GRU: {
        specs.push_back(LayerSpec::flatten(2));
        specs.push_back(LayerSpec::dense(shape.size(), n));
        const std::size_t layers = *config.hidden_layers;
        for (std::size_t i = 0; i < layers; ++i) {
            const bool seqs = i + 1 < layers;
            if (config.kind == SeqModelKind::RNN) specs.push_back(LayerSpec::elman(n, n, seqs));
            if (config.kind == SeqModelKind::LSTM) specs.push_back(LayerSpec::lstm(n, n, seqs));
            if (config.kind == SeqModelKind::GRU) specs.push_back(LayerSpec::gru(n, n, seqs));
        }
        specs.push_back(LayerSpec::dense(n, shape.size()));
        specs.push_back(LayerSpec::reshape({C, H, W}));
        break;
    }
    case SeqModelKind::ConvLSTM: {
        const std::size_t layers = *config.hidden_layers;
        std::size_t in = C;
        for (std::size_t i = 0; i < layers; ++i) {
            specs.push_back(LayerSpec::conv_lstm(in, n, 3, i + 1 < layers));
            in = n;
        }
        specs.push_back(LayerSpec::conv2d(n, C, 1, 1, 0));
        break;
    }
    case SeqModelKind::CNN3D: {
        const std::size_t k = config.window;
        specs.push_back(LayerSpec::conv3d(C, n, {3, 3, 3}, {0, 1, 1}));
        specs.push_back(LayerSpec::leaky_relu(config.slope));
        specs.push_back(LayerSpec::conv3d(n, C, {k - 2, 3, 3}, {0, 1, 1}));
        specs.push_back(LayerSpec::reshape({C, H, W}));
        break;
    }
    case SeqModelKind::CRNN: {
        specs.push_back(LayerSpec::conv2d(C, n, 3, 1, 1));
        specs.push_back(LayerSpec::leaky_relu(config.slope));
        specs.push_back(LayerSpec::conv_elman(n, n, 3, false));
        specs.push_back(LayerSpec::conv2d(n, C, 1, 1, 0));
        break;
    }
    }
    if (config.sigmoid_head) specs.push_back(LayerSpec::sigmoid());
    return specs;
}

SeqModel::SeqModel(SeqModelConfig config, MapShape shape, nn::Network<float> network)
    : config_(std::move(config)), shape_(shape), net_(std::move(network)) {
    if (net_.specs() != seq_specs(config_, shape_))
        throw Error(ErrorKind::Config, "network layers do not match the sequence model configuration");
    if (net_.input_shape() != nn::Shape{config_.window, shape_.channels, shape_.height, shape_.width})
        throw Error(ErrorKind::Config, "network input does not match the window and map shape");
}

SeqModel SeqModel::build(const SeqModelConfig& config, const MapShape& shape, std::uint64_t seed) {
    auto specs = seq_specs(config, shape);
    return SeqModel(config, shape,
                    nn::Network<float>::build(specs, {config.window, shape.channels, shape.height, shape.width}, seed,
                                              config.slope));
}

void SeqModel::check_map(const FeatureMap& m) const {
    if (!(shape_of(m) == shape_) || m.data.size() != shape_.size())
        throw Error(ErrorKind::Shape, "map " + std::to_string(m.height) + "x" + std::to_string(m.width) + "x" +
                                          std::to_string(m.channels) + " does not match the model's " +
                                          std::to_string(shape_.height) + "x" + std::to_string(shape_.width) + "x" +
                                          std::to_string(shape_.channels));
}

std::pair<Tensor<float>, Tensor<float>> SeqModel::batch(std::span<const WindowSample> samples) const {
    const std::size_t k = config_.window, n = shape_.size();
    Tensor<float> x({samples.size(), k, shape_.channels, shape_.height, shape_.width});
    Tensor<float> y({samples.size(), shape_.channels, shape_.height, shape_.width});
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& s = samples[b];
        if (!s.sequence || s.start + k >= s.sequence->maps.size())
            throw Error(ErrorKind::Window, "window sample runs past the end of its sequence");
        for (std::size_t t = 0; t < k; ++t) {
            const auto& m = s.sequence->maps[s.start + t];
            check_map(m);
            std::copy(m.data.begin(), m.data.end(), x.data() + (b * k + t) * n);
        }
        const auto& target = s.sequence->maps[s.start + k];
        check_map(target);
        std::copy(target.data.begin(), target.data.end(), y.data() + b * n);
    }
    return {std::move(x), std::move(y)};
}

FeatureMap SeqModel::predict_next(std::span<const FeatureMap> inputs) {
    if (inputs.size() != config_.window)
        throw Error(ErrorKind::Shape, "expected " + std::to_string(config_.window) + " input maps, got " +
                                          std::to_string(inputs.size()));
    const std::size_t n = shape_.size();
    Tensor<float> x({1, config_.window, shape_.channels, shape_.height, shape_.width});
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        check_map(inputs[t]);
        std::copy(inputs[t].data.begin(), inputs[t].data.end(), x.data() + t * n);
    }
    const auto y = net_.forward(x, Mode::Eval);
    FeatureMap out(shape_.channels, shape_.height, shape_.width);
    std::copy_n(y.data(), n, out.data.begin());
    return out;
}

std::vector<FeatureMap> SeqModel::predict(std::span<const WindowSample> samples, std::size_t batch_size) {
    std::vector<FeatureMap> out;
    out.reserve(samples.size());
    const std::size_t n = shape_.size();
    for (std::size_t s = 0; s < samples.size(); s += batch_size) {
        const auto part = samples.subspan(s, std::min(batch_size, samples.size() - s));
        const auto y = net_.forward(batch(part).first, Mode::Eval);
        for (std::size_t b = 0; b < part.size(); ++b) {
            FeatureMap m(shape_.channels, shape_.height, shape_.width);
            std::copy_n(y.data() + b * n, n, m.data.begin());
            out.push_back(std::move(m));
        }
    }
    return out;
}

void SeqModel::save(const std::filesystem::path& dir, const nn::Optimizer<float>* optimizer, std::uint64_t seed,
                    const nlohmann::json& extra) const {
    nlohmann::json e = extra;
    e["seq_model"] = config_;
    e["map_shape"] = {shape_.channels, shape_.height, shape_.width};
    nn::save_checkpoint(dir, net_, optimizer, seed, e);
}

SeqModel SeqModel::load(const std::filesystem::path& dir) {
    auto cp = nn::load_checkpoint(dir);
    if (!cp.extra.contains("seq_model") || !cp.extra.contains("map_shape"))
        throw Error(ErrorKind::Format, dir.string() + " is not a sequence model checkpoint");
    const auto s = cp.extra["map_shape"].get<std::vector<std::size_t>>();
    if (s.size() != 3) throw Error(ErrorKind::Format, "map_shape must have three entries");
    return SeqModel(cp.extra["seq_model"].get<SeqModelConfig>(), MapShape{s[0], s[1], s[2]}, std::move(cp.network));
}

namespace {

BatchFn batch_fn(const SeqModel& model, std::span<const WindowSample> samples) {
    return [&model, samples](std::span<const std::size_t> idx) {
        std::vector<WindowSample> sel;
        sel.reserve(idx.size());
        for (auto i : idx) sel.push_back(samples[i]);
        return model.batch(sel);
    };
}

} // namespace

TrainRun train_seq_model(SeqModel& model, std::span<const WindowSample> train, std::span<const WindowSample> val,
                         const TrainSchedule& schedule, nn::Optimizer<float>* optimizer) {
    if (train.empty()) throw Error(ErrorKind::InsufficientData, "no training windows");
    nn::Optimizer<float> local(model.config().optimizer);
    nn::Optimizer<float>& opt = optimizer ? *optimizer : local;
    return fit(model.network(), opt, model.config().loss, train.size(), batch_fn(model, train), val.size(),
               batch_fn(model, val), schedule);
}

double evaluate_seq_model(SeqModel& model, std::span<const WindowSample> samples, nn::LossKind loss,
                          std::size_t batch_size) {
    if (samples.empty()) throw Error(ErrorKind::InsufficientData, "no windows to evaluate");
    return evaluate_loss(model.network(), loss, samples.size(), batch_fn(model, samples), batch_size);
}

LatentDataset frames_as_maps(const dataio::Dataset& dataset) {
    LatentDataset out;
    for (const auto& seq : dataset) {
        LatentSequence ls{seq.id, {}};
        for (const auto& f : seq.frames) {
            FeatureMap m(f.channels, f.height, f.width);
            autoencoder::frame_to_chw(f, m.data.data());
            ls.maps.push_back(std::move(m));
        }
        out.push_back(std::move(ls));
    }
    return out;
}

} // namespace latentcast::seq
