#include "latentcast/nn/layer_spec.hpp"

#include <map>

#include "latentcast/error.hpp"

namespace latentcast::nn {

namespace {

const std::array<std::pair<LayerKind, std::string_view>, 14> kKindNames{{
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::ConvTranspose2D, "ConvTranspose2D"},
    {LayerKind::Conv3D, "Conv3D"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::ElmanCell, "ElmanCell"},
    {LayerKind::LSTMCell, "LSTMCell"},
    {LayerKind::GRUCell, "GRUCell"},
    {LayerKind::ConvLSTMCell, "ConvLSTMCell"},
    {LayerKind::ConvElmanCell, "ConvElmanCell"},
    {LayerKind::Norm, "Norm"},
    {LayerKind::LeakyReLU, "LeakyReLU"},
    {LayerKind::Sigmoid, "Sigmoid"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::Reshape, "Reshape"},
}};

[[noreturn]] void mismatch(const LayerSpec& spec, const Shape& input, const std::string& why) {
    throw Error(ErrorKind::Shape, describe(spec) + " cannot take input " + shape_string(input) + ": " + why);
}

std::size_t conv_extent(const LayerSpec& spec, const Shape& input, std::size_t size, std::size_t k, std::size_t s,
                        std::size_t p) {
    if (size + 2 * p < k) mismatch(spec, input, "kernel larger than padded input");
    return (size + 2 * p - k) / s + 1;
}

std::size_t gate_count(LayerKind kind) {
    switch (kind) {
    case LayerKind::LSTMCell:
    case LayerKind::ConvLSTMCell: return 4;
    case LayerKind::GRUCell: return 3;
    default: return 1;
    }
}

} // namespace

std::string_view kind_name(LayerKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "?";
}

LayerKind kind_from_name(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    throw Error(ErrorKind::Config, "unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.in = in;
    s.out = out;
    s.kernel = {1, kernel, kernel};
    s.stride = {1, stride, stride};
    s.padding = {0, padding, padding};
    return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                      std::size_t padding, std::size_t output_padding) {
    auto s = conv2d(in, out, kernel, stride, padding);
    s.kind = LayerKind::ConvTranspose2D;
    s.output_padding = output_padding;
    return s;
}

LayerSpec LayerSpec::conv3d(std::size_t in, std::size_t out, std::array<std::size_t, 3> kernel,
                            std::array<std::size_t, 3> padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv3D;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
}

namespace {
LayerSpec cell(LayerKind kind, std::size_t in, std::size_t hidden, std::size_t kernel, bool return_sequences) {
    LayerSpec s;
    s.kind = kind;
    s.in = in;
    s.out = hidden;
    s.kernel = {1, kernel, kernel};
    s.padding = {0, kernel / 2, kernel / 2};
    s.return_sequences = return_sequences;
    return s;
}
} // namespace

LayerSpec LayerSpec::elman(std::size_t in, std::size_t hidden, bool return_sequences) {
    return cell(LayerKind::ElmanCell, in, hidden, 1, return_sequences);
}
LayerSpec LayerSpec::lstm(std::size_t in, std::size_t hidden, bool return_sequences) {
    return cell(LayerKind::LSTMCell, in, hidden, 1, return_sequences);
}
LayerSpec LayerSpec::gru(std::size_t in, std::size_t hidden, bool return_sequences) {
    return cell(LayerKind::GRUCell, in, hidden, 1, return_sequences);
}
LayerSpec LayerSpec::conv_lstm(std::size_t in, std::size_t hidden, std::size_t kernel, bool return_sequences) {
    if (kernel % 2 == 0) throw Error(ErrorKind::Config, "ConvLSTM kernel must be odd to preserve size");
    return cell(LayerKind::ConvLSTMCell, in, hidden, kernel, return_sequences);
}
LayerSpec LayerSpec::conv_elman(std::size_t in, std::size_t hidden, std::size_t kernel, bool return_sequences) {
    if (kernel % 2 == 0) throw Error(ErrorKind::Config, "convolutional recurrence needs an odd kernel");
    return cell(LayerKind::ConvElmanCell, in, hidden, kernel, return_sequences);
}

LayerSpec LayerSpec::norm(std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::Norm;
    s.in = s.out = channels;
    return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
    LayerSpec s;
    s.kind = LayerKind::LeakyReLU;
    s.slope = slope;
    return s;
}

LayerSpec LayerSpec::sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::Sigmoid;
    return s;
}

LayerSpec LayerSpec::flatten(std::size_t keep_dims) {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    s.keep_dims = keep_dims;
    return s;
}

LayerSpec LayerSpec::reshape(Shape target) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.target = std::move(target);
    return s;
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
    switch (spec.kind) {
    case LayerKind::Conv2D:
    case LayerKind::ConvTranspose2D: {
        if (in.size() < 3) mismatch(spec, in, "needs (..., C, H, W)");
        const std::size_t r = in.size();
        if (in[r - 3] != spec.in) mismatch(spec, in, "channel count differs");
        Shape out = in;
        out[r - 3] = spec.out;
        for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t size = in[r - 2 + a];
            const std::size_t k = spec.kernel[1 + a], s = spec.stride[1 + a], p = spec.padding[1 + a];
            if (spec.kind == LayerKind::Conv2D) {
                out[r - 2 + a] = conv_extent(spec, in, size, k, s, p);
            } else {
                if (size == 0 || (size - 1) * s + k + spec.output_padding < 2 * p + 1)
                    mismatch(spec, in, "transpose output would be empty");
                out[r - 2 + a] = (size - 1) * s + k + spec.output_padding - 2 * p;
            }
        }
        return out;
    }
    case LayerKind::Conv3D: {
        if (in.size() != 4) mismatch(spec, in, "needs (D, C, H, W)");
        if (in[1] != spec.in) mismatch(spec, in, "channel count differs");
        return {conv_extent(spec, in, in[0], spec.kernel[0], spec.stride[0], spec.padding[0]), spec.out,
                conv_extent(spec, in, in[2], spec.kernel[1], spec.stride[1], spec.padding[1]),
                conv_extent(spec, in, in[3], spec.kernel[2], spec.stride[2], spec.padding[2])};
    }
    case LayerKind::Dense: {
        if (in.empty() || in.back() != spec.in) mismatch(spec, in, "last axis must equal input features");
        Shape out = in;
        out.back() = spec.out;
        return out;
    }
    case LayerKind::ElmanCell:
    case LayerKind::LSTMCell:
    case LayerKind::GRUCell: {
        if (in.size() != 2 || in[1] != spec.in) mismatch(spec, in, "needs (T, F) with matching F");
        if (in[0] == 0) mismatch(spec, in, "empty sequence");
        return spec.return_sequences ? Shape{in[0], spec.out} : Shape{spec.out};
    }
    case LayerKind::ConvLSTMCell:
    case LayerKind::ConvElmanCell: {
        if (in.size() != 4 || in[1] != spec.in) mismatch(spec, in, "needs (T, C, H, W) with matching C");
        if (in[0] == 0) mismatch(spec, in, "empty sequence");
        return spec.return_sequences ? Shape{in[0], spec.out, in[2], in[3]} : Shape{spec.out, in[2], in[3]};
    }
    case LayerKind::Norm: {
        const bool vector_ok = in.size() == 1 && in[0] == spec.in;
        const bool map_ok = in.size() >= 3 && in[in.size() - 3] == spec.in;
        if (!vector_ok && !map_ok) mismatch(spec, in, "channel axis differs");
        return in;
    }
    case LayerKind::LeakyReLU:
    case LayerKind::Sigmoid:
        return in;
    case LayerKind::Flatten: {
        if (spec.keep_dims == 0) mismatch(spec, in, "keep_dims must count the batch axis");
        const std::size_t keep = spec.keep_dims - 1;
        if (keep > in.size()) mismatch(spec, in, "keeps more axes than exist");
        Shape out(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(keep));
        std::size_t rest = 1;
        for (std::size_t i = keep; i < in.size(); ++i) rest *= in[i];
        out.push_back(rest);
        return out;
    }
    case LayerKind::Reshape:
        if (shape_size(spec.target) != shape_size(in)) mismatch(spec, in, "element count differs");
        return spec.target;
    }
    throw Error(ErrorKind::Config, "unhandled layer kind");
}

std::vector<ParamShape> param_shapes(const LayerSpec& spec) {
    const std::size_t kd = spec.kernel[0], kh = spec.kernel[1], kw = spec.kernel[2];
    switch (spec.kind) {
    case LayerKind::Conv2D:
        return {{"weight", {spec.out, spec.in, kh, kw}, spec.in * kh * kw}, {"bias", {spec.out}, 0}};
    case LayerKind::ConvTranspose2D:
        return {{"weight", {spec.in, spec.out, kh, kw}, spec.in * kh * kw}, {"bias", {spec.out}, 0}};
    case LayerKind::Conv3D:
        return {{"weight", {spec.out, spec.in, kd, kh, kw}, spec.in * kd * kh * kw}, {"bias", {spec.out}, 0}};
    case LayerKind::Dense:
        return {{"weight", {spec.out, spec.in}, spec.in}, {"bias", {spec.out}, 0}};
    case LayerKind::ElmanCell:
    case LayerKind::LSTMCell:
    case LayerKind::GRUCell: {
        const std::size_t g = gate_count(spec.kind) * spec.out;
        return {{"weight", {g, spec.in}, spec.in},
                {"recurrent_weight", {g, spec.out}, spec.out},
                {"bias", {g}, 0}};
    }
    case LayerKind::ConvLSTMCell:
    case LayerKind::ConvElmanCell: {
        const std::size_t g = gate_count(spec.kind) * spec.out;
        return {{"weight", {g, spec.in, kh, kw}, spec.in * kh * kw},
                {"recurrent_weight", {g, spec.out, kh, kw}, spec.out * kh * kw},
                {"bias", {g}, 0}};
    }
    case LayerKind::Norm:
        return {{"gamma", {spec.in}, 0}, {"beta", {spec.in}, 0}};
    default:
        return {};
    }
}

std::string describe(const LayerSpec& spec) {
    std::string s(kind_name(spec.kind));
    switch (spec.kind) {
    case LayerKind::Conv2D:
    case LayerKind::ConvTranspose2D:
    case LayerKind::Conv3D:
    case LayerKind::ConvLSTMCell:
    case LayerKind::ConvElmanCell:
        s += "(" + std::to_string(spec.in) + "->" + std::to_string(spec.out) + ", k" + std::to_string(spec.kernel[1]) +
             ")";
        break;
    case LayerKind::Dense:
    case LayerKind::ElmanCell:
    case LayerKind::LSTMCell:
    case LayerKind::GRUCell:
    case LayerKind::Norm:
        s += "(" + std::to_string(spec.in) + "->" + std::to_string(spec.out) + ")";
        break;
    default:
        break;
    }
    return s;
}

void to_json(nlohmann::json& j, const LayerSpec& spec) {
    j = nlohmann::json{{"kind", kind_name(spec.kind)},
                       {"in", spec.in},
                       {"out", spec.out},
                       {"kernel", spec.kernel},
                       {"stride", spec.stride},
                       {"padding", spec.padding},
                       {"output_padding", spec.output_padding},
                       {"slope", spec.slope},
                       {"return_sequences", spec.return_sequences},
                       {"keep_dims", spec.keep_dims},
                       {"target", spec.target},
                       {"momentum", spec.momentum},
                       {"epsilon", spec.epsilon}};
}

void from_json(const nlohmann::json& j, LayerSpec& spec) {
    spec.kind = kind_from_name(j.at("kind").get<std::string>());
    j.at("in").get_to(spec.in);
    j.at("out").get_to(spec.out);
    j.at("kernel").get_to(spec.kernel);
    j.at("stride").get_to(spec.stride);
    j.at("padding").get_to(spec.padding);
    j.at("output_padding").get_to(spec.output_padding);
    j.at("slope").get_to(spec.slope);
    j.at("return_sequences").get_to(spec.return_sequences);
    j.at("keep_dims").get_to(spec.keep_dims);
    j.at("target").get_to(spec.target);
    j.at("momentum").get_to(spec.momentum);
    j.at("epsilon").get_to(spec.epsilon);
}

} // namespace latentcast::nn
