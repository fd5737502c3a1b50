#include "latentcast/nn/network.hpp"

#include <cmath>
#include <random>

#include "latentcast/error.hpp"

namespace latentcast::nn {

Shape batched(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

template <typename T>
std::vector<Tensor<T>> he_init(const LayerSpec& spec, double slope, std::uint64_t seed) {
    std::vector<Tensor<T>> out;
    std::mt19937_64 rng(seed);
    for (const auto& ps : param_shapes(spec)) {
        Tensor<T> t(ps.shape);
        if (ps.name == "gamma") {
            t.fill(T{1});
        } else if (ps.fan_in > 0) {
            const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(ps.fan_in)));
            std::normal_distribution<double> dist(0.0, stddev);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
        }
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
Network<T>::Network(std::vector<LayerSpec> specs, Shape input_shape)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        try {
            shapes_.push_back(nn::output_shape(specs_[i], shapes_.back()));
        } catch (const Error& e) {
            throw Error(e.kind(), "layer " + std::to_string(i) + ": " + e.what());
        }
        layers_.push_back(make_layer<T>(specs_[i]));
    }
}

template <typename T>
Network<T> Network<T>::build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed, double slope) {
    Network net(std::move(specs), std::move(input_shape));
    net.initialize(seed, slope);
    return net;
}

template <typename T>
Network<T>::Network(const Network& other)
    : specs_(other.specs_), input_shape_(other.input_shape_), shapes_(other.shapes_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed, double slope) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::uint64_t layer_seed = 0;
        std::uint32_t words[2];
        seq.generate(words, words + 2);
        layer_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
        auto values = he_init<T>(specs_[i], slope, layer_seed);
        auto params = layers_[i]->parameters();
        for (std::size_t k = 0; k < params.size(); ++k) {
            params[k]->value = std::move(values[k]);
            params[k]->grad.fill(T{0});
        }
    }
}

template <typename T>
void Network<T>::check_input(const Tensor<T>& x, std::size_t layer) const {
    const Shape& want = shapes_.at(layer);
    const Shape& got = x.shape();
    if (got.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), got.begin() + 1) || got[0] == 0)
        throw Error(ErrorKind::Shape, "layer " + std::to_string(layer) + " (" + describe(specs_.at(layer)) +
                                          ") expects (N, ...) with per-sample " + shape_string(want) + ", got " +
                                          shape_string(got));
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode) {
    return forward_range(x, 0, layers_.size(), mode);
}

template <typename T>
Tensor<T> Network<T>::forward_range(const Tensor<T>& x, std::size_t first, std::size_t last, Mode mode) {
    if (first > last || last > layers_.size()) throw Error(ErrorKind::State, "invalid layer range");
    check_input(x, first);
    if (first == last) return x;
    Tensor<T> h = layers_[first]->forward(x, mode);
    for (std::size_t i = first + 1; i < last; ++i) h = layers_[i]->forward(h, mode);
    return h;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_out) {
    return backward_range(grad_out, 0, layers_.size());
}

template <typename T>
Tensor<T> Network<T>::backward_range(const Tensor<T>& grad_out, std::size_t first, std::size_t last) {
    if (first > last || last > layers_.size()) throw Error(ErrorKind::State, "invalid layer range");
    check_input(grad_out, last);
    Tensor<T> g = grad_out;
    for (std::size_t i = last; i-- > first;) g = layers_[i]->backward(g);
    return g;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto* p : parameters()) p->grad.fill(T{0});
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_)
        for (auto* p : l->parameters()) out.push_back(p);
    return out;
}

template <typename T>
std::vector<Buffer<T>> Network<T>::buffers() {
    std::vector<Buffer<T>> out;
    for (auto& l : layers_)
        for (auto b : l->buffers()) out.push_back(b);
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : specs_)
        for (const auto& ps : param_shapes(s)) n += shape_size(ps.shape);
    return n;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    Network<U> out(specs_, input_shape_);
    auto src = const_cast<Network*>(this)->parameters();
    auto dst = out.parameters();
    for (std::size_t k = 0; k < src.size(); ++k) {
        dst[k]->value = src[k]->value.template cast<U>();
        dst[k]->grad = src[k]->grad.template cast<U>();
    }
    auto sb = const_cast<Network*>(this)->buffers();
    auto db = out.buffers();
    for (std::size_t k = 0; k < sb.size(); ++k) *db[k].value = sb[k].value->template cast<U>();
    return out;
}

template <typename T>
double Network<T>::train_step(const Tensor<T>& x, const Tensor<T>& target, LossKind loss, Optimizer<T>& optimizer) {
    zero_grad();
    const Tensor<T> pred = forward(x, Mode::Train);
    auto lg = loss_with_grad(loss, pred, target);
    if (!std::isfinite(lg.value)) throw Error(ErrorKind::NonFinite, "non-finite training loss");
    backward(lg.grad);
    auto params = parameters();
    optimizer.step(params);
    return lg.value;
}

template std::vector<Tensor<float>> he_init<float>(const LayerSpec&, double, std::uint64_t);
template std::vector<Tensor<double>> he_init<double>(const LayerSpec&, double, std::uint64_t);
template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

} // namespace latentcast::nn
