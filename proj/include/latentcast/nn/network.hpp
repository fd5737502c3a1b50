#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "latentcast/nn/layers.hpp"
#include "latentcast/nn/loss.hpp"
#include "latentcast/nn/optimizer.hpp"

namespace latentcast::nn {

/// He initialization adapted to leaky rectifiers: weights ~ Normal(0, 2 / ((1 + slope^2) fan_in)),
/// biases and shifts zero, normalization scales one. Returned in param_shapes order.
template <typename T>
std::vector<Tensor<T>> he_init(const LayerSpec& spec, double slope, std::uint64_t seed);

/// A sequential stack of layers with a declared per-sample input shape.
template <typename T>
class Network {
public:
    Network() = default;
    /// Validates the shape chain and leaves every parameter at zero.
    Network(std::vector<LayerSpec> specs, Shape input_shape);
    /// Builds and He-initializes; layer i is seeded from (seed, i).
    static Network build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed, double slope = 0.01);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    void initialize(std::uint64_t seed, double slope = 0.01);

    /// x has shape (N, input_shape...).
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    /// Runs layers [first, last) only; x must carry that range's input shape.
    Tensor<T> forward_range(const Tensor<T>& x, std::size_t first, std::size_t last, Mode mode);
    /// Backpropagates through every layer after a Train-mode forward; returns d/dx.
    Tensor<T> backward(const Tensor<T>& grad_out);
    Tensor<T> backward_range(const Tensor<T>& grad_out, std::size_t first, std::size_t last);

    void zero_grad();
    std::vector<Parameter<T>*> parameters();
    std::vector<Buffer<T>> buffers();
    std::size_t parameter_count() const;

    std::size_t size() const noexcept { return layers_.size(); }
    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
    const Shape& input_shape() const noexcept { return input_shape_; }
    /// Per-sample shape entering layer i (i == size() gives the output shape).
    const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }
    const Shape& output_shape() const { return shapes_.back(); }

    template <typename U>
    Network<U> cast() const;

    /// One optimization step on (x, target): forward, loss, backward, update. Returns the loss.
    double train_step(const Tensor<T>& x, const Tensor<T>& target, LossKind loss, Optimizer<T>& optimizer);

private:
    void check_input(const Tensor<T>& x, std::size_t layer) const;

    std::vector<LayerSpec> specs_;
    Shape input_shape_;
    std::vector<Shape> shapes_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Prepends the batch axis to a per-sample shape.
Shape batched(std::size_t n, const Shape& sample);

} // namespace latentcast::nn
