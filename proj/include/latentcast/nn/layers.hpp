#pragma once

#include <memory>
#include <string>
#include <vector>

#include "latentcast/nn/layer_spec.hpp"
#include "latentcast/nn/tensor.hpp"

namespace latentcast::nn {

/// A trainable array and its gradient slot (always the same shape).
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    std::size_t fan_in = 0;
};

/// Non-trainable state that still has to survive a checkpoint (running statistics).
template <typename T>
struct Buffer {
    std::string name;
    Tensor<T>* value = nullptr;
};

/// A layer caches what its backward pass needs during a Train-mode forward.
/// Backward consumes that cache, accumulates parameter gradients and returns the
/// gradient with respect to the layer input.
template <typename T>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const noexcept { return spec_; }

    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::unique_ptr<Layer<T>> clone() const = 0;

    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    virtual std::vector<Buffer<T>> buffers() { return {}; }

protected:
    LayerSpec spec_;
};

/// Builds a layer with zero-valued parameters (see he_init for initialization).
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

} // namespace latentcast::nn
