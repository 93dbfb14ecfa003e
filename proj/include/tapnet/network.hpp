#pragma once

#include <string>
#include <variant>
#include <vector>

#include "tapnet/autodiff.hpp"
#include "tapnet/rng.hpp"
#include "tapnet/tensor.hpp"

namespace tapnet {

struct DenseLayer {
    Tensor weight; // [in, out]
    Tensor bias;   // [out]
};

struct ReluLayer {};

struct Conv2dLayer {
    Tensor weight; // [oc, ic, kh, kw]
    Tensor bias;   // [oc]
    std::size_t pad = 1;
};

struct MaxPool2dLayer {
    std::size_t k = 2;
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, ReluLayer, Conv2dLayer, MaxPool2dLayer, FlattenLayer>;

/// Feature extractor mapping an input batch to one feature row per sample.
/// Weights are Glorot-uniform, biases zero; every parameter carries a grad slot.
class EmbeddingNetwork {
public:
    EmbeddingNetwork(std::vector<Layer> layers, std::vector<std::size_t> input_shape);

    /// Dense stack: input_dim -> hidden... -> embed_dim, ReLU between layers.
    static EmbeddingNetwork mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                std::size_t embed_dim, Rng& rng);

    /// Conv blocks (3x3 pad-1 conv, ReLU, 2x2 maxpool) per channel entry, then
    /// flatten. Input is [channels, height, width] per sample.
    static EmbeddingNetwork conv_stack(std::size_t in_channels, std::size_t height,
                                       std::size_t width, const std::vector<std::size_t>& channels,
                                       Rng& rng);

    /// Rebuild layer structure from a descriptor string (parameters zeroed).
    static EmbeddingNetwork from_descriptor(const std::string& desc);

    /// Forward pass on a tape; records the graph when the tape has gradients
    /// enabled. Throws NumericError naming the layer if an activation goes
    /// non-finite.
    Var forward(Tape& tape, Var input);

    /// Plain evaluation: forward on a gradient-free scratch tape.
    Tensor embed(const Tensor& batch);

    std::vector<Tensor*> parameters();
    std::vector<std::string> parameter_names() const;
    void zero_grad();

    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    std::size_t output_dim() const { return output_dim_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    /// Compact textual architecture descriptor, parseable by from_descriptor.
    std::string descriptor() const;

private:
    void validate_and_set_output_dim_();

    std::vector<Layer> layers_;
    std::vector<std::size_t> input_shape_; // per-sample shape
    std::size_t output_dim_ = 0;           // L
};

/// Glorot-uniform fill: entries in +-sqrt(6 / (fan_in + fan_out)).
void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

} // namespace tapnet
