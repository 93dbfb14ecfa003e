#include "tapnet/network.hpp"

#include <cmath>
#include <sstream>

#include "tapnet/errors.hpp"

namespace tapnet {

namespace {

std::vector<std::size_t> layer_output_shape(const Layer& layer,
                                            const std::vector<std::size_t>& in) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        if (in.size() != 1 || in[0] != d->weight.dim(0))
            throw ShapeError("dense layer expects a flat input of width " +
                             std::to_string(d->weight.dim(0)) + ", got " +
                             Tensor::shape_string(in));
        return {d->weight.dim(1)};
    }
    if (std::holds_alternative<ReluLayer>(layer)) return in;
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        if (in.size() != 3 || in[0] != c->weight.dim(1))
            throw ShapeError("conv layer expects [C,H,W] input with C=" +
                             std::to_string(c->weight.dim(1)) + ", got " +
                             Tensor::shape_string(in));
        const auto kh = c->weight.dim(2), kw = c->weight.dim(3);
        if (in[1] + 2 * c->pad < kh || in[2] + 2 * c->pad < kw)
            throw ShapeError("conv kernel larger than padded input");
        return {c->weight.dim(0), in[1] + 2 * c->pad - kh + 1, in[2] + 2 * c->pad - kw + 1};
    }
    if (const auto* p = std::get_if<MaxPool2dLayer>(&layer)) {
        if (in.size() != 3) throw ShapeError("maxpool expects [C,H,W] input");
        if (in[1] / p->k == 0 || in[2] / p->k == 0)
            throw ShapeError("maxpool window larger than input");
        return {in[0], in[1] / p->k, in[2] / p->k};
    }
    // flatten
    std::size_t n = 1;
    for (std::size_t d : in) n *= d;
    return {n};
}

std::vector<std::size_t> split_sizes(const std::string& s, char sep) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
        if (tok.empty()) throw DataError("empty size field in descriptor");
        out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    return out;
}

} // namespace

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
}

EmbeddingNetwork::EmbeddingNetwork(std::vector<Layer> layers, std::vector<std::size_t> input_shape)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
    validate_and_set_output_dim_();
}

void EmbeddingNetwork::validate_and_set_output_dim_() {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    std::vector<std::size_t> shape = input_shape_;
    for (const Layer& l : layers_) shape = layer_output_shape(l, shape);
    if (shape.size() != 1)
        throw ShapeError("network output must be a flat feature vector, got " +
                         Tensor::shape_string(shape) + "; add a flatten layer");
    output_dim_ = shape[0];
    for (Tensor* p : parameters())
        if (!p->has_grad()) p->enable_grad();
}

EmbeddingNetwork EmbeddingNetwork::mlp(std::size_t input_dim,
                                       const std::vector<std::size_t>& hidden,
                                       std::size_t embed_dim, Rng& rng) {
    std::vector<Layer> layers;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        DenseLayer d{Tensor({in, h}), Tensor({h})};
        glorot_fill(d.weight, in, h, rng);
        layers.emplace_back(std::move(d));
        layers.emplace_back(ReluLayer{});
        in = h;
    }
    DenseLayer out{Tensor({in, embed_dim}), Tensor({embed_dim})};
    glorot_fill(out.weight, in, embed_dim, rng);
    layers.emplace_back(std::move(out));
    return EmbeddingNetwork(std::move(layers), {input_dim});
}

EmbeddingNetwork EmbeddingNetwork::conv_stack(std::size_t in_channels, std::size_t height,
                                              std::size_t width,
                                              const std::vector<std::size_t>& channels, Rng& rng) {
    std::vector<Layer> layers;
    std::size_t ic = in_channels;
    for (std::size_t oc : channels) {
        Conv2dLayer conv{Tensor({oc, ic, 3, 3}), Tensor({oc}), 1};
        glorot_fill(conv.weight, ic * 9, oc * 9, rng);
        layers.emplace_back(std::move(conv));
        layers.emplace_back(ReluLayer{});
        layers.emplace_back(MaxPool2dLayer{2});
        ic = oc;
    }
    layers.emplace_back(FlattenLayer{});
    return EmbeddingNetwork(std::move(layers), {in_channels, height, width});
}

Var EmbeddingNetwork::forward(Tape& tape, Var input) {
    const auto& in_shape = tape.value(input).shape();
    if (in_shape.size() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), in_shape.begin() + 1))
        throw ShapeError("forward: batch shape " + Tensor::shape_string(in_shape) +
                         " does not match input spec " + Tensor::shape_string(input_shape_));
    if (in_shape[0] == 0) throw ShapeError("forward: empty batch");

    Var x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Layer& l = layers_[i];
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            x = tape.add_rows(tape.matmul(x, tape.param(d->weight)), tape.param(d->bias));
        } else if (std::holds_alternative<ReluLayer>(l)) {
            x = tape.relu(x);
        } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            x = tape.conv2d(x, tape.param(c->weight), tape.param(c->bias), c->pad);
        } else if (auto* p = std::get_if<MaxPool2dLayer>(&l)) {
            x = tape.maxpool2d(x, p->k);
        } else {
            x = tape.flatten(x);
        }
        if (!tape.value(x).all_finite())
            throw NumericError("non-finite activation after layer " + std::to_string(i));
    }
    return x;
}

Tensor EmbeddingNetwork::embed(const Tensor& batch) {
    Tape tape(false);
    Var out = forward(tape, tape.constant(batch));
    return tape.value(out);
}

std::vector<Tensor*> EmbeddingNetwork::parameters() {
    std::vector<Tensor*> out;
    for (Layer& l : layers_) {
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            out.push_back(&d->weight);
            out.push_back(&d->bias);
        } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            out.push_back(&c->weight);
            out.push_back(&c->bias);
        }
    }
    return out;
}

std::vector<std::string> EmbeddingNetwork::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (std::holds_alternative<DenseLayer>(l) || std::holds_alternative<Conv2dLayer>(l)) {
            out.push_back("layer" + std::to_string(i) + ".weight");
            out.push_back("layer" + std::to_string(i) + ".bias");
        }
    }
    return out;
}

void EmbeddingNetwork::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

std::string EmbeddingNetwork::descriptor() const {
    std::ostringstream out;
    out << "input:";
    for (std::size_t i = 0; i < input_shape_.size(); ++i) {
        if (i) out << 'x';
        out << input_shape_[i];
    }
    for (const Layer& l : layers_) {
        out << ';';
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            out << "dense:" << d->weight.dim(0) << 'x' << d->weight.dim(1);
        } else if (std::holds_alternative<ReluLayer>(l)) {
            out << "relu";
        } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
            out << "conv:" << c->weight.dim(0) << 'x' << c->weight.dim(1) << 'x'
                << c->weight.dim(2) << 'x' << c->weight.dim(3) << ":pad" << c->pad;
        } else if (const auto* p = std::get_if<MaxPool2dLayer>(&l)) {
            out << "maxpool:" << p->k;
        } else {
            out << "flatten";
        }
    }
    return out.str();
}

EmbeddingNetwork EmbeddingNetwork::from_descriptor(const std::string& desc) {
    std::vector<std::size_t> input_shape;
    std::vector<Layer> layers;
    std::stringstream ss(desc);
    std::string item;
    bool first = true;
    while (std::getline(ss, item, ';')) {
        if (first) {
            if (item.rfind("input:", 0) != 0)
                throw DataError("architecture descriptor must start with input:");
            input_shape = split_sizes(item.substr(6), 'x');
            first = false;
            continue;
        }
        if (item.rfind("dense:", 0) == 0) {
            const auto dims = split_sizes(item.substr(6), 'x');
            if (dims.size() != 2) throw DataError("dense descriptor needs INxOUT");
            layers.emplace_back(DenseLayer{Tensor({dims[0], dims[1]}), Tensor({dims[1]})});
        } else if (item == "relu") {
            layers.emplace_back(ReluLayer{});
        } else if (item.rfind("conv:", 0) == 0) {
            const auto body = item.substr(5);
            const auto pad_pos = body.find(":pad");
            if (pad_pos == std::string::npos) throw DataError("conv descriptor needs :padN");
            const auto dims = split_sizes(body.substr(0, pad_pos), 'x');
            if (dims.size() != 4) throw DataError("conv descriptor needs OCxICxKHxKW");
            Conv2dLayer c{Tensor({dims[0], dims[1], dims[2], dims[3]}), Tensor({dims[0]}),
                          static_cast<std::size_t>(std::stoull(body.substr(pad_pos + 4)))};
            layers.emplace_back(std::move(c));
        } else if (item.rfind("maxpool:", 0) == 0) {
            layers.emplace_back(MaxPool2dLayer{static_cast<std::size_t>(std::stoull(item.substr(8)))});
        } else if (item == "flatten") {
            layers.emplace_back(FlattenLayer{});
        } else {
            throw DataError("unknown layer descriptor: " + item);
        }
    }
    if (first) throw DataError("empty architecture descriptor");
    return EmbeddingNetwork(std::move(layers), std::move(input_shape));
}

} // namespace tapnet
