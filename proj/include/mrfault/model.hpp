#pragma once

// CNN layer graph. Convolution and fully connected layers carry the trainable
// parameters that get mapped onto MRs; every other operator runs electronically.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mrfault/tensor.hpp"

namespace mrfault::nn {

struct Conv2d {
    std::string name;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Tensor weight;               // [out, in, kh, kw]
    std::optional<Tensor> bias;  // [out]

    std::size_t fan_in() const { return in_channels * kernel_h * kernel_w; }
};

struct Linear {
    std::string name;
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Tensor weight;               // [out, in]
    std::optional<Tensor> bias;  // [out]

    std::size_t fan_in() const { return in_features; }
};

struct ReLU {};

struct MaxPool2d {
    std::size_t kernel = 2;
    std::size_t stride = 2;
};

struct AvgPool2d {
    std::size_t kernel = 2;
    std::size_t stride = 2;
};

struct Flatten {};

/// Adds the output of an earlier layer to the current activation.
struct ResidualAdd {
    static constexpr std::size_t kModelInput = static_cast<std::size_t>(-1);
    std::size_t from = kModelInput;  // layer index, or kModelInput
};

/// Per-channel inference affine. Folded into the preceding conv/fc at load
/// time when possible; otherwise applied electronically.
struct BatchNorm {
    std::string name;
    std::vector<float> scale;
    std::vector<float> shift;
};

using Layer = std::variant<Conv2d, Linear, ReLU, MaxPool2d, AvgPool2d, Flatten, ResidualAdd, BatchNorm>;

std::string layer_kind(const Layer& layer);

/// True for the layers executed on the photonic substrate.
inline bool is_mapped(const Layer& layer) {
    return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Linear>(layer);
}

struct ModelInfo {
    std::string name;
    std::string dataset;
    std::string variant = "original";
    Shape input_shape;  // [C, H, W]
    std::size_t num_classes = 0;
    std::optional<double> recorded_test_accuracy;
};

class Model {
public:
    Model() = default;
    Model(ModelInfo info, std::vector<Layer> layers);

    const ModelInfo& info() const { return info_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t size() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }

    /// Output shape of every layer for the declared input shape. Throws
    /// ContractError when shapes do not chain.
    std::vector<Shape> layer_output_shapes() const;
    Shape output_shape() const;

    std::size_t parameter_count() const;
    std::size_t mapped_weight_count() const;
    std::size_t conv_parameter_count() const;
    std::size_t fc_parameter_count() const;

    /// Folds every BatchNorm that directly follows a conv/fc into it.
    Model with_batchnorm_folded() const;

private:
    ModelInfo info_;
    std::vector<Layer> layers_;
};

/// Image classification set: `count` images of shape [channels, rows, cols].
struct Dataset {
    std::size_t count = 0;
    std::size_t channels = 1;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t num_classes = 10;
    std::vector<float> pixels;
    std::vector<std::uint8_t> labels;

    std::size_t image_size() const { return channels * rows * cols; }
    Tensor image(std::size_t i) const;
    Dataset head(std::size_t n) const;
};

}  // namespace mrfault::nn
