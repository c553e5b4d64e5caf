#include "mrfault/model.hpp"

#include <algorithm>
#include <sstream>

#include "mrfault/error.hpp"

namespace mrfault::nn {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
        throw ContractError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            to_string(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

std::string layer_kind(const Layer& layer) {
    struct Visitor {
        std::string operator()(const Conv2d&) const { return "conv2d"; }
        std::string operator()(const Linear&) const { return "fc"; }
        std::string operator()(const ReLU&) const { return "relu"; }
        std::string operator()(const MaxPool2d&) const { return "maxpool2d"; }
        std::string operator()(const AvgPool2d&) const { return "avgpool2d"; }
        std::string operator()(const Flatten&) const { return "flatten"; }
        std::string operator()(const ResidualAdd&) const { return "add"; }
        std::string operator()(const BatchNorm&) const { return "batchnorm"; }
    };
    return std::visit(Visitor{}, layer);
}

Model::Model(ModelInfo info, std::vector<Layer> layers) : info_(std::move(info)), layers_(std::move(layers)) {}

namespace {

std::size_t pooled(std::size_t in, std::size_t k, std::size_t s, const char* what) {
    if (k == 0 || s == 0 || in < k) {
        throw ContractError(std::string(what) + ": window larger than input");
    }
    return (in - k) / s + 1;
}

void require_rank3(const Shape& in, const std::string& what) {
    if (in.size() != 3) throw ContractError(what + " expects a [C, H, W] input, got " + to_string(in));
}

}  // namespace

std::vector<Shape> Model::layer_output_shapes() const {
    std::vector<Shape> out;
    out.reserve(layers_.size());
    Shape cur = info_.input_shape;
    if (cur.empty()) throw ContractError("model input shape is not set");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& layer = layers_[i];
        const std::string where = "layer " + std::to_string(i) + " (" + layer_kind(layer) + ")";
        if (const auto* c = std::get_if<Conv2d>(&layer)) {
            require_rank3(cur, where);
            if (cur[0] != c->in_channels) {
                throw ContractError(where + ": expects " + std::to_string(c->in_channels) + " channels, got " +
                                    std::to_string(cur[0]));
            }
            if (c->weight.shape() != Shape{c->out_channels, c->in_channels, c->kernel_h, c->kernel_w}) {
                throw ContractError(where + ": weight shape " + to_string(c->weight.shape()));
            }
            if (c->stride == 0 || cur[1] + 2 * c->padding < c->kernel_h || cur[2] + 2 * c->padding < c->kernel_w) {
                throw ContractError(where + ": kernel does not fit input " + to_string(cur));
            }
            cur = {c->out_channels, (cur[1] + 2 * c->padding - c->kernel_h) / c->stride + 1,
                   (cur[2] + 2 * c->padding - c->kernel_w) / c->stride + 1};
        } else if (const auto* l = std::get_if<Linear>(&layer)) {
            if (cur.size() != 1 || cur[0] != l->in_features) {
                throw ContractError(where + ": expects [" + std::to_string(l->in_features) + "], got " +
                                    to_string(cur));
            }
            if (l->weight.shape() != Shape{l->out_features, l->in_features}) {
                throw ContractError(where + ": weight shape " + to_string(l->weight.shape()));
            }
            cur = {l->out_features};
        } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
            require_rank3(cur, where);
            cur = {cur[0], pooled(cur[1], p->kernel, p->stride, where.c_str()),
                   pooled(cur[2], p->kernel, p->stride, where.c_str())};
        } else if (const auto* a = std::get_if<AvgPool2d>(&layer)) {
            require_rank3(cur, where);
            cur = {cur[0], pooled(cur[1], a->kernel, a->stride, where.c_str()),
                   pooled(cur[2], a->kernel, a->stride, where.c_str())};
        } else if (std::holds_alternative<Flatten>(layer)) {
            cur = {element_count(cur)};
        } else if (const auto* r = std::get_if<ResidualAdd>(&layer)) {
            if (r->from != ResidualAdd::kModelInput && r->from >= i) {
                throw ContractError(where + ": residual source must precede the add");
            }
            const Shape& src = r->from == ResidualAdd::kModelInput ? info_.input_shape : out[r->from];
            if (src != cur) {
                throw ContractError(where + ": residual shape " + to_string(src) + " vs " + to_string(cur));
            }
        } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
            if (cur.empty() || b->scale.size() != cur[0] || b->shift.size() != cur[0]) {
                throw ContractError(where + ": channel count mismatch");
            }
        }
        out.push_back(cur);
    }
    return out;
}

Shape Model::output_shape() const {
    auto shapes = layer_output_shapes();
    return shapes.empty() ? info_.input_shape : shapes.back();
}

std::size_t Model::conv_parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* c = std::get_if<Conv2d>(&layer)) n += c->weight.size() + (c->bias ? c->bias->size() : 0);
    }
    return n;
}

std::size_t Model::fc_parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* l = std::get_if<Linear>(&layer)) n += l->weight.size() + (l->bias ? l->bias->size() : 0);
    }
    return n;
}

std::size_t Model::parameter_count() const {
    std::size_t n = conv_parameter_count() + fc_parameter_count();
    for (const auto& layer : layers_) {
        if (const auto* b = std::get_if<BatchNorm>(&layer)) n += b->scale.size() + b->shift.size();
    }
    return n;
}

std::size_t Model::mapped_weight_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* c = std::get_if<Conv2d>(&layer)) n += c->weight.size();
        if (const auto* l = std::get_if<Linear>(&layer)) n += l->weight.size();
    }
    return n;
}

namespace {

// Scales output row `o` of a weight tensor and folds the shift into the bias.
template <typename L>
void fold_into(L& target, const BatchNorm& bn, std::size_t outputs, std::size_t fan_in) {
    if (bn.scale.size() != outputs) throw ContractError("batchnorm does not match preceding layer outputs");
    if (!target.bias) target.bias = Tensor({outputs}, 0.0f);
    auto w = target.weight.data();
    auto b = target.bias->data();
    for (std::size_t o = 0; o < outputs; ++o) {
        for (std::size_t k = 0; k < fan_in; ++k) w[o * fan_in + k] *= bn.scale[o];
        b[o] = b[o] * bn.scale[o] + bn.shift[o];
    }
}

}  // namespace

Model Model::with_batchnorm_folded() const {
    std::vector<Layer> folded;
    folded.reserve(layers_.size());
    // Residual sources refer to layer indices; remap them as layers disappear.
    std::vector<std::size_t> remap(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto* bn = std::get_if<BatchNorm>(&layers_[i]);
        if (bn && !folded.empty()) {
            if (auto* c = std::get_if<Conv2d>(&folded.back())) {
                fold_into(*c, *bn, c->out_channels, c->fan_in());
                remap[i] = folded.size() - 1;
                continue;
            }
            if (auto* l = std::get_if<Linear>(&folded.back())) {
                fold_into(*l, *bn, l->out_features, l->fan_in());
                remap[i] = folded.size() - 1;
                continue;
            }
        }
        Layer copy = layers_[i];
        if (auto* r = std::get_if<ResidualAdd>(&copy); r && r->from != ResidualAdd::kModelInput) {
            r->from = remap.at(r->from);
        }
        folded.push_back(std::move(copy));
        remap[i] = folded.size() - 1;
    }
    return Model(info_, std::move(folded));
}

Tensor Dataset::image(std::size_t i) const {
    if (i >= count) throw ContractError("image index out of range");
    const std::size_t n = image_size();
    return Tensor({channels, rows, cols},
                  std::vector<float>(pixels.begin() + static_cast<std::ptrdiff_t>(i * n),
                                     pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

Dataset Dataset::head(std::size_t n) const {
    Dataset d = *this;
    d.count = std::min(n, count);
    d.pixels.resize(d.count * image_size());
    d.labels.resize(d.count);
    return d;
}

}  // namespace mrfault::nn
