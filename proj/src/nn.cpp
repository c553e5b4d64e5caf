#include "mrfault/nn.hpp"

#include <algorithm>
#include <limits>
#include <thread>

#include "mrfault/error.hpp"

namespace mrfault::nn {

namespace {

void require_chw(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw ContractError(std::string(what) + " expects a [C, H, W] tensor, got " + to_string(t.shape()));
}

template <typename Pool, typename Reduce>
Tensor pool2d(const Pool& pool, const Tensor& input, const char* what, Reduce reduce) {
    require_chw(input, what);
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (pool.kernel == 0 || pool.stride == 0 || h < pool.kernel || w < pool.kernel) {
        throw ContractError(std::string(what) + ": window larger than input");
    }
    const std::size_t ho = (h - pool.kernel) / pool.stride + 1;
    const std::size_t wo = (w - pool.kernel) / pool.stride + 1;
    Tensor out({c, ho, wo});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                out[(ch * ho + oy) * wo + ox] = reduce(ch, oy * pool.stride, ox * pool.stride);
            }
        }
    }
    return out;
}

}  // namespace

Tensor conv2d(const Conv2d& layer, const Tensor& input) {
    require_chw(input, "conv2d");
    if (input.dim(0) != layer.in_channels) throw ContractError("conv2d: input channel mismatch");
    const std::size_t h = input.dim(1), w = input.dim(2);
    if (h + 2 * layer.padding < layer.kernel_h || w + 2 * layer.padding < layer.kernel_w || layer.stride == 0) {
        throw ContractError("conv2d: kernel does not fit the input");
    }
    const std::size_t ho = (h + 2 * layer.padding - layer.kernel_h) / layer.stride + 1;
    const std::size_t wo = (w + 2 * layer.padding - layer.kernel_w) / layer.stride + 1;
    Tensor out({layer.out_channels, ho, wo});
    const auto pad = static_cast<std::ptrdiff_t>(layer.padding);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        const float b = layer.bias ? (*layer.bias)[o] : 0.0f;
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
                    for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += static_cast<double>(layer.weight[((o * layer.in_channels + ci) * layer.kernel_h + ky) * layer.kernel_w +
                                                kx]) *
                                   input[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                        }
                    }
                }
                out[(o * ho + oy) * wo + ox] = static_cast<float>(acc) + b;
            }
        }
    }
    return out;
}

Tensor linear(const Linear& layer, const Tensor& input) {
    if (input.size() != layer.in_features || input.rank() != 1) {
        throw ContractError("fc: expects [" + std::to_string(layer.in_features) + "], got " + to_string(input.shape()));
    }
    Tensor out({layer.out_features});
    for (std::size_t o = 0; o < layer.out_features; ++o) {
        double acc = 0.0;
        const float* row = layer.weight.data().data() + o * layer.in_features;
        for (std::size_t i = 0; i < layer.in_features; ++i) acc += static_cast<double>(row[i]) * input[i];
        out[o] = static_cast<float>(acc) + (layer.bias ? (*layer.bias)[o] : 0.0f);
    }
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) v = std::max(v, 0.0f);
    return out;
}

Tensor max_pool2d(const MaxPool2d& pool, const Tensor& input) {
    const std::size_t h = input.rank() == 3 ? input.dim(1) : 0, w = input.rank() == 3 ? input.dim(2) : 0;
    return pool2d(pool, input, "maxpool2d", [&](std::size_t ch, std::size_t y0, std::size_t x0) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t y = y0; y < y0 + pool.kernel; ++y) {
            for (std::size_t x = x0; x < x0 + pool.kernel; ++x) m = std::max(m, input[(ch * h + y) * w + x]);
        }
        return m;
    });
}

Tensor avg_pool2d(const AvgPool2d& pool, const Tensor& input) {
    const std::size_t h = input.rank() == 3 ? input.dim(1) : 0, w = input.rank() == 3 ? input.dim(2) : 0;
    const float inv = 1.0f / static_cast<float>(pool.kernel * pool.kernel);
    return pool2d(pool, input, "avgpool2d", [&](std::size_t ch, std::size_t y0, std::size_t x0) {
        float s = 0.0f;
        for (std::size_t y = y0; y < y0 + pool.kernel; ++y) {
            for (std::size_t x = x0; x < x0 + pool.kernel; ++x) s += input[(ch * h + y) * w + x];
        }
        return s * inv;
    });
}

Tensor batch_norm(const BatchNorm& bn, const Tensor& input) {
    if (input.rank() == 0 || input.dim(0) != bn.scale.size()) throw ContractError("batchnorm: channel mismatch");
    Tensor out = input;
    const std::size_t per_channel = input.size() / input.dim(0);
    for (std::size_t c = 0; c < input.dim(0); ++c) {
        for (std::size_t i = 0; i < per_channel; ++i) {
            auto& v = out[c * per_channel + i];
            v = v * bn.scale[c] + bn.shift[c];
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ContractError("add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

namespace {

bool has_residual(const Model& model) {
    return std::ranges::any_of(model.layers(), [](const Layer& l) { return std::holds_alternative<ResidualAdd>(l); });
}

// Shared driver; `mapped` evaluates conv / fc layers.
template <typename MappedFn>
Tensor run_forward(const Model& model, const Tensor& input, MappedFn mapped) {
    if (input.shape() != model.info().input_shape) {
        throw ContractError("input shape " + to_string(input.shape()) + " does not match model input " +
                            to_string(model.info().input_shape));
    }
    const bool keep = has_residual(model);
    std::vector<Tensor> outputs;
    if (keep) outputs.reserve(model.size());
    Tensor cur = input;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Layer& layer = model.layer(i);
        if (is_mapped(layer)) {
            cur = mapped(i, layer, cur);
        } else if (std::holds_alternative<ReLU>(layer)) {
            cur = relu(cur);
        } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
            cur = max_pool2d(*p, cur);
        } else if (const auto* a = std::get_if<AvgPool2d>(&layer)) {
            cur = avg_pool2d(*a, cur);
        } else if (std::holds_alternative<Flatten>(layer)) {
            cur = cur.reshaped({cur.size()});
        } else if (const auto* r = std::get_if<ResidualAdd>(&layer)) {
            if (r->from != ResidualAdd::kModelInput && r->from >= i) {
                throw ContractError("residual source must precede the add");
            }
            cur = add(cur, r->from == ResidualAdd::kModelInput ? input : outputs[r->from]);
        } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
            cur = batch_norm(*b, cur);
        }
        if (keep) outputs.push_back(cur);
    }
    return cur;
}

}  // namespace

Tensor reference_forward(const Model& model, const Tensor& input) {
    return run_forward(model, input, [](std::size_t, const Layer& layer, const Tensor& x) {
        if (const auto* c = std::get_if<Conv2d>(&layer)) return conv2d(*c, x);
        return linear(std::get<Linear>(layer), x);
    });
}

Tensor accelerated_forward(const Model& model, const Tensor& input, const accel::CompiledPlan& compiled) {
    return run_forward(model, input, [&](std::size_t i, const Layer& layer, const Tensor& x) {
        const auto* cl = compiled.layer(i);
        if (!cl) throw ContractError("layer " + std::to_string(i) + " is not mapped onto the accelerator");
        return accel::layer_forward_via_accelerator(layer, x, *cl);
    });
}

Tensor accelerated_forward(const Model& model, const Tensor& input, const accel::MappingPlan& plan,
                           const accel::FaultedAccelerator& facc) {
    return accelerated_forward(model, input, accel::CompiledPlan(model, plan, facc));
}

std::size_t argmax(const Tensor& logits) {
    if (logits.empty()) throw ContractError("argmax of an empty tensor");
    const auto d = logits.data();
    return static_cast<std::size_t>(std::distance(d.begin(), std::max_element(d.begin(), d.end())));
}

namespace {

template <typename Forward>
AccuracyResult evaluate_with(const Dataset& data, unsigned workers, Forward forward) {
    if (data.count == 0) throw ContractError("cannot evaluate on an empty dataset");
    for (std::size_t i = 0; i < data.count; ++i) {
        if (data.labels[i] >= data.num_classes) throw ContractError("label out of range at sample " + std::to_string(i));
    }
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, data.count));

    std::vector<std::size_t> predicted(data.count);
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) predicted[i] = argmax(forward(data.image(i)));
    };
    if (workers <= 1) {
        work(0, data.count);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (data.count + workers - 1) / workers;
        for (unsigned t = 0; t < workers; ++t) {
            const std::size_t lo = t * chunk, hi = std::min(data.count, lo + chunk);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
    }

    AccuracyResult r;
    r.total = data.count;
    r.per_class_correct.assign(data.num_classes, 0);
    r.per_class_total.assign(data.num_classes, 0);
    for (std::size_t i = 0; i < data.count; ++i) {
        ++r.per_class_total[data.labels[i]];
        if (predicted[i] == data.labels[i]) {
            ++r.correct;
            ++r.per_class_correct[data.labels[i]];
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

}  // namespace

AccuracyResult evaluate_accuracy(const Model& model, const Dataset& data, const accel::CompiledPlan& compiled,
                                 unsigned workers) {
    return evaluate_with(data, workers, [&](const Tensor& x) { return accelerated_forward(model, x, compiled); });
}

AccuracyResult evaluate_accuracy(const Model& model, const Dataset& data, const accel::MappingPlan& plan,
                                 const accel::FaultedAccelerator& facc, unsigned workers) {
    return evaluate_accuracy(model, data, accel::CompiledPlan(model, plan, facc), workers);
}

AccuracyResult evaluate_reference_accuracy(const Model& model, const Dataset& data, unsigned workers) {
    return evaluate_with(data, workers, [&](const Tensor& x) { return reference_forward(model, x); });
}

}  // namespace mrfault::nn
