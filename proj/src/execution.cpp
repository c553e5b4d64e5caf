#include <algorithm>
#include <cmath>

#include "mrfault/accelerator.hpp"
#include "mrfault/error.hpp"

namespace mrfault::accel {

namespace {

float sign_of(float v) { return v < 0.0f ? -1.0f : 1.0f; }

float max_abs(std::span<const float> v) {
    float m = 0.0f;
    for (float x : v) m = std::max(m, std::fabs(x));
    return m;
}

// MRs of one array acting on channel `c` of a tile of `length` slots, with
// their transmissions. Idle columns (>= length) are parked and never act.
struct ChannelSources {
    std::vector<std::vector<std::uint32_t>> sources;  // per channel, slots whose MR acts on it
    std::vector<float> off_product;                   // per channel, product of off-resonance passes
    std::vector<bool> identity;                       // channel c driven by exactly its own healthy MR
};

ChannelSources resolve_array(const Tile& tile, Block block, ArrayRole role, const FaultedAccelerator& facc) {
    const auto& acc = facc.base();
    const double off_value = acc.config().off_resonance_value;
    const MRIndex start = acc.array_start({block, tile.unit, tile.bank}, role);
    ChannelSources out;
    out.sources.resize(tile.length);
    out.off_product.assign(tile.length, 1.0f);
    out.identity.assign(tile.length, false);
    std::vector<bool> own_healthy(tile.length, false);
    for (std::uint32_t k = 0; k < tile.length; ++k) {
        const auto state = facc.state(start + k);
        const auto ch = photonics::acting_channel(state, static_cast<int>(k));
        if (!ch || *ch < 0 || *ch >= static_cast<int>(tile.length)) continue;
        const auto c = static_cast<std::size_t>(*ch);
        if (state.condition == photonics::MRCondition::off_resonance) {
            out.off_product[c] *= static_cast<float>(off_value);
        } else {
            out.sources[c].push_back(k);
            if (state.condition == photonics::MRCondition::healthy) own_healthy[c] = true;
        }
    }
    for (std::uint32_t c = 0; c < tile.length; ++c) {
        out.identity[c] = own_healthy[c] && out.sources[c].size() == 1 && out.sources[c][0] == c &&
                          out.off_product[c] == 1.0f;
    }
    return out;
}

}  // namespace

float execute_dot_product(const LayerMapping& layer, std::size_t output, std::span<const float> weights,
                          std::span<const float> activations, const FaultedAccelerator& facc) {
    if (output >= layer.outputs) throw ContractError("output index outside the layer mapping");
    if (weights.size() != layer.fan_in || activations.size() != layer.fan_in) {
        throw ContractError("dot product operands do not match the layer fan-in " + std::to_string(layer.fan_in));
    }
    const double off_value = facc.base().config().off_resonance_value;
    const float wmax = layer.weight_scale;
    const auto& acc = facc.base();

    double total = 0.0;
    for (const Tile& tile : layer.tiles_for(output)) {
        const auto a = activations.subspan(tile.begin, tile.length);
        const auto w = weights.subspan(tile.begin, tile.length);
        const float amax = max_abs(a);

        std::vector<double> carried(tile.length, 1.0);
        for (ArrayRole role : {ArrayRole::input, ArrayRole::weight}) {
            const MRIndex start = acc.array_start({layer.block, tile.unit, tile.bank}, role);
            for (std::uint32_t k = 0; k < tile.length; ++k) {
                const auto state = facc.state(start + k);
                const auto ch = photonics::acting_channel(state, static_cast<int>(k));
                if (!ch || *ch < 0 || *ch >= static_cast<int>(tile.length)) continue;
                const float value = role == ArrayRole::input ? a[k] : w[k];
                const float scale = role == ArrayRole::input ? amax : wmax;
                const double imprint = scale > 0.0f ? std::fabs(value) / scale : 0.0;
                carried[static_cast<std::size_t>(*ch)] *= photonics::mr_transmission(state, imprint, off_value);
            }
        }

        double detected = 0.0;
        for (std::uint32_t c = 0; c < tile.length; ++c) {
            detected += sign_of(w[c]) * sign_of(a[c]) * carried[c];
        }
        total += static_cast<double>(amax) * wmax * detected;
    }
    return static_cast<float>(total);
}

// ---------------------------------------------------------------------------

CompiledLayer::CompiledLayer(const LayerMapping& layer, std::span<const float> weights,
                             const FaultedAccelerator& facc)
    : first_tile_(layer.first_tile), fan_in_(layer.fan_in) {
    if (weights.size() != layer.slot_count()) throw ContractError("weights do not match the layer mapping");
    const float wmax = layer.weight_scale;
    tiles_.reserve(layer.tiles.size());
    for (const Tile& tile : layer.tiles) {
        const auto w = weights.subspan(tile.output * layer.fan_in + tile.begin, tile.length);
        const auto in = resolve_array(tile, layer.block, ArrayRole::input, facc);
        const auto wt = resolve_array(tile, layer.block, ArrayRole::weight, facc);

        CompiledTile ct;
        ct.begin = tile.begin;
        ct.length = tile.length;
        ct.weights.resize(tile.length);
        for (std::uint32_t c = 0; c < tile.length; ++c) {
            if (wt.identity[c]) {
                ct.weights[c] = w[c];
            } else {
                float carried = wt.off_product[c];
                for (auto k : wt.sources[c]) carried *= wmax > 0.0f ? std::fabs(w[k]) / wmax : 0.0f;
                ct.weights[c] = sign_of(w[c]) * wmax * carried;
            }
            if (!in.identity[c]) {
                ct.corrupted_inputs.push_back({c, in.off_product[c], in.sources[c]});
            }
            if (!wt.identity[c] || !in.identity[c]) ++ct.corrupted_channels;
        }
        corrupted_slots_ += ct.corrupted_channels;
        tiles_.push_back(std::move(ct));
    }
}

float CompiledLayer::dot(std::size_t output, std::span<const float> activations) const {
    double total = 0.0;
    for (std::uint32_t t = first_tile_[output]; t < first_tile_[output + 1]; ++t) {
        const CompiledTile& tile = tiles_[t];
        const float* a = activations.data() + tile.begin;
        const float* w = tile.weights.data();
        double sum = 0.0;
        if (tile.corrupted_inputs.empty()) {
            for (std::uint32_t c = 0; c < tile.length; ++c) sum += static_cast<double>(w[c]) * a[c];
        } else {
            float amax = 0.0f;
            for (std::uint32_t c = 0; c < tile.length; ++c) amax = std::max(amax, std::fabs(a[c]));
            auto next = tile.corrupted_inputs.begin();
            for (std::uint32_t c = 0; c < tile.length; ++c) {
                float in = a[c];
                if (next != tile.corrupted_inputs.end() && next->channel == c) {
                    float carried = next->constant;
                    for (auto k : next->sources) carried *= amax > 0.0f ? std::fabs(a[k]) / amax : 0.0f;
                    in = sign_of(a[c]) * amax * carried;
                    ++next;
                }
                sum += static_cast<double>(w[c]) * in;
            }
        }
        total += sum;
    }
    return static_cast<float>(total);
}

bool CompiledLayer::output_corrupted(std::size_t output) const {
    for (std::uint32_t t = first_tile_[output]; t < first_tile_[output + 1]; ++t) {
        if (tiles_[t].corrupted_channels > 0) return true;
    }
    return false;
}

namespace {

const nn::Tensor& mapped_weights(const nn::Layer& layer) {
    if (const auto* c = std::get_if<nn::Conv2d>(&layer)) return c->weight;
    if (const auto* l = std::get_if<nn::Linear>(&layer)) return l->weight;
    throw ContractError("layer " + nn::layer_kind(layer) + " is not executed on the accelerator");
}

}  // namespace

CompiledPlan::CompiledPlan(const nn::Model& model, const MappingPlan& plan, const FaultedAccelerator& facc)
    : layers_(model.size()) {
    for (const auto& m : plan.layers) {
        if (m.layer_index >= model.size()) throw ContractError("mapping refers to a layer outside the model");
        layers_[m.layer_index].emplace(m, mapped_weights(model.layer(m.layer_index)).data(), facc);
    }
}

const CompiledLayer* CompiledPlan::layer(std::size_t layer_index) const {
    if (layer_index >= layers_.size() || !layers_[layer_index]) return nullptr;
    return &*layers_[layer_index];
}

std::size_t CompiledPlan::corrupted_slots() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        if (l) n += l->corrupted_slots();
    }
    return n;
}

// ---------------------------------------------------------------------------

nn::Tensor layer_forward_via_accelerator(const nn::Layer& layer, const nn::Tensor& input,
                                         const CompiledLayer& compiled) {
    if (const auto* l = std::get_if<nn::Linear>(&layer)) {
        if (input.size() != l->in_features || compiled.fan_in() != l->in_features ||
            compiled.outputs() != l->out_features) {
            throw ContractError("fc layer input or mapping does not match");
        }
        nn::Tensor out({l->out_features});
        for (std::size_t o = 0; o < l->out_features; ++o) {
            out[o] = compiled.dot(o, input.data()) + (l->bias ? (*l->bias)[o] : 0.0f);
        }
        return out;
    }
    const auto* c = std::get_if<nn::Conv2d>(&layer);
    if (!c) throw ContractError("layer " + nn::layer_kind(layer) + " is not executed on the accelerator");
    if (input.rank() != 3 || input.dim(0) != c->in_channels || compiled.fan_in() != c->fan_in() ||
        compiled.outputs() != c->out_channels) {
        throw ContractError("conv layer input or mapping does not match");
    }
    const std::size_t h = input.dim(1), w = input.dim(2);
    const std::size_t ho = (h + 2 * c->padding - c->kernel_h) / c->stride + 1;
    const std::size_t wo = (w + 2 * c->padding - c->kernel_w) / c->stride + 1;
    nn::Tensor out({c->out_channels, ho, wo});
    std::vector<float> patch(c->fan_in());
    const auto in = input.data();
    for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
            std::size_t k = 0;
            for (std::size_t ch = 0; ch < c->in_channels; ++ch) {
                for (std::size_t ky = 0; ky < c->kernel_h; ++ky) {
                    for (std::size_t kx = 0; kx < c->kernel_w; ++kx, ++k) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * c->stride + ky) -
                                        static_cast<std::ptrdiff_t>(c->padding);
                        const auto ix = static_cast<std::ptrdiff_t>(ox * c->stride + kx) -
                                        static_cast<std::ptrdiff_t>(c->padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                            ix < static_cast<std::ptrdiff_t>(w);
                        patch[k] = inside ? in[(ch * h + static_cast<std::size_t>(iy)) * w +
                                               static_cast<std::size_t>(ix)]
                                          : 0.0f;
                    }
                }
            }
            for (std::size_t o = 0; o < c->out_channels; ++o) {
                out[(o * ho + oy) * wo + ox] = compiled.dot(o, patch) + (c->bias ? (*c->bias)[o] : 0.0f);
            }
        }
    }
    return out;
}

nn::Tensor layer_forward_via_accelerator(const nn::Model& model, std::size_t layer_index, const nn::Tensor& input,
                                         const MappingPlan& plan, const FaultedAccelerator& facc) {
    const auto* mapping = plan.find(layer_index);
    if (!mapping) throw ContractError("layer " + std::to_string(layer_index) + " is not mapped");
    const auto& layer = model.layer(layer_index);
    CompiledLayer compiled(*mapping, mapped_weights(layer).data(), facc);
    return layer_forward_via_accelerator(layer, input, compiled);
}

}  // namespace mrfault::accel
