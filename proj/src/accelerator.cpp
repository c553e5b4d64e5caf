#include "mrfault/accelerator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrfault/error.hpp"

namespace mrfault::accel {

std::string to_string(Block b) { return b == Block::conv ? "conv" : "fc"; }
std::string to_string(ArrayRole r) { return r == ArrayRole::input ? "input" : "weight"; }

namespace {

void validate_block(const BlockGeometry& g, const std::optional<int>& channels, const char* name) {
    const std::string n = name;
    if (g.units <= 0) throw ConfigError(n + " block needs at least one VDP unit");
    if (g.banks_per_unit <= 0) throw ConfigError(n + " block needs at least one bank per unit");
    if (g.bank_width <= 0) throw ConfigError(n + " block bank width must be positive");
    if (g.units_per_row <= 0) throw ConfigError(n + " block units_per_row must be positive");
    if (channels && *channels != g.bank_width) {
        throw ConfigError(n + " channel count " + std::to_string(*channels) + " does not match bank width " +
                          std::to_string(g.bank_width));
    }
}

}  // namespace

void AcceleratorConfig::validate() const {
    validate_block(conv, conv_channel_count, "CONV");
    validate_block(fc, fc_channel_count, "FC");
    if (!(channel_spacing_nm > 0.0)) throw ConfigError("channel spacing must be positive");
    if (!(base_wavelength_nm > 0.0)) throw ConfigError("base wavelength must be positive");
    const auto& f = floorplan;
    if (!(f.mr_pitch_um > 0.0) || !(f.bank_pitch_um > 0.0) || f.array_gap_um < 0.0 || f.unit_gap_um < 0.0 ||
        f.block_gap_um < 0.0) {
        throw ConfigError("floorplan pitches must be positive and gaps non-negative");
    }
    thermo.validate();
    thermal.validate();
    if (!(off_resonance_value >= 0.0 && off_resonance_value <= 1.0)) {
        throw ConfigError("off-resonance transmission must lie in [0, 1]");
    }
    const double total = 2.0 * (static_cast<double>(conv.units) * conv.banks_per_unit * conv.bank_width +
                                static_cast<double>(fc.units) * fc.banks_per_unit * fc.bank_width);
    if (total > static_cast<double>(std::numeric_limits<MRIndex>::max())) {
        throw ConfigError("MR inventory exceeds the supported index range");
    }
}

AcceleratorConfig toy_config(int width) {
    AcceleratorConfig cfg;
    cfg.conv = {1, 1, width, 1};
    cfg.fc = {1, 1, width, 1};
    return cfg;
}

Accelerator::Accelerator(AcceleratorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    conv_grid_ = {cfg_.base_wavelength_nm, cfg_.channel_spacing_nm, cfg_.conv.bank_width};
    fc_grid_ = {cfg_.base_wavelength_nm, cfg_.channel_spacing_nm, cfg_.fc.bank_width};

    const auto& f = cfg_.floorplan;
    auto extent = [&](const BlockGeometry& g) {
        const double unit_w = 2.0 * g.bank_width * f.mr_pitch_um + f.array_gap_um;
        const double unit_h = g.banks_per_unit * f.bank_pitch_um;
        const int cols = std::min(g.units, g.units_per_row);
        const int rows = (g.units + g.units_per_row - 1) / g.units_per_row;
        return std::pair{cols * unit_w + (cols - 1) * f.unit_gap_um, rows * unit_h + (rows - 1) * f.unit_gap_um};
    };
    const auto [conv_w, conv_h] = extent(cfg_.conv);
    const auto [fc_w, fc_h] = extent(cfg_.fc);
    fc_origin_y_ = conv_h + f.block_gap_um;
    chip_ = {std::max(conv_w, fc_w), fc_origin_y_ + fc_h};
}

Accelerator build_accelerator(const AcceleratorConfig& cfg) { return Accelerator(cfg); }

std::size_t Accelerator::mr_count(Block b) const {
    const auto& g = geometry(b);
    return 2 * static_cast<std::size_t>(g.units) * g.banks_per_unit * g.bank_width;
}

std::size_t Accelerator::bank_count(Block b) const {
    const auto& g = geometry(b);
    return static_cast<std::size_t>(g.units) * g.banks_per_unit;
}

MRIndex Accelerator::block_offset(Block b) const {
    return b == Block::conv ? 0 : static_cast<MRIndex>(mr_count(Block::conv));
}

bool Accelerator::contains(const MRCoordinate& c) const {
    const auto& g = geometry(c.block);
    return c.unit >= 0 && c.unit < g.units && c.bank >= 0 && c.bank < g.banks_per_unit && c.column >= 0 &&
           c.column < g.bank_width;
}

MRIndex Accelerator::index(const MRCoordinate& c) const {
    if (!contains(c)) throw ContractError("MR coordinate outside the accelerator");
    const auto& g = geometry(c.block);
    const std::size_t bank = static_cast<std::size_t>(c.unit) * g.banks_per_unit + c.bank;
    const std::size_t local = (bank * 2 + static_cast<std::size_t>(c.role)) * g.bank_width + c.column;
    return block_offset(c.block) + static_cast<MRIndex>(local);
}

MRCoordinate Accelerator::coordinate(MRIndex i) const {
    if (i >= total_mr_count()) throw ContractError("MR index outside the accelerator");
    const Block b = i < mr_count(Block::conv) ? Block::conv : Block::fc;
    const auto& g = geometry(b);
    std::size_t local = i - block_offset(b);
    MRCoordinate c;
    c.block = b;
    c.column = static_cast<int>(local % g.bank_width);
    local /= g.bank_width;
    c.role = static_cast<ArrayRole>(local % 2);
    local /= 2;
    c.bank = static_cast<int>(local % g.banks_per_unit);
    c.unit = static_cast<int>(local / g.banks_per_unit);
    return c;
}

std::size_t Accelerator::bank_ordinal(const BankId& id) const {
    return static_cast<std::size_t>(id.unit) * geometry(id.block).banks_per_unit + id.bank;
}

BankId Accelerator::bank_at(Block b, std::size_t ordinal) const {
    const auto& g = geometry(b);
    return {b, static_cast<int>(ordinal / g.banks_per_unit), static_cast<int>(ordinal % g.banks_per_unit)};
}

MRIndex Accelerator::array_start(const BankId& id, ArrayRole role) const {
    return index({id.block, id.unit, id.bank, 0, role});
}

photonics::Point Accelerator::unit_origin(Block b, int unit) const {
    const auto& g = geometry(b);
    const auto& f = cfg_.floorplan;
    const double unit_w = 2.0 * g.bank_width * f.mr_pitch_um + f.array_gap_um;
    const double unit_h = g.banks_per_unit * f.bank_pitch_um;
    const int col = unit % g.units_per_row;
    const int row = unit / g.units_per_row;
    const double y0 = b == Block::conv ? 0.0 : fc_origin_y_;
    return {col * (unit_w + f.unit_gap_um), y0 + row * (unit_h + f.unit_gap_um)};
}

Accelerator::Box Accelerator::unit_box(Block b, int unit) const {
    const auto& g = geometry(b);
    const auto& f = cfg_.floorplan;
    const auto o = unit_origin(b, unit);
    const double unit_w = 2.0 * g.bank_width * f.mr_pitch_um + f.array_gap_um;
    const double unit_h = g.banks_per_unit * f.bank_pitch_um;
    return {o.x_um + 0.5 * f.mr_pitch_um, o.y_um + 0.5 * f.bank_pitch_um, o.x_um + unit_w - 0.5 * f.mr_pitch_um,
            o.y_um + unit_h - 0.5 * f.bank_pitch_um};
}

photonics::Point Accelerator::position(const MRCoordinate& c) const {
    if (!contains(c)) throw ContractError("MR coordinate outside the accelerator");
    const auto& g = geometry(c.block);
    const auto& f = cfg_.floorplan;
    const auto o = unit_origin(c.block, c.unit);
    const double array_x = c.role == ArrayRole::input ? 0.0 : g.bank_width * f.mr_pitch_um + f.array_gap_um;
    return {o.x_um + array_x + (c.column + 0.5) * f.mr_pitch_um, o.y_um + (c.bank + 0.5) * f.bank_pitch_um};
}

photonics::Point Accelerator::bank_centroid(const BankId& id) const {
    const auto& g = geometry(id.block);
    const auto& f = cfg_.floorplan;
    const auto o = unit_origin(id.block, id.unit);
    const double unit_w = 2.0 * g.bank_width * f.mr_pitch_um + f.array_gap_um;
    return {o.x_um + 0.5 * unit_w, o.y_um + (id.bank + 0.5) * f.bank_pitch_um};
}

// ---------------------------------------------------------------------------

const LayerMapping* MappingPlan::find(std::size_t layer_index) const {
    for (const auto& l : layers) {
        if (l.layer_index == layer_index) return &l;
    }
    return nullptr;
}

std::size_t MappingPlan::mapped_slots() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        for (const auto& t : l.tiles) n += t.length;
    }
    return n;
}

namespace {

struct BlockCursor {
    std::uint64_t next = 0;
};

LayerMapping map_layer(std::size_t index, const std::string& name, Block block, const nn::Tensor& weight,
                       std::size_t outputs, std::size_t fan_in, const Accelerator& acc, BlockCursor& cursor) {
    const auto& g = acc.geometry(block);
    const auto width = static_cast<std::size_t>(g.bank_width);
    const std::uint64_t banks_total = static_cast<std::uint64_t>(g.units) * g.banks_per_unit;

    LayerMapping m;
    m.layer_index = index;
    m.name = name;
    m.block = block;
    m.outputs = outputs;
    m.fan_in = fan_in;
    m.signs.resize(weight.size());
    float scale = 0.0f;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        m.signs[i] = weight[i] < 0.0f ? std::int8_t{-1} : std::int8_t{1};
        scale = std::max(scale, std::fabs(weight[i]));
    }
    m.weight_scale = scale;

    m.first_tile.reserve(outputs + 1);
    for (std::size_t o = 0; o < outputs; ++o) {
        m.first_tile.push_back(static_cast<std::uint32_t>(m.tiles.size()));
        for (std::size_t begin = 0; begin < fan_in; begin += width) {
            const std::uint64_t t = cursor.next++;
            Tile tile;
            tile.output = static_cast<std::uint32_t>(o);
            tile.begin = static_cast<std::uint32_t>(begin);
            tile.length = static_cast<std::uint32_t>(std::min(width, fan_in - begin));
            tile.unit = static_cast<int>(t % g.units);
            tile.bank = static_cast<int>((t / g.units) % g.banks_per_unit);
            tile.round = static_cast<std::uint32_t>(t / banks_total);
            m.tiles.push_back(tile);
        }
    }
    m.first_tile.push_back(static_cast<std::uint32_t>(m.tiles.size()));
    return m;
}

std::uint32_t rounds_used(const BlockCursor& c, const BlockGeometry& g) {
    const std::uint64_t banks_total = static_cast<std::uint64_t>(g.units) * g.banks_per_unit;
    return static_cast<std::uint32_t>((c.next + banks_total - 1) / banks_total);
}

}  // namespace

MappingPlan map_model(const nn::Model& model, const Accelerator& acc) {
    MappingPlan plan;
    BlockCursor conv_cursor;
    BlockCursor fc_cursor;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& layer = model.layer(i);
        if (const auto* c = std::get_if<nn::Conv2d>(&layer)) {
            plan.layers.push_back(
                map_layer(i, c->name, Block::conv, c->weight, c->out_channels, c->fan_in(), acc, conv_cursor));
        } else if (const auto* l = std::get_if<nn::Linear>(&layer)) {
            plan.layers.push_back(
                map_layer(i, l->name, Block::fc, l->weight, l->out_features, l->fan_in(), acc, fc_cursor));
        }
    }
    if (plan.layers.empty()) throw ContractError("model has no conv or fc layers to map");
    plan.conv_rounds = rounds_used(conv_cursor, acc.geometry(Block::conv));
    plan.fc_rounds = rounds_used(fc_cursor, acc.geometry(Block::fc));
    return plan;
}

// ---------------------------------------------------------------------------

FaultedAccelerator::FaultedAccelerator(Accelerator base, FaultMap faults)
    : base_(std::move(base)), faults_(std::move(faults)) {
    const auto total = base_.total_mr_count();
    for (auto it = faults_.begin(); it != faults_.end();) {
        if (it->first >= total) throw ContractError("fault on an MR outside the accelerator");
        if (it->second.condition == photonics::MRCondition::healthy) {
            it = faults_.erase(it);
        } else {
            ++it;
        }
    }
}

photonics::MRState FaultedAccelerator::state(MRIndex i) const {
    const auto it = faults_.find(i);
    return it == faults_.end() ? photonics::MRState::healthy() : it->second;
}

}  // namespace mrfault::accel
