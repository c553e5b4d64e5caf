#pragma once

// Architecture model of a non-coherent photonic CNN accelerator. A CONV block
// and an FC block each hold VDP units; a unit is a stack of banks, and a bank
// is one waveguide that first passes an input-imprint array and then a
// weight-imprint array of `bank_width` MRs, one per WDM channel. The
// photodetector at the end of the bank sums the channels.
//
// Layers are mapped weight-stationary: every conv kernel / fc row is cut into
// chunks of at most `bank_width` parameters and each chunk (a tile) is pinned
// to one bank for the whole inference.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrfault/model.hpp"
#include "mrfault/photonics.hpp"

namespace mrfault::accel {

enum class Block : std::uint8_t { conv, fc };
enum class ArrayRole : std::uint8_t { input, weight };

std::string to_string(Block b);
std::string to_string(ArrayRole r);

struct BlockGeometry {
    int units = 1;
    int banks_per_unit = 1;
    int bank_width = 1;     // MRs per array in a bank == WDM channel count
    int units_per_row = 1;  // floorplan: units laid out in rows of this many
};

struct Floorplan {
    double mr_pitch_um = 5.0;      // MR center spacing along a bank
    double bank_pitch_um = 20.0;   // bank-to-bank spacing inside a unit
    double array_gap_um = 10.0;    // gap between the input and weight arrays of a bank
    double unit_gap_um = 40.0;     // spacing between neighbouring units
    double block_gap_um = 200.0;   // spacing between the CONV and FC blocks
};

struct AcceleratorConfig {
    BlockGeometry conv{100, 20, 20, 10};
    BlockGeometry fc{60, 150, 150, 6};
    double base_wavelength_nm = 1550.0;
    double channel_spacing_nm = 0.8;
    // When given, must equal the block's bank width.
    std::optional<int> conv_channel_count;
    std::optional<int> fc_channel_count;
    Floorplan floorplan;
    photonics::ThermoOpticParams thermo;
    photonics::ThermalKernel thermal{0.5, 40.0};
    double off_resonance_value = 1.0;

    void validate() const;
};

/// Minimal accelerator: one CONV unit with a single bank of `width` MRs per
/// array (and an equally small FC block).
AcceleratorConfig toy_config(int width = 3);

using MRIndex = std::uint32_t;

struct MRCoordinate {
    Block block = Block::conv;
    int unit = 0;
    int bank = 0;
    int column = 0;
    ArrayRole role = ArrayRole::weight;

    auto operator<=>(const MRCoordinate&) const = default;
};

struct BankId {
    Block block = Block::conv;
    int unit = 0;
    int bank = 0;

    auto operator<=>(const BankId&) const = default;
};

/// Device inventory. MR indices are dense: CONV MRs first, then FC; inside a
/// block the order is unit, bank, array (input then weight), column.
class Accelerator {
public:
    explicit Accelerator(AcceleratorConfig cfg);

    const AcceleratorConfig& config() const { return cfg_; }
    const BlockGeometry& geometry(Block b) const { return b == Block::conv ? cfg_.conv : cfg_.fc; }
    const photonics::ChannelGrid& grid(Block b) const { return b == Block::conv ? conv_grid_ : fc_grid_; }

    std::size_t mr_count(Block b) const;
    std::size_t total_mr_count() const { return mr_count(Block::conv) + mr_count(Block::fc); }
    std::size_t bank_count(Block b) const;
    std::size_t mrs_per_bank(Block b) const { return 2 * static_cast<std::size_t>(geometry(b).bank_width); }
    MRIndex block_offset(Block b) const;

    MRIndex index(const MRCoordinate& c) const;
    MRCoordinate coordinate(MRIndex i) const;
    bool contains(const MRCoordinate& c) const;

    std::size_t bank_ordinal(const BankId& id) const;  // 0-based within the block
    BankId bank_at(Block b, std::size_t ordinal) const;
    /// Index of column 0 of `role` in the given bank; columns follow contiguously.
    MRIndex array_start(const BankId& id, ArrayRole role) const;

    photonics::Point position(const MRCoordinate& c) const;
    photonics::Point bank_centroid(const BankId& id) const;
    photonics::ChipBounds chip() const { return chip_; }

    /// Carrier the MR is tuned to when untampered.
    double home_wavelength_nm(const MRCoordinate& c) const { return grid(c.block).wavelength_nm(c.column); }

    /// Bounding box [x0, x1] x [y0, y1] of a unit's MR centers.
    struct Box {
        double x0, y0, x1, y1;
    };
    Box unit_box(Block b, int unit) const;
    photonics::Point unit_origin(Block b, int unit) const;

private:
    AcceleratorConfig cfg_;
    photonics::ChannelGrid conv_grid_;
    photonics::ChannelGrid fc_grid_;
    photonics::ChipBounds chip_;
    double fc_origin_y_ = 0.0;
};

/// Throws ConfigError for an inconsistent configuration.
Accelerator build_accelerator(const AcceleratorConfig& cfg);

// ---------------------------------------------------------------------------
// Weight-stationary mapping

struct Tile {
    std::uint32_t output = 0;  // output neuron / conv filter
    std::uint32_t begin = 0;   // first parameter of the flattened row
    std::uint32_t length = 0;  // <= bank width; column j holds parameter begin + j
    int unit = 0;
    int bank = 0;
    std::uint32_t round = 0;   // reuse round of the physical bank

    bool operator==(const Tile&) const = default;
};

struct LayerMapping {
    std::size_t layer_index = 0;
    std::string name;
    Block block = Block::conv;
    std::size_t outputs = 0;
    std::size_t fan_in = 0;
    float weight_scale = 0.0f;          // max |w| over the layer
    std::vector<std::int8_t> signs;     // per parameter, +1 / -1 (zero maps to +1)
    std::vector<Tile> tiles;            // ordered by output, then by chunk
    std::vector<std::uint32_t> first_tile;  // outputs + 1 offsets into `tiles`

    std::span<const Tile> tiles_for(std::size_t output) const {
        return std::span<const Tile>(tiles).subspan(first_tile[output], first_tile[output + 1] - first_tile[output]);
    }
    std::size_t slot_count() const { return outputs * fan_in; }

    bool operator==(const LayerMapping&) const = default;
};

struct MappingPlan {
    std::vector<LayerMapping> layers;
    std::uint32_t conv_rounds = 0;
    std::uint32_t fc_rounds = 0;

    const LayerMapping* find(std::size_t layer_index) const;
    std::size_t mapped_slots() const;

    bool operator==(const MappingPlan&) const = default;
};

/// Conv kernels are flattened (in_channel, kh, kw) and fc rows as stored; each
/// row is chunked to the bank width. Tiles go round-robin over units first,
/// then banks, in layer order, conv layers to the CONV block and fc layers to
/// the FC block. Once a block's banks are exhausted mapping wraps into the
/// next reuse round. Throws ContractError for a model with no mapped layers.
MappingPlan map_model(const nn::Model& model, const Accelerator& acc);

// ---------------------------------------------------------------------------
// Fault state

/// Accelerator plus the condition of every MR (healthy unless listed).
class FaultedAccelerator {
public:
    using FaultMap = std::unordered_map<MRIndex, photonics::MRState>;

    explicit FaultedAccelerator(Accelerator base, FaultMap faults = {});

    const Accelerator& base() const { return base_; }
    photonics::MRState state(MRIndex i) const;
    photonics::MRState state(const MRCoordinate& c) const { return state(base_.index(c)); }
    const FaultMap& faults() const { return faults_; }
    std::size_t fault_count() const { return faults_.size(); }

private:
    Accelerator base_;
    FaultMap faults_;
};

// ---------------------------------------------------------------------------
// Execution

/// One output's dot product carried through the MR banks of its tiles.
///
/// Per tile, activations are normalised by the tile's max |a| and weights by
/// the layer's max |w|. Each WDM channel carries the product of the
/// transmissions of every MR acting on it (input and weight array); a channel
/// with no MR acting on it passes at 1.0, and a carrier that no MR of the tile
/// is assigned to stays dark. The photodetector sums the channels, the
/// electronic signs of the slot's weight and activation are reapplied, and the
/// sum is scaled back by both normalisation factors. Tiles accumulate.
///
/// `weights` is the full flattened row for `output`; `activations` has length
/// fan_in. Throws ContractError on a length mismatch.
float execute_dot_product(const LayerMapping& layer, std::size_t output, std::span<const float> weights,
                          std::span<const float> activations, const FaultedAccelerator& facc);

/// Input-side channel whose carrier is not simply its own slot's activation.
struct CorruptedInput {
    std::uint32_t channel = 0;
    float constant = 1.0f;               // product of off-resonance transmissions
    std::vector<std::uint32_t> sources;  // slots whose input MR imprints on this channel
};

/// A tile with its fault effects resolved for fast repeated evaluation.
struct CompiledTile {
    std::uint32_t begin = 0;
    std::uint32_t length = 0;
    std::vector<float> weights;                 // signed, denormalised weight per channel
    std::vector<CorruptedInput> corrupted_inputs;
    std::uint32_t corrupted_channels = 0;       // channels differing from the healthy bank
};

class CompiledLayer {
public:
    CompiledLayer() = default;
    CompiledLayer(const LayerMapping& layer, std::span<const float> weights, const FaultedAccelerator& facc);

    std::size_t outputs() const { return first_tile_.empty() ? 0 : first_tile_.size() - 1; }
    std::size_t fan_in() const { return fan_in_; }
    /// Same result as execute_dot_product for the faults it was compiled with.
    float dot(std::size_t output, std::span<const float> activations) const;
    std::size_t corrupted_slots() const { return corrupted_slots_; }
    /// Outputs with at least one corrupted channel.
    bool output_corrupted(std::size_t output) const;

private:
    std::vector<CompiledTile> tiles_;
    std::vector<std::uint32_t> first_tile_;
    std::size_t fan_in_ = 0;
    std::size_t corrupted_slots_ = 0;
};

/// Every mapped layer of a model compiled against one fault state.
class CompiledPlan {
public:
    CompiledPlan(const nn::Model& model, const MappingPlan& plan, const FaultedAccelerator& facc);

    const CompiledLayer* layer(std::size_t layer_index) const;
    std::size_t corrupted_slots() const;

private:
    std::vector<std::optional<CompiledLayer>> layers_;
};

/// Conv / fc layer evaluated entirely through execute-equivalent dot products.
/// Bias (if any) is added electronically. Throws ContractError for a layer
/// the compiled plan does not cover.
nn::Tensor layer_forward_via_accelerator(const nn::Layer& layer, const nn::Tensor& input, const CompiledLayer& compiled);

nn::Tensor layer_forward_via_accelerator(const nn::Model& model, std::size_t layer_index, const nn::Tensor& input,
                                         const MappingPlan& plan, const FaultedAccelerator& facc);

}  // namespace mrfault::accel
