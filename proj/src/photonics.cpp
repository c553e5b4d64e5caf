#include "mrfault/photonics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mrfault/error.hpp"

namespace mrfault::photonics {

void ThermoOpticParams::validate() const {
    if (!(gamma_si > 0.0) || !(dn_dT > 0.0) || !(n_g > 0.0)) {
        throw ConfigError("thermo-optic parameters must be strictly positive");
    }
}

double ChannelGrid::wavelength_nm(int channel) const {
    return base_wavelength_nm + static_cast<double>(channel_count - 1 - channel) * spacing_nm;
}

void ChannelGrid::validate() const {
    if (!(spacing_nm > 0.0)) throw ConfigError("channel spacing must be positive");
    if (channel_count < 1) throw ConfigError("channel count must be positive");
    if (!(base_wavelength_nm > 0.0)) throw ConfigError("base wavelength must be positive");
}

void ThermalKernel::validate() const {
    if (!(kappa_k_per_mw > 0.0)) throw ConfigError("thermal kappa must be positive");
    if (!(sigma_um > 0.0)) throw ConfigError("thermal sigma must be positive");
}

double ThermalKernel::response(double power_mw, double squared_distance_um2) const {
    return power_mw * kappa_k_per_mw * std::exp(-squared_distance_um2 / (2.0 * sigma_um * sigma_um));
}

double ThermalKernel::cutoff_radius(double power_mw, double floor_k) const {
    const double peak = power_mw * kappa_k_per_mw;
    if (peak <= floor_k) return 0.0;
    return sigma_um * std::sqrt(2.0 * std::log(peak / floor_k));
}

double resonant_wavelength_nm(const MRPhysical& mr) {
    if (!(mr.radius_um > 0.0)) throw DomainError("MR radius must be positive");
    if (!(mr.n_eff > 0.0)) throw DomainError("effective index must be positive");
    if (mr.resonance_order < 1) throw DomainError("resonance order must be >= 1");
    const double lambda_um = 2.0 * std::numbers::pi * mr.radius_um * mr.n_eff / mr.resonance_order;
    return lambda_um * 1e3;
}

double thermal_shift_nm(double lambda_nm, double delta_t_k, const ThermoOpticParams& p) {
    if (delta_t_k < 0.0) throw DomainError("temperature delta must be non-negative");
    return p.gamma_si * p.dn_dT * (lambda_nm / p.n_g) * delta_t_k;
}

std::optional<int> snap_to_channel(double lambda_nm, const ChannelGrid& grid) {
    // Continuous channel coordinate; integer values land exactly on a carrier.
    const double u = static_cast<double>(grid.channel_count - 1) -
                     (lambda_nm - grid.base_wavelength_nm) / grid.spacing_nm;
    const double j = std::ceil(u - 0.5);
    if (!std::isfinite(j) || j < 0.0 || j >= static_cast<double>(grid.channel_count)) {
        return std::nullopt;
    }
    return static_cast<int>(j);
}

double temperature_at(std::span<const Heater> heaters, Point where, const ThermalKernel& kernel) {
    double sum = 0.0;
    for (const auto& h : heaters) sum += kernel.response(h.power_mw, squared_distance(h.position, where));
    return sum;
}

TemperatureField compute_temperature_field(std::span<const Heater> heaters, const ChipBounds& chip,
                                           double resolution_um, const ThermalKernel& kernel) {
    kernel.validate();
    if (!(resolution_um > 0.0)) throw ConfigError("field resolution must be positive");
    if (!(chip.width_um > 0.0) || !(chip.height_um > 0.0)) throw ConfigError("chip bounds must be positive");
    for (const auto& h : heaters) {
        if (!chip.contains(h.position)) {
            throw ConfigError("heater at (" + std::to_string(h.position.x_um) + ", " +
                              std::to_string(h.position.y_um) + ") lies outside the chip");
        }
        if (!(h.power_mw > 0.0)) throw ConfigError("heater power must be positive");
    }

    TemperatureField field;
    field.resolution_um = resolution_um;
    field.cols = static_cast<std::size_t>(std::floor(chip.width_um / resolution_um)) + 1;
    field.rows = static_cast<std::size_t>(std::floor(chip.height_um / resolution_um)) + 1;
    field.delta_k.assign(field.cols * field.rows, 0.0);
    for (std::size_t r = 0; r < field.rows; ++r) {
        for (std::size_t c = 0; c < field.cols; ++c) {
            field.delta_k[r * field.cols + c] = temperature_at(heaters, field.node_position(c, r), kernel);
        }
    }
    return field;
}

std::optional<int> acting_channel(const MRState& state, int home_channel) {
    switch (state.condition) {
        case MRCondition::healthy:
        case MRCondition::off_resonance: return home_channel;
        case MRCondition::shifted: return state.snapped;
    }
    return home_channel;
}

double mr_transmission(const MRState& state, double imprint, double off_resonance_value) {
    if (!(imprint >= 0.0 && imprint <= 1.0)) throw DomainError("MR imprint must lie in [0, 1]");
    if (state.condition == MRCondition::off_resonance) return off_resonance_value;
    return imprint;
}

}  // namespace mrfault::photonics
