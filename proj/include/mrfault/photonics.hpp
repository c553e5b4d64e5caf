#pragma once

// Functional device physics for microring resonators (MRs) in a WDM bank:
// resonance, thermo-optic drift, snapping of a drifted resonance onto the
// channel grid, and a steady-state thermal field built from point heaters.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mrfault::photonics {

struct Point {
    double x_um = 0.0;
    double y_um = 0.0;
};

inline double squared_distance(Point a, Point b) {
    const double dx = a.x_um - b.x_um;
    const double dy = a.y_um - b.y_um;
    return dx * dx + dy * dy;
}

struct MRPhysical {
    double radius_um = 0.0;
    int resonance_order = 0;
    double n_eff = 0.0;
    Point position;
};

struct ThermoOpticParams {
    double gamma_si = 0.8;   // modal confinement in the Si core
    double dn_dT = 1.86e-4;  // 1/K
    double n_g = 4.2;        // group index

    void validate() const;
};

/// Evenly spaced WDM carriers, one per MR column of a bank.
///
/// Channel index grows toward shorter wavelengths: channel 0 is the longest
/// carrier at base + (count-1)*spacing and channel count-1 sits at base. With
/// this orientation a heated (red-shifted) MR bound to channel k drifts onto
/// channel k-1, and channel 0 drifts off the grid.
struct ChannelGrid {
    double base_wavelength_nm = 1550.0;
    double spacing_nm = 0.8;
    int channel_count = 1;

    double wavelength_nm(int channel) const;
    void validate() const;
};

struct Heater {
    Point position;
    double power_mw = 0.0;
};

/// Isotropic Gaussian steady-state response of one heater.
struct ThermalKernel {
    double kappa_k_per_mw = 0.5;  // peak rise per mW of dissipated power
    double sigma_um = 40.0;

    void validate() const;
    double response(double power_mw, double squared_distance_um2) const;
    /// Distance beyond which one heater of `power_mw` adds less than `floor_k`.
    double cutoff_radius(double power_mw, double floor_k) const;
};

struct ChipBounds {
    double width_um = 0.0;
    double height_um = 0.0;

    bool contains(Point p) const {
        return p.x_um >= 0.0 && p.y_um >= 0.0 && p.x_um <= width_um && p.y_um <= height_um;
    }
};

/// Temperature rise sampled on a regular node grid; node (i, j) sits at
/// (i * resolution, j * resolution).
struct TemperatureField {
    double resolution_um = 1.0;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::vector<double> delta_k;  // row-major, rows x cols

    double at(std::size_t col, std::size_t row) const { return delta_k[row * cols + col]; }
    Point node_position(std::size_t col, std::size_t row) const {
        return {static_cast<double>(col) * resolution_um, static_cast<double>(row) * resolution_um};
    }
};

// lambda = 2*pi*R*n_eff / m, returned in nm. Throws DomainError on invalid geometry.
double resonant_wavelength_nm(const MRPhysical& mr);

// Resonance drift for a temperature rise: Gamma * dn/dT * lambda / n_g * dT.
// Throws DomainError for negative dT.
double thermal_shift_nm(double lambda_nm, double delta_t_k, const ThermoOpticParams& p);

// Channel whose half-spacing window contains `lambda_nm`; a value exactly on
// the boundary between two channels goes to the lower index. Empty when the
// wavelength is off the grid.
std::optional<int> snap_to_channel(double lambda_nm, const ChannelGrid& grid);

// Exact superposition of every heater's kernel at `where`.
double temperature_at(std::span<const Heater> heaters, Point where, const ThermalKernel& kernel);

// Throws ConfigError if a heater lies outside the chip or has non-positive power.
TemperatureField compute_temperature_field(std::span<const Heater> heaters, const ChipBounds& chip,
                                           double resolution_um, const ThermalKernel& kernel);

enum class MRCondition {
    healthy,
    off_resonance,  // actuation trojan: detuned from its carrier
    shifted,        // thermally drifted onto another channel (or off the grid)
};

struct MRState {
    MRCondition condition = MRCondition::healthy;
    float delta_t_k = 0.0f;           // only meaningful when shifted
    std::optional<int> snapped;       // channel the MR now acts on when shifted

    static MRState healthy() { return {}; }
    static MRState off_resonance() { return {MRCondition::off_resonance, 0.0f, std::nullopt}; }
    static MRState shifted(float dt, std::optional<int> channel) {
        return {MRCondition::shifted, dt, channel};
    }
};

/// Channel this MR modulates, given the channel it was tuned to.
std::optional<int> acting_channel(const MRState& state, int home_channel);

/// Multiplicand the MR applies to the carrier it acts on. A healthy or
/// shifted MR imprints its value; an off-resonance MR passes
/// `off_resonance_value` (1.0 = full through-port transmission).
double mr_transmission(const MRState& state, double imprint, double off_resonance_value = 1.0);

}  // namespace mrfault::photonics
