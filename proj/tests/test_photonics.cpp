#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mrfault/error.hpp"
#include "mrfault/photonics.hpp"

using namespace mrfault;
using namespace mrfault::photonics;

TEST_CASE("resonant wavelength of a 10 um ring") {
    const MRPhysical mr{10.0, 97, 2.4, {}};
    // 2*pi*10e-6 m * 2.4 / 97 = 1.5546e-6 m
    const double oracle = 2.0 * 3.14159265358979323846 * 10.0e3 * 2.4 / 97.0;
    CHECK(resonant_wavelength_nm(mr) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(resonant_wavelength_nm(mr) - 1554.60) < 0.01);
}

TEST_CASE("resonant wavelength rejects bad geometry") {
    CHECK_THROWS_AS(resonant_wavelength_nm({10.0, 0, 2.4, {}}), DomainError);
    CHECK_THROWS_AS(resonant_wavelength_nm({0.0, 97, 2.4, {}}), DomainError);
    CHECK_THROWS_AS(resonant_wavelength_nm({10.0, 97, -1.0, {}}), DomainError);
}

TEST_CASE("thermo-optic shift") {
    const ThermoOpticParams p;
    const double oracle = 0.8 * 1.86e-4 * (1550.0 / 4.2) * 10.0;
    CHECK(thermal_shift_nm(1550.0, 10.0, p) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(std::abs(thermal_shift_nm(1550.0, 10.0, p) - 0.5491) / 0.5491 < 1e-4);
    CHECK(thermal_shift_nm(1550.0, 0.0, p) == 0.0);
    CHECK_THROWS_AS(thermal_shift_nm(1550.0, -1.0, p), DomainError);

    SUBCASE("linear in the temperature rise") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> dt(0.0, 200.0);
        for (int i = 0; i < 200; ++i) {
            const double t = dt(rng);
            const double a = thermal_shift_nm(1550.0, t, p);
            const double b = thermal_shift_nm(1550.0, 2.0 * t, p);
            CHECK(std::abs(b - 2.0 * a) <= 4.0 * std::numeric_limits<double>::epsilon() * b);
        }
    }
}

TEST_CASE("channel grid orientation") {
    const ChannelGrid g{1550.0, 0.8, 3};
    CHECK(g.wavelength_nm(0) == doctest::Approx(1551.6));
    CHECK(g.wavelength_nm(1) == doctest::Approx(1550.8));
    CHECK(g.wavelength_nm(2) == doctest::Approx(1550.0));
    // A red shift of one spacing moves channel k onto k-1.
    CHECK(snap_to_channel(g.wavelength_nm(2) + 0.8, g) == 1);
    CHECK(snap_to_channel(g.wavelength_nm(1) + 0.8, g) == 0);
    CHECK_FALSE(snap_to_channel(g.wavelength_nm(0) + 0.8, g).has_value());
}

TEST_CASE("snapping") {
    const ChannelGrid g{1550.0, 0.8, 20};
    SUBCASE("exact carriers") {
        for (int j = 0; j < 20; ++j) CHECK(snap_to_channel(g.wavelength_nm(j), g) == j);
    }
    SUBCASE("below half a spacing stays") {
        CHECK(snap_to_channel(g.wavelength_nm(10) + 0.39, g) == 10);
        CHECK(snap_to_channel(g.wavelength_nm(10) - 0.39, g) == 10);
    }
    SUBCASE("beyond half a spacing moves") {
        CHECK(snap_to_channel(g.wavelength_nm(10) + 0.41, g) == 9);
        CHECK(snap_to_channel(g.wavelength_nm(10) + 1.61, g) == 8);
    }
    SUBCASE("ties go to the lower index") {
        const ChannelGrid unit{0.0, 1.0, 4};  // exact binary arithmetic
        CHECK(snap_to_channel(2.5, unit) == 0);
        CHECK(snap_to_channel(1.5, unit) == 1);
        CHECK(snap_to_channel(0.5, unit) == 2);
    }
    SUBCASE("off grid") {
        CHECK_FALSE(snap_to_channel(g.wavelength_nm(0) + 0.41, g).has_value());
        CHECK_FALSE(snap_to_channel(g.wavelength_nm(19) - 0.41, g).has_value());
        CHECK_FALSE(snap_to_channel(std::nan(""), g).has_value());
    }
}

TEST_CASE("temperature field") {
    const ThermalKernel k{0.5, 40.0};
    const ChipBounds chip{400.0, 400.0};

    SUBCASE("no heaters is all zero") {
        const auto f = compute_temperature_field({}, chip, 10.0, k);
        CHECK(f.cols == 41);
        CHECK(f.rows == 41);
        for (double v : f.delta_k) CHECK(v == 0.0);
    }
    SUBCASE("one sigma away is exp(-1/2) of the peak") {
        const std::vector<Heater> h{{{200.0, 200.0}, 10.0}};
        const double peak = 10.0 * 0.5;
        CHECK(temperature_at(h, {200.0, 200.0}, k) == doctest::Approx(peak));
        CHECK(temperature_at(h, {240.0, 200.0}, k) == doctest::Approx(peak * 0.6065306597126334));
        const auto f = compute_temperature_field(h, chip, 10.0, k);
        CHECK(f.at(24, 20) == doctest::Approx(peak * std::exp(-0.5)));
    }
    SUBCASE("superposition") {
        const Heater a{{100.0, 120.0}, 7.0}, b{{250.0, 300.0}, 3.0};
        const std::vector<Heater> both{a, b}, twice{a, a}, only_a{a}, only_b{b};
        const auto fa = compute_temperature_field(only_a, chip, 20.0, k);
        const auto fb = compute_temperature_field(only_b, chip, 20.0, k);
        const auto fab = compute_temperature_field(both, chip, 20.0, k);
        const auto faa = compute_temperature_field(twice, chip, 20.0, k);
        for (std::size_t i = 0; i < fab.delta_k.size(); ++i) {
            CHECK(std::abs(fab.delta_k[i] - (fa.delta_k[i] + fb.delta_k[i])) <= 1e-12 * fab.delta_k[i]);
            CHECK(faa.delta_k[i] == doctest::Approx(2.0 * fa.delta_k[i]).epsilon(1e-14));
        }
    }
    SUBCASE("decays along a ray") {
        const std::vector<Heater> h{{{50.0, 50.0}, 4.0}};
        double prev = temperature_at(h, {50.0, 50.0}, k);
        for (double d = 1.0; d < 300.0; d += 1.0) {
            const double t = temperature_at(h, {50.0 + 0.6 * d, 50.0 + 0.8 * d}, k);
            CHECK(t <= prev);
            prev = t;
        }
    }
    SUBCASE("errors") {
        const std::vector<Heater> outside{{{500.0, 10.0}, 1.0}};
        CHECK_THROWS_AS(compute_temperature_field(outside, chip, 10.0, k), ConfigError);
        const std::vector<Heater> cold{{{10.0, 10.0}, 0.0}};
        CHECK_THROWS_AS(compute_temperature_field(cold, chip, 10.0, k), ConfigError);
        CHECK_THROWS_AS(compute_temperature_field({}, chip, 0.0, k), ConfigError);
    }
}

TEST_CASE("kernel cutoff radius") {
    const ThermalKernel k{0.5, 40.0};
    const double r = k.cutoff_radius(10.0, 1e-3);
    CHECK(k.response(10.0, r * r) == doctest::Approx(1e-3));
    CHECK(k.cutoff_radius(1.0, 1.0) == 0.0);
}

TEST_CASE("MR transmission") {
    CHECK(mr_transmission(MRState::healthy(), 0.25) == 0.25);
    CHECK(mr_transmission(MRState::shifted(12.0f, 3), 0.25) == 0.25);
    CHECK(mr_transmission(MRState::off_resonance(), 0.25) == 1.0);
    CHECK(mr_transmission(MRState::off_resonance(), 0.25, 0.0) == 0.0);
    CHECK_THROWS_AS(mr_transmission(MRState::healthy(), 1.5), DomainError);
    CHECK_THROWS_AS(mr_transmission(MRState::healthy(), -0.1), DomainError);

    CHECK(acting_channel(MRState::healthy(), 4) == 4);
    CHECK(acting_channel(MRState::off_resonance(), 4) == 4);
    CHECK(acting_channel(MRState::shifted(1.0f, 3), 4) == 3);
    CHECK_FALSE(acting_channel(MRState::shifted(1.0f, std::nullopt), 0).has_value());
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((ThermoOpticParams{0.0, 1.86e-4, 4.2}.validate()), ConfigError);
    CHECK_THROWS_AS((ChannelGrid{1550.0, 0.0, 3}.validate()), ConfigError);
    CHECK_THROWS_AS((ChannelGrid{1550.0, 0.8, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((ThermalKernel{0.5, 0.0}.validate()), ConfigError);
    CHECK_NOTHROW(ThermoOpticParams{}.validate());
}
