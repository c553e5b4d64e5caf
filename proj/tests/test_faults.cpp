#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "mrfault/accelerator.hpp"
#include "mrfault/error.hpp"
#include "mrfault/faults.hpp"

using namespace mrfault;
using namespace mrfault::accel;
using namespace mrfault::faults;
using photonics::MRCondition;

namespace {

AttackSpec spec_of(AttackKind kind, Scope scope, double fraction, std::uint64_t seed = 7) {
    AttackSpec s;
    s.kind = kind;
    s.scope = scope;
    s.fraction = fraction;
    s.seed = seed;
    return s;
}

double distance(photonics::Point a, photonics::Point b) { return std::hypot(a.x_um - b.x_um, a.y_um - b.y_um); }

// Power that gives a temperature rise producing `shift_nm` at `lambda_nm`.
double power_for_shift(const Accelerator& acc, double shift_nm, double lambda_nm) {
    const auto& t = acc.config().thermo;
    const double per_kelvin = t.gamma_si * t.dn_dT * lambda_nm / t.n_g;
    return shift_nm / per_kelvin / acc.config().thermal.kappa_k_per_mw;
}

}  // namespace

TEST_CASE("splitmix64 reference values") {
    // First two outputs of the SplitMix64 generator seeded with 0.
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(0x9e3779b97f4a7c15ULL) == 0x6e789e6aa1b965f4ULL);
    CHECK(trial_seed(5, 0) == splitmix64(5 ^ splitmix64(0)));
    CHECK(trial_seed(5, 0) != trial_seed(5, 1));
    CHECK(trial_seed(5, 0) != trial_seed(6, 0));
}

TEST_CASE("target budget") {
    CHECK(target_budget(0.1, 80'000) == 8'000);
    CHECK(target_budget(0.01, 2'780'000) == 27'800);
    CHECK(target_budget(0.29, 100) == 29);
    CHECK(target_budget(0.015, 101) == 1);
    CHECK(target_budget(0.0, 1000) == 0);
    CHECK(target_budget(1.0, 1000) == 1000);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(spec_of(AttackKind::actuation, Scope::conv, -0.1).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(AttackKind::actuation, Scope::conv, 1.5).validate(), ConfigError);
    auto s = spec_of(AttackKind::hotspot, Scope::conv, 0.1);
    s.heater_power_mw = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = spec_of(AttackKind::hotspot, Scope::conv, 0.1);
    s.heater_group = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(parse_scope("all"), ConfigError);
    CHECK_THROWS_AS(parse_attack_kind("laser"), ConfigError);
    CHECK(parse_scope("fc") == Scope::fc);
    CHECK(to_string(parse_attack_kind("hotspot")) == "hotspot");
}

TEST_CASE("actuation targets") {
    const auto acc = build_accelerator({});
    SUBCASE("10% of the CONV block is 8000 distinct sorted MRs") {
        const auto t = select_actuation_targets(spec_of(AttackKind::actuation, Scope::conv, 0.1), acc, 0);
        CHECK(t.size() == 8'000);
        CHECK(std::is_sorted(t.begin(), t.end()));
        CHECK(std::adjacent_find(t.begin(), t.end()) == t.end());
        CHECK(t.back() < acc.block_offset(Block::fc));
    }
    SUBCASE("FC scope stays in the FC block") {
        const auto t = select_actuation_targets(spec_of(AttackKind::actuation, Scope::fc, 0.01), acc, 3);
        CHECK(t.size() == 27'000);
        CHECK(t.front() >= acc.block_offset(Block::fc));
        CHECK(t.back() < acc.total_mr_count());
    }
    SUBCASE("both blocks") {
        const auto t = select_actuation_targets(spec_of(AttackKind::actuation, Scope::both, 0.01), acc, 1);
        CHECK(t.size() == 27'800);
        CHECK(t.front() < acc.block_offset(Block::fc));
        CHECK(t.back() >= acc.block_offset(Block::fc));
    }
    SUBCASE("deterministic per trial") {
        const auto s = spec_of(AttackKind::actuation, Scope::conv, 0.05);
        CHECK(select_actuation_targets(s, acc, 4) == select_actuation_targets(s, acc, 4));
        CHECK(select_actuation_targets(s, acc, 4) != select_actuation_targets(s, acc, 5));
        CHECK(select_actuation_targets(s, acc, 4) != select_actuation_targets(spec_of(AttackKind::actuation, Scope::conv, 0.05, 8), acc, 4));
    }
    SUBCASE("zero fraction") {
        CHECK(select_actuation_targets(spec_of(AttackKind::actuation, Scope::conv, 0.0), acc, 0).empty());
        CHECK(apply_attack(acc, spec_of(AttackKind::actuation, Scope::conv, 0.0), 0).fault_count() == 0);
    }
    SUBCASE("wrong kind") {
        CHECK_THROWS_AS(select_actuation_targets(spec_of(AttackKind::hotspot, Scope::conv, 0.1), acc, 0), ContractError);
        CHECK_THROWS_AS(select_hotspot_heaters(spec_of(AttackKind::actuation, Scope::conv, 0.1), acc, 0), ContractError);
    }
}

TEST_CASE("actuation targets are uniform over the CONV banks") {
    const auto acc = build_accelerator({});
    const auto s = spec_of(AttackKind::actuation, Scope::conv, 0.01, 99);
    const std::size_t banks = acc.bank_count(Block::conv);
    std::vector<double> counts(banks, 0.0);
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        for (MRIndex i : select_actuation_targets(s, acc, t)) counts[i / acc.mrs_per_bank(Block::conv)] += 1.0;
    }
    const double expected = 800.0 * trials / static_cast<double>(banks);
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 1999 degrees of freedom: mean 1999, sd ~63. Five sd above the mean.
    CHECK(chi2 < 1999.0 + 5.0 * std::sqrt(2.0 * 1999.0));
    CHECK(chi2 > 1999.0 - 5.0 * std::sqrt(2.0 * 1999.0));
}

TEST_CASE("actuation realisation turns targets off resonance") {
    const auto acc = build_accelerator({});
    const auto s = spec_of(AttackKind::actuation, Scope::fc, 0.001);
    const auto r = realize_attack(acc, s, 2);
    CHECK(r.targeted_mrs == 2'700);
    CHECK(r.faulted.fault_count() == 2'700);
    for (MRIndex i : r.actuation_targets) CHECK(r.faulted.state(i).condition == MRCondition::off_resonance);
    CHECK(r.digest == realize_attack(acc, s, 2).digest);
    CHECK(r.digest != realize_attack(acc, s, 3).digest);
}

TEST_CASE("hotspot bank selection") {
    const auto acc = build_accelerator({});
    SUBCASE("10% of the CONV block is 200 banks") {
        const auto b = select_hotspot_heaters(spec_of(AttackKind::hotspot, Scope::conv, 0.1), acc, 0);
        CHECK(b.size() == 200);
        CHECK(std::set<BankId>(b.begin(), b.end()).size() == 200);
        for (const auto& id : b) CHECK(id.block == Block::conv);
    }
    SUBCASE("the last bank may overshoot") {
        // floor(0.0101 * 80000) = 808 MRs: 21 banks of 40.
        const auto b = select_hotspot_heaters(spec_of(AttackKind::hotspot, Scope::conv, 0.0101), acc, 0);
        CHECK(b.size() == 21);
        const auto r = realize_attack(acc, spec_of(AttackKind::hotspot, Scope::conv, 0.0101), 0);
        CHECK(r.targeted_mrs == 840);
    }
    SUBCASE("FC scope") {
        const auto b = select_hotspot_heaters(spec_of(AttackKind::hotspot, Scope::fc, 0.01), acc, 1);
        CHECK(b.size() == 90);
        for (const auto& id : b) CHECK(id.block == Block::fc);
    }
    SUBCASE("deterministic per trial") {
        const auto s = spec_of(AttackKind::hotspot, Scope::both, 0.05);
        CHECK(select_hotspot_heaters(s, acc, 2) == select_hotspot_heaters(s, acc, 2));
        CHECK(select_hotspot_heaters(s, acc, 2) != select_hotspot_heaters(s, acc, 3));
    }
}

TEST_CASE("heater placement") {
    const auto acc = build_accelerator({});
    const BankId conv{Block::conv, 4, 7}, fc{Block::fc, 2, 9};
    CHECK(heaters_at({conv}, acc, 5.0).size() == 1);
    CHECK(heaters_at({conv}, acc, 5.0)[0].position.x_um == doctest::Approx(acc.bank_centroid(conv).x_um));
    // 20 columns in groups of 4: 5 per array. 150 columns: 38 per array.
    CHECK(heaters_at({conv}, acc, 5.0, 4).size() == 10);
    CHECK(heaters_at({fc}, acc, 5.0, 4).size() == 76);
    CHECK(heaters_at({conv, fc}, acc, 5.0, 4).size() == 86);
    const auto h = heaters_at({conv}, acc, 5.0, 4);
    const auto p0 = acc.position({Block::conv, 4, 7, 0, ArrayRole::input});
    const auto p3 = acc.position({Block::conv, 4, 7, 3, ArrayRole::input});
    CHECK(h[0].position.x_um == doctest::Approx((p0.x_um + p3.x_um) / 2.0));
    CHECK(h[0].position.y_um == doctest::Approx(p0.y_um));
    for (const auto& x : h) CHECK(x.power_mw == 5.0);
    CHECK_THROWS_AS(heaters_at({conv}, acc, 5.0, -2), ConfigError);
}

TEST_CASE("no heaters leave the accelerator healthy") {
    const auto acc = build_accelerator({});
    CHECK(apply_heaters(acc, {}).fault_count() == 0);
    CHECK(apply_attack(acc, spec_of(AttackKind::hotspot, Scope::both, 0.0), 0).fault_count() == 0);
}

TEST_CASE("heating is local to the heater") {
    const auto acc = build_accelerator({});
    const BankId bank{Block::fc, 10, 70};
    const auto heaters = heaters_at({bank}, acc, 20.0);
    const auto f = apply_heaters(acc, heaters);
    REQUIRE(f.fault_count() > 0);
    const double sigma = acc.config().thermal.sigma_um;
    for (const auto& [i, st] : f.faults()) {
        CHECK(st.condition == MRCondition::shifted);
        CHECK(distance(acc.position(acc.coordinate(i)), heaters[0].position) < sigma);
    }
    // Neighbouring MRs at three sigma see about 0.11 K, far below half a spacing.
    const auto c = acc.bank_centroid(bank);
    const double t3 = photonics::temperature_at(heaters, {c.x_um, c.y_um + 3.0 * sigma}, acc.config().thermal);
    CHECK(photonics::thermal_shift_nm(1550.0, t3, acc.config().thermo) < 0.4 * 0.1);
    for (int col = 0; col < 150; ++col) {
        const MRCoordinate far{Block::fc, 10, 70 + 6, col, ArrayRole::weight};
        CHECK(f.state(far).condition == MRCondition::healthy);
    }
}

TEST_CASE("shifted MRs record the temperature rise and the snapped channel") {
    const auto acc = build_accelerator({});
    const BankId bank{Block::conv, 0, 5};
    const auto heaters = heaters_at({bank}, acc, 30.0);
    const auto f = apply_heaters(acc, heaters);
    for (const auto& [i, st] : f.faults()) {
        const auto c = acc.coordinate(i);
        const double dt = photonics::temperature_at(heaters, acc.position(c), acc.config().thermal);
        CHECK(st.delta_t_k == doctest::Approx(dt).epsilon(1e-4));
        const double lambda = acc.home_wavelength_nm(c) + photonics::thermal_shift_nm(acc.home_wavelength_nm(c), dt,
                                                                                          acc.config().thermo);
        const auto ch = photonics::snap_to_channel(lambda, acc.grid(c.block));
        CHECK(st.snapped == ch);
        CHECK(ch != std::optional<int>(c.column));
    }
}

TEST_CASE("heater shifting a weight array by one spacing") {
    auto cfg = toy_config(3);
    cfg.floorplan.array_gap_um = 2000.0;
    const auto acc = build_accelerator(cfg);
    const BankId bank{Block::fc, 0, 0};
    const auto w0 = acc.position({Block::fc, 0, 0, 0, ArrayRole::weight});
    const auto w2 = acc.position({Block::fc, 0, 0, 2, ArrayRole::weight});
    const photonics::Point centre{(w0.x_um + w2.x_um) / 2.0, w0.y_um};
    const double lambda_mid = acc.home_wavelength_nm({Block::fc, 0, 0, 1, ArrayRole::weight});

    SUBCASE("one spacing") {
        const auto f = apply_heaters(acc, {{centre, power_for_shift(acc, 0.8, lambda_mid)}});
        for (int k = 0; k < 3; ++k) {
            const auto in = f.state({Block::fc, 0, 0, k, ArrayRole::input});
            CHECK(in.condition == MRCondition::healthy);
            const auto st = f.state({Block::fc, 0, 0, k, ArrayRole::weight});
            CHECK(st.condition == MRCondition::shifted);
            CHECK(photonics::acting_channel(st, k) == (k == 0 ? std::nullopt : std::optional<int>(k - 1)));
        }
        for (int k = 0; k < 3; ++k) {
            CHECK(f.state({Block::conv, 0, 0, k, ArrayRole::weight}).condition == MRCondition::healthy);
        }
    }
    SUBCASE("sub-threshold") {
        const auto f = apply_heaters(acc, {{centre, power_for_shift(acc, 0.3, lambda_mid)}});
        CHECK(f.fault_count() == 0);
    }
}

TEST_CASE("heater errors") {
    const auto acc = build_accelerator(toy_config(3));
    CHECK_THROWS_AS(apply_heaters(acc, {{{-5.0, 1.0}, 1.0}}), ConfigError);
    CHECK_THROWS_AS(apply_heaters(acc, {{{1.0, 1.0}, 0.0}}), ConfigError);
}
