#include "mrfault/faults.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <ranges>

#include "mrfault/error.hpp"

namespace mrfault::faults {

using accel::Accelerator;
using accel::ArrayRole;
using accel::BankId;
using accel::Block;
using accel::MRIndex;

std::string to_string(AttackKind k) { return k == AttackKind::actuation ? "actuation" : "hotspot"; }

std::string to_string(Scope s) {
    switch (s) {
        case Scope::conv: return "conv";
        case Scope::fc: return "fc";
        case Scope::both: return "both";
    }
    return "both";
}

AttackKind parse_attack_kind(const std::string& s) {
    if (s == "actuation") return AttackKind::actuation;
    if (s == "hotspot") return AttackKind::hotspot;
    throw ConfigError("unknown attack kind '" + s + "' (expected actuation or hotspot)");
}

Scope parse_scope(const std::string& s) {
    if (s == "conv") return Scope::conv;
    if (s == "fc") return Scope::fc;
    if (s == "both") return Scope::both;
    throw ConfigError("unknown attack scope '" + s + "' (expected conv, fc or both)");
}

void AttackSpec::validate() const {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("attack fraction must lie in [0, 1]");
    if (trial_count < 1) throw ConfigError("trial count must be at least 1");
    if (kind == AttackKind::hotspot && !(heater_power_mw > 0.0)) {
        throw ConfigError("hotspot heater power must be positive");
    }
    if (heater_group < 0) throw ConfigError("heater group size must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t trial_seed(std::uint64_t seed, std::uint32_t trial) { return splitmix64(seed ^ splitmix64(trial)); }

std::size_t target_budget(double fraction, std::size_t n) {
    const double exact = fraction * static_cast<double>(n);
    // 0.29 * 100 evaluates to 28.999999999999996; treat such values as integral.
    return static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
}

std::size_t scope_mr_count(const Accelerator& acc, Scope scope) {
    switch (scope) {
        case Scope::conv: return acc.mr_count(Block::conv);
        case Scope::fc: return acc.mr_count(Block::fc);
        case Scope::both: return acc.total_mr_count();
    }
    return 0;
}

namespace {

std::vector<Block> scope_blocks(Scope scope) {
    switch (scope) {
        case Scope::conv: return {Block::conv};
        case Scope::fc: return {Block::fc};
        case Scope::both: return {Block::conv, Block::fc};
    }
    return {};
}

struct Fnv1a {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void add(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    }
};

}  // namespace

std::vector<MRIndex> select_actuation_targets(const AttackSpec& spec, const Accelerator& acc, std::uint32_t trial) {
    spec.validate();
    if (spec.kind != AttackKind::actuation) throw ContractError("actuation targets requested for a hotspot spec");
    const std::size_t n = scope_mr_count(acc, spec.scope);
    const std::size_t budget = target_budget(spec.fraction, n);
    const MRIndex offset = spec.scope == Scope::fc ? acc.block_offset(Block::fc) : 0;

    std::vector<MRIndex> picked;
    picked.reserve(budget);
    if (budget == 0) return picked;
    std::mt19937_64 rng(trial_seed(spec.seed, trial));
    // Selection sampling over a forward range: uniform, and emits in index order.
    std::vector<MRIndex> pool(n);
    std::iota(pool.begin(), pool.end(), MRIndex{0});
    picked.reserve(budget);
    std::ranges::sample(pool, std::back_inserter(picked), static_cast<std::ptrdiff_t>(budget), rng);
    if (offset != 0) {
        for (auto& i : picked) i += offset;
    }
    return picked;
}

std::vector<BankId> select_hotspot_heaters(const AttackSpec& spec, const Accelerator& acc, std::uint32_t trial) {
    spec.validate();
    if (spec.kind != AttackKind::hotspot) throw ContractError("hotspot banks requested for an actuation spec");
    const std::size_t budget = target_budget(spec.fraction, scope_mr_count(acc, spec.scope));
    std::vector<BankId> chosen;
    if (budget == 0) return chosen;

    std::vector<BankId> pool;
    for (Block b : scope_blocks(spec.scope)) {
        for (std::size_t i = 0; i < acc.bank_count(b); ++i) pool.push_back(acc.bank_at(b, i));
    }
    std::mt19937_64 rng(trial_seed(spec.seed, trial));
    std::size_t covered = 0;
    // Incremental Fisher-Yates: each step draws uniformly from the banks left.
    for (std::size_t i = 0; i < pool.size() && covered < budget; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        chosen.push_back(pool[i]);
        covered += acc.mrs_per_bank(pool[i].block);
    }
    return chosen;
}

std::vector<photonics::Heater> heaters_at(const std::vector<BankId>& banks, const Accelerator& acc,
                                          double power_mw, int group_size) {
    if (group_size < 0) throw ConfigError("heater group size must be >= 0");
    std::vector<photonics::Heater> heaters;
    for (const auto& b : banks) {
        if (group_size == 0) {
            heaters.push_back({acc.bank_centroid(b), power_mw});
            continue;
        }
        const int width = acc.geometry(b.block).bank_width;
        for (ArrayRole role : {ArrayRole::input, ArrayRole::weight}) {
            for (int lo = 0; lo < width; lo += group_size) {
                const int hi = std::min(width, lo + group_size) - 1;
                const auto first = acc.position({b.block, b.unit, b.bank, lo, role});
                const auto last = acc.position({b.block, b.unit, b.bank, hi, role});
                heaters.push_back({{(first.x_um + last.x_um) / 2.0, (first.y_um + last.y_um) / 2.0}, power_mw});
            }
        }
    }
    return heaters;
}

accel::FaultedAccelerator apply_heaters(const Accelerator& acc, const std::vector<photonics::Heater>& heaters) {
    constexpr double kFloorK = 1e-9;
    const auto& kernel = acc.config().thermal;
    const auto& fp = acc.config().floorplan;
    const auto chip = acc.chip();
    for (const auto& h : heaters) {
        if (!chip.contains(h.position)) throw ConfigError("heater lies outside the chip");
        if (!(h.power_mw > 0.0)) throw ConfigError("heater power must be positive");
    }

    std::vector<double> delta(acc.total_mr_count(), 0.0);
    std::vector<MRIndex> touched;
    const double inv2s2 = 1.0 / (2.0 * kernel.sigma_um * kernel.sigma_um);
    std::vector<double> fx, fy, dx2, dy2;
    for (const auto& h : heaters) {
        const double r = kernel.cutoff_radius(h.power_mw, kFloorK);
        if (r <= 0.0) continue;
        const double peak = h.power_mw * kernel.kappa_k_per_mw;
        for (Block b : {Block::conv, Block::fc}) {
            const auto& g = acc.geometry(b);
            for (int u = 0; u < g.units; ++u) {
                const auto box = acc.unit_box(b, u);
                if (box.x1 < h.position.x_um - r || box.x0 > h.position.x_um + r || box.y1 < h.position.y_um - r ||
                    box.y0 > h.position.y_um + r) {
                    continue;
                }
                const auto origin = acc.unit_origin(b, u);
                const auto row_of = [&](double y) { return (y - origin.y_um) / fp.bank_pitch_um - 0.5; };
                const int bank_lo = std::max(0, static_cast<int>(std::ceil(row_of(h.position.y_um - r))));
                const int bank_hi =
                    std::min(g.banks_per_unit - 1, static_cast<int>(std::floor(row_of(h.position.y_um + r))));
                if (bank_lo > bank_hi) continue;
                // The kernel factorises into x and y terms on the MR lattice.
                fy.clear();
                dy2.clear();
                for (int bank = bank_lo; bank <= bank_hi; ++bank) {
                    const double dy = origin.y_um + (bank + 0.5) * fp.bank_pitch_um - h.position.y_um;
                    dy2.push_back(dy * dy);
                    fy.push_back(std::exp(-dy * dy * inv2s2));
                }
                for (ArrayRole role : {ArrayRole::input, ArrayRole::weight}) {
                    const double array_x = origin.x_um + (role == ArrayRole::input
                                                              ? 0.0
                                                              : g.bank_width * fp.mr_pitch_um + fp.array_gap_um);
                    const auto col_of = [&](double x) { return (x - array_x) / fp.mr_pitch_um - 0.5; };
                    const int col_lo = std::max(0, static_cast<int>(std::ceil(col_of(h.position.x_um - r))));
                    const int col_hi =
                        std::min(g.bank_width - 1, static_cast<int>(std::floor(col_of(h.position.x_um + r))));
                    if (col_lo > col_hi) continue;
                    fx.clear();
                    dx2.clear();
                    for (int col = col_lo; col <= col_hi; ++col) {
                        const double dx = array_x + (col + 0.5) * fp.mr_pitch_um - h.position.x_um;
                        dx2.push_back(dx * dx);
                        fx.push_back(peak * std::exp(-dx * dx * inv2s2));
                    }
                    for (int bank = bank_lo; bank <= bank_hi; ++bank) {
                        const auto k = static_cast<std::size_t>(bank - bank_lo);
                        const MRIndex start = acc.array_start({b, u, bank}, role) + static_cast<MRIndex>(col_lo);
                        for (std::size_t c = 0; c < fx.size(); ++c) {
                            if (dx2[c] + dy2[k] > r * r) continue;
                            const MRIndex idx = start + static_cast<MRIndex>(c);
                            if (delta[idx] == 0.0) touched.push_back(idx);
                            delta[idx] += fx[c] * fy[k];
                        }
                    }
                }
            }
        }
    }

    accel::FaultedAccelerator::FaultMap faults;
    const auto& thermo = acc.config().thermo;
    for (MRIndex idx : touched) {
        const auto c = acc.coordinate(idx);
        const double home = acc.home_wavelength_nm(c);
        const double drifted = home + photonics::thermal_shift_nm(home, delta[idx], thermo);
        const auto snapped = photonics::snap_to_channel(drifted, acc.grid(c.block));
        if (snapped && *snapped == c.column) continue;
        faults.emplace(idx, photonics::MRState::shifted(static_cast<float>(delta[idx]), snapped));
    }
    return accel::FaultedAccelerator(acc, std::move(faults));
}

RealizedAttack realize_attack(const Accelerator& acc, const AttackSpec& spec, std::uint32_t trial) {
    spec.validate();
    Fnv1a digest;
    if (spec.kind == AttackKind::actuation) {
        auto targets = select_actuation_targets(spec, acc, trial);
        accel::FaultedAccelerator::FaultMap faults;
        faults.reserve(targets.size());
        for (MRIndex i : targets) {
            faults.emplace(i, photonics::MRState::off_resonance());
            digest.add(i, 4);
        }
        const std::size_t n = targets.size();
        return {accel::FaultedAccelerator(acc, std::move(faults)), std::move(targets), {}, n, digest.h};
    }
    auto banks = select_hotspot_heaters(spec, acc, trial);
    std::size_t mrs = 0;
    for (const auto& b : banks) {
        digest.add(static_cast<std::uint64_t>(b.block), 1);
        digest.add(static_cast<std::uint64_t>(b.unit), 4);
        digest.add(static_cast<std::uint64_t>(b.bank), 4);
        mrs += acc.mrs_per_bank(b.block);
    }
    auto faulted = apply_heaters(acc, heaters_at(banks, acc, spec.heater_power_mw, spec.heater_group));
    return {std::move(faulted), {}, std::move(banks), mrs, digest.h};
}

accel::FaultedAccelerator apply_attack(const Accelerator& acc, const AttackSpec& spec, std::uint32_t trial) {
    return realize_attack(acc, spec, trial).faulted;
}

}  // namespace mrfault::faults
