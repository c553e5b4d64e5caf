#pragma once

// Turns declarative attack specifications into per-MR fault states.
//
// Randomness: every (seed, trial) pair seeds its own std::mt19937_64 with
// trial_seed(seed, trial), a SplitMix64 mix of both values. Nothing else
// draws from the generator, so a trial's targets are a pure function of the
// spec, the accelerator and the trial index.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mrfault/accelerator.hpp"
#include "mrfault/photonics.hpp"

namespace mrfault::faults {

enum class AttackKind { actuation, hotspot };
enum class Scope { conv, fc, both };

std::string to_string(AttackKind k);
std::string to_string(Scope s);
AttackKind parse_attack_kind(const std::string& s);
Scope parse_scope(const std::string& s);

struct AttackSpec {
    AttackKind kind = AttackKind::actuation;
    Scope scope = Scope::both;
    double fraction = 0.01;  // share of the scope's MR inventory; 0 is a no-op control
    std::uint64_t seed = 0;
    int trial_count = 10;
    double heater_power_mw = 20.0;  // hotspot only, per compromised heater
    // Hotspot only: MRs served by one compromised heater along each array of
    // an attacked bank. 0 places a single heater at the bank centroid.
    int heater_group = 4;

    /// Throws ConfigError unless 0 <= fraction <= 1, trial_count >= 1 and
    /// (for hotspots) the heater power is positive.
    void validate() const;
};

inline constexpr const char* kPrngName = "std::mt19937_64";
inline constexpr const char* kSeedDerivation = "seed_t = splitmix64(seed ^ splitmix64(trial))";

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t trial_seed(std::uint64_t seed, std::uint32_t trial);

/// floor(fraction * n), robust to representation error in `fraction`.
std::size_t target_budget(double fraction, std::size_t n);

std::size_t scope_mr_count(const accel::Accelerator& acc, Scope scope);

/// Exactly target_budget(fraction, N_scope) distinct MRs drawn uniformly
/// without replacement from the scope's inventory, returned sorted.
std::vector<accel::MRIndex> select_actuation_targets(const AttackSpec& spec, const accel::Accelerator& acc,
                                                     std::uint32_t trial);

/// Banks drawn uniformly without replacement (in draw order) until the MRs
/// they hold reach the budget; the final bank may overshoot it.
std::vector<accel::BankId> select_hotspot_heaters(const AttackSpec& spec, const accel::Accelerator& acc,
                                                  std::uint32_t trial);

/// Compromised heaters of the given banks: one per run of `group_size`
/// consecutive MRs in each array, at the run's centre, or a single heater at
/// the bank centroid when `group_size` is 0.
std::vector<photonics::Heater> heaters_at(const std::vector<accel::BankId>& banks, const accel::Accelerator& acc,
                                          double power_mw, int group_size = 0);

/// Per-MR temperature rise from a heater set, evaluated at every MR the
/// heaters can reach. Contributions below 1e-9 K per heater are dropped.
/// MRs whose drifted resonance still snaps to their own carrier stay healthy.
accel::FaultedAccelerator apply_heaters(const accel::Accelerator& acc, const std::vector<photonics::Heater>& heaters);

/// A materialised attack with its realised targets, kept for reports.
struct RealizedAttack {
    accel::FaultedAccelerator faulted;
    std::vector<accel::MRIndex> actuation_targets;  // actuation only
    std::vector<accel::BankId> heated_banks;        // hotspot only
    std::size_t targeted_mrs = 0;                   // MRs directly targeted (banks count whole)
    std::uint64_t digest = 0;                       // FNV-1a over the realised targets
};

RealizedAttack realize_attack(const accel::Accelerator& acc, const AttackSpec& spec, std::uint32_t trial);

accel::FaultedAccelerator apply_attack(const accel::Accelerator& acc, const AttackSpec& spec, std::uint32_t trial);

}  // namespace mrfault::faults
