#pragma once

// Eavesdropper strategies acting on one quantum arm.
//
// Eve sees only the photons on the arm she taps and, when granted plaintext
// access, the tamper spec. Everything she learns goes into EveKnowledge;
// what she actually disturbed is scored afterwards by the simulator.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qauth/errors.hpp"
#include "qauth/qchannel.hpp"
#include "qauth/rng.hpp"
#include "qauth/tamper_spec.hpp"

namespace qauth {

enum class AttackKind : std::uint8_t {
    Passive,
    InterceptResendAll,
    SubsetGuess,
    PhotonNumberSplitting,
    OracleLocations,
};

// How Eve picks the basis for an intercept-resend measurement.
//   Uniform:  fair coin per slot.
//   KeyBasis: always the public key basis. Every key bit she measures is then
//             learned exactly and left correlated, which is the accounting
//             the closed-form subset-guessing bound assumes.
enum class EveBasisChoice : std::uint8_t { Uniform, KeyBasis };

enum class EvePlacement : std::uint8_t { AliceArm, BobArm, BothArms };

struct AdversaryStrategy {
    AttackKind kind = AttackKind::Passive;
    std::uint32_t g = 0;  // slots measured by SubsetGuess
    bool knows_plaintext = false;
    EveBasisChoice basis_choice = EveBasisChoice::Uniform;
    EvePlacement placement = EvePlacement::AliceArm;
    bool attempt_forgery = false;

    static AdversaryStrategy passive() { return {}; }
    static AdversaryStrategy intercept_resend_all() {
        AdversaryStrategy s;
        s.kind = AttackKind::InterceptResendAll;
        s.attempt_forgery = true;
        return s;
    }
    static AdversaryStrategy subset_guess(std::uint32_t g) {
        AdversaryStrategy s;
        s.kind = AttackKind::SubsetGuess;
        s.g = g;
        s.attempt_forgery = true;
        return s;
    }
    static AdversaryStrategy photon_number_splitting() {
        AdversaryStrategy s;
        s.kind = AttackKind::PhotonNumberSplitting;
        s.attempt_forgery = true;
        return s;
    }
    static AdversaryStrategy oracle_locations() {
        AdversaryStrategy s;
        s.kind = AttackKind::OracleLocations;
        s.knows_plaintext = true;
        s.attempt_forgery = true;
        return s;
    }

    bool taps_alice() const noexcept { return placement != EvePlacement::BobArm; }
    bool taps_bob() const noexcept { return placement != EvePlacement::AliceArm; }

    // A subset guess below k can never cover the key; such runs are allowed
    // for testing but flagged.
    bool rational_for(std::uint32_t k, std::uint32_t d) const noexcept {
        return kind != AttackKind::SubsetGuess || (g >= k && g <= k + d);
    }

    void validate(std::uint32_t k, std::uint32_t d) const {
        if (kind == AttackKind::SubsetGuess && g > k + d) {
            throw ConfigError("g", "cannot measure more than k + d slots");
        }
        if (kind == AttackKind::OracleLocations && !knows_plaintext) {
            throw ConfigError("knows_plaintext", "oracle-locations requires plaintext access");
        }
    }
};

constexpr std::string_view to_string(AttackKind k) noexcept {
    switch (k) {
        case AttackKind::Passive: return "passive";
        case AttackKind::InterceptResendAll: return "intercept-resend";
        case AttackKind::SubsetGuess: return "subset-guess";
        case AttackKind::PhotonNumberSplitting: return "pns";
        case AttackKind::OracleLocations: return "oracle-locations";
    }
    return "?";
}

inline std::optional<AttackKind> parse_attack_kind(std::string_view s) {
    for (auto k : {AttackKind::Passive, AttackKind::InterceptResendAll, AttackKind::SubsetGuess,
                   AttackKind::PhotonNumberSplitting, AttackKind::OracleLocations}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

constexpr std::string_view to_string(EveBasisChoice c) noexcept {
    return c == EveBasisChoice::Uniform ? "uniform" : "key";
}

constexpr std::string_view to_string(EvePlacement p) noexcept {
    switch (p) {
        case EvePlacement::AliceArm: return "alice";
        case EvePlacement::BobArm: return "bob";
        case EvePlacement::BothArms: return "both";
    }
    return "?";
}

struct KnownBit {
    std::uint8_t bit = 0;
    Basis basis = Basis::Rectilinear;  // basis Eve measured in
};

struct EveKnowledge {
    // Dense slot -> bit map; empty entries are slots Eve learned nothing about.
    std::vector<std::optional<KnownBit>> slot_bits;
    std::vector<std::uint32_t> measured_slots;  // sorted
    std::vector<std::uint32_t> resent_slots;    // slots whose forwarded photon Eve prepared
    std::uint32_t disturbed_tamper_slots = 0;   // scored by the simulator

    explicit EveKnowledge(std::uint32_t stream_length = 0) : slot_bits(stream_length) {}

    std::size_t known_count() const noexcept {
        std::size_t n = 0;
        for (const auto& b : slot_bits) n += b.has_value();
        return n;
    }

    void learn(std::uint32_t slot, std::uint8_t bit, Basis basis) { slot_bits.at(slot) = KnownBit{bit, basis}; }

    // Merges knowledge gathered on the other arm. Later entries win on clash.
    void merge(const EveKnowledge& other) {
        for (std::size_t i = 0; i < other.slot_bits.size(); ++i) {
            if (other.slot_bits[i]) slot_bits.at(i) = other.slot_bits[i];
        }
        auto merge_sorted = [](std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
            std::vector<std::uint32_t> out;
            std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
            a = std::move(out);
        };
        merge_sorted(measured_slots, other.measured_slots);
        merge_sorted(resent_slots, other.resent_slots);
    }
};

// Result of running a strategy against one arm. Photons Eve split off are
// held in `retained` until settle() measures them.
struct InterceptResult {
    ArmStream forwarded;
    EveKnowledge knowledge;
    std::vector<std::pair<std::uint32_t, Photon>> retained;
};

namespace detail {

inline void intercept_resend(std::uint32_t slot, Arm& arm, Basis basis, InterceptResult& r, PairRegistry& registry,
                             Rng& rng) {
    const std::uint8_t bit = measure(arm.front(), basis, registry, rng);
    arm.erase(arm.begin() + 1, arm.end());
    arm.front() = Photon::product(basis, bit);
    r.knowledge.learn(slot, bit, basis);
    r.knowledge.measured_slots.push_back(slot);
    r.knowledge.resent_slots.push_back(slot);
}

inline Basis pick_basis(const AdversaryStrategy& s, Basis key_basis, Rng& rng) {
    return s.basis_choice == EveBasisChoice::KeyBasis ? key_basis : random_basis(rng);
}

}  // namespace detail

// Runs `strategy` against one arm. `spec` is the decrypted tamper spec when
// Eve has plaintext access, otherwise null.
inline InterceptResult apply(const AdversaryStrategy& strategy, ArmStream arm, const TamperSpec* spec, Basis key_basis,
                             PairRegistry& registry, Rng& rng) {
    const auto n = static_cast<std::uint32_t>(arm.size());
    InterceptResult r{{}, EveKnowledge(n), {}};
    if (strategy.kind != AttackKind::Passive) {
        r.knowledge.measured_slots.reserve(n);
        r.knowledge.resent_slots.reserve(n);
    }

    switch (strategy.kind) {
        case AttackKind::Passive:
            break;

        case AttackKind::InterceptResendAll:
            for (std::uint32_t s = 0; s < n; ++s) {
                detail::intercept_resend(s, arm[s], detail::pick_basis(strategy, key_basis, rng), r, registry, rng);
            }
            break;

        case AttackKind::SubsetGuess: {
            if (strategy.g > n) throw DomainError("subset guess larger than the stream");
            for (std::uint32_t s : sample_subset(n, strategy.g, rng)) {
                detail::intercept_resend(s, arm[s], detail::pick_basis(strategy, key_basis, rng), r, registry, rng);
            }
            break;
        }

        case AttackKind::PhotonNumberSplitting:
            for (std::uint32_t s = 0; s < n; ++s) {
                if (arm[s].size() >= 2) {
                    auto [kept, forwarded] = split_arm(arm[s], 1);
                    r.retained.emplace_back(s, kept.front());
                    r.knowledge.measured_slots.push_back(s);
                    arm[s] = std::move(forwarded);
                } else {
                    detail::intercept_resend(s, arm[s], detail::pick_basis(strategy, key_basis, rng), r, registry,
                                             rng);
                }
            }
            break;

        case AttackKind::OracleLocations: {
            if (spec == nullptr) throw MissingSpec();
            for (std::uint32_t s : spec->key_slots(n)) {
                detail::intercept_resend(s, arm[s], key_basis, r, registry, rng);
            }
            break;
        }
    }
    r.forwarded = std::move(arm);
    return r;
}

// Measures retained photons in the public key basis. Called after the
// honest parties have measured, so entangled pairs are already collapsed.
inline void settle(InterceptResult& r, Basis key_basis, PairRegistry& registry, Rng& rng) {
    for (auto& [slot, photon] : r.retained) {
        const std::uint8_t bit = measure(photon, key_basis, registry, rng);
        r.knowledge.learn(slot, bit, key_basis);
    }
    r.retained.clear();
}

struct ForgedToken {
    std::vector<std::uint8_t> bits;
    std::uint32_t guessed = 0;  // positions filled by a coin flip
};

// Eve's best token for the disclosed slots: what she knows, coin flips for
// the rest. She always submits one.
inline ForgedToken forge_attempt(const EveKnowledge& knowledge, std::span<const std::uint32_t> disclosed_slots,
                                 Rng& rng) {
    ForgedToken t;
    t.bits.reserve(disclosed_slots.size());
    for (std::uint32_t slot : disclosed_slots) {
        const auto& known = slot < knowledge.slot_bits.size() ? knowledge.slot_bits[slot] : std::nullopt;
        if (known) {
            t.bits.push_back(known->bit);
        } else {
            t.bits.push_back(rng.bit());
            ++t.guessed;
        }
    }
    return t;
}

}  // namespace qauth
