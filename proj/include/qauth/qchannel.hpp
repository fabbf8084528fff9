#pragma once

// Photon-level model of the quantum channel: two conjugate polarization
// bases, twin-polarized product photons, maximally entangled pairs with
// collapse bookkeeping, and multi-photon emissions.
//
// Entanglement is tracked with a per-trial PairRegistry instead of state
// vectors. The only quantum behaviour the protocol relies on is that both
// halves of a (|00> + |11>)/sqrt(2) pair agree when measured in the same
// basis, and that a conjugate-basis measurement yields a uniform bit.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <boost/container/small_vector.hpp>

#include "qauth/errors.hpp"
#include "qauth/rng.hpp"

namespace qauth {

enum class Basis : std::uint8_t { Rectilinear = 0, Diagonal = 1 };

constexpr Basis conjugate(Basis b) noexcept {
    return b == Basis::Rectilinear ? Basis::Diagonal : Basis::Rectilinear;
}

constexpr std::string_view to_string(Basis b) noexcept {
    return b == Basis::Rectilinear ? "rectilinear" : "diagonal";
}

inline Basis random_basis(Rng& rng) noexcept { return static_cast<Basis>(rng.bit()); }

// Glyph used in the protocol diagrams: "-" / "|" rectilinear, "/" / "\" diagonal.
constexpr char glyph(Basis b, std::uint8_t bit) noexcept {
    if (b == Basis::Rectilinear) return bit ? '|' : '-';
    return bit ? '\\' : '/';
}

using PairId = std::uint32_t;

struct ProductState {
    Basis basis = Basis::Rectilinear;
    std::uint8_t bit = 0;

    friend bool operator==(const ProductState&, const ProductState&) = default;
};

struct EntangledHalf {
    PairId pair_id = 0;

    friend bool operator==(const EntangledHalf&, const EntangledHalf&) = default;
};

struct Photon {
    std::variant<ProductState, EntangledHalf> state;
    bool consumed = false;

    static Photon product(Basis basis, std::uint8_t bit) { return Photon{ProductState{basis, bit}, false}; }
    static Photon entangled(PairId id) { return Photon{EntangledHalf{id}, false}; }

    bool is_product() const noexcept { return std::holds_alternative<ProductState>(state); }
    bool is_entangled() const noexcept { return std::holds_alternative<EntangledHalf>(state); }
};

// Shared collapse record for every entangled pair emitted in one trial.
class PairRegistry {
public:
    struct Collapse {
        Basis basis;
        std::uint8_t bit;
    };

    PairId create() {
        entries_.push_back(Entry{});
        return static_cast<PairId>(entries_.size() - 1);
    }

    bool collapsed(PairId id) const { return entries_.at(id).collapsed; }

    Collapse collapse_of(PairId id) const {
        const Entry& e = entries_.at(id);
        return {e.basis, e.bit};
    }

    // Unmeasured -> Collapsed happens exactly once per pair.
    void collapse(PairId id, Basis basis, std::uint8_t bit) {
        Entry& e = entries_.at(id);
        if (e.collapsed) throw Error("entangled pair collapsed twice");
        e = Entry{true, basis, bit};
    }

    std::size_t size() const noexcept { return entries_.size(); }
    void clear() noexcept { entries_.clear(); }

private:
    struct Entry {
        bool collapsed = false;
        Basis basis = Basis::Rectilinear;
        std::uint8_t bit = 0;
    };
    std::vector<Entry> entries_;
};

// Photon-number distribution of the source. With max_photons = 2 (the
// default) this is the two-point law {1: p1, 2: 1 - p1}. Larger maxima
// spread the multi-photon mass uniformly over 2..max_photons.
struct PhotonSourceModel {
    double p1 = 1.0;
    int max_photons = 2;

    double p_multi() const noexcept { return 1.0 - p1; }

    void validate() const {
        if (!(p1 > 0.0 && p1 <= 1.0)) throw DomainError("p1 must lie in (0, 1]");
        if (max_photons < 1) throw DomainError("max_photons must be >= 1");
        if (max_photons == 1 && p1 != 1.0) throw DomainError("max_photons = 1 requires p1 = 1");
    }

    double probability(int n) const noexcept {
        if (n == 1) return p1;
        if (n < 2 || n > max_photons) return 0.0;
        return p_multi() / static_cast<double>(max_photons - 1);
    }

    int sample(Rng& rng) const noexcept {
        if (p1 >= 1.0 || max_photons < 2) return 1;
        if (rng.uniform() < p1) return 1;
        return 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_photons - 1)));
    }
};

enum class SignalKind : std::uint8_t { Key, Tamper };

// Photons travelling down one arm in one time slot.
using Arm = boost::container::small_vector<Photon, 2>;
// One arm's view of a full round: one Arm per stream slot.
using ArmStream = std::vector<Arm>;

struct SignalPair {
    SignalKind kind = SignalKind::Key;
    Arm alice_arm;
    Arm bob_arm;

    std::size_t alice_multiplicity() const noexcept { return alice_arm.size(); }
    std::size_t bob_multiplicity() const noexcept { return bob_arm.size(); }
};

// Measures `photon` in `basis`, applying collapse, and marks it consumed.
// Afterwards the photon's state reads Product(basis, outcome).
inline std::uint8_t measure(Photon& photon, Basis basis, PairRegistry& registry, Rng& rng) {
    if (photon.consumed) throw AlreadyConsumed();

    std::uint8_t outcome = 0;
    if (auto* p = std::get_if<ProductState>(&photon.state)) {
        outcome = p->basis == basis ? p->bit : rng.bit();
    } else {
        const PairId id = std::get<EntangledHalf>(photon.state).pair_id;
        if (!registry.collapsed(id)) {
            outcome = rng.bit();
            registry.collapse(id, basis, outcome);
        } else {
            const auto c = registry.collapse_of(id);
            outcome = c.basis == basis ? c.bit : rng.bit();
        }
    }
    photon.state = ProductState{basis, outcome};
    photon.consumed = true;
    return outcome;
}

// One emission from the trusted server. Tamper signals carry identical
// product photons on both arms; key signals carry entangled halves. Every
// photon of one key emission references the same registry entry, so any
// photon of the signal measured in the collapse basis reproduces the key bit
// (multi-photon key emissions are treated as fully correlated).
inline SignalPair emit_signal(SignalKind kind, Basis basis, std::uint8_t bit,
                              const PhotonSourceModel& source, PairRegistry& registry, Rng& rng) {
    SignalPair signal;
    signal.kind = kind;
    const int n_alice = source.sample(rng);
    const int n_bob = source.sample(rng);

    if (kind == SignalKind::Tamper) {
        const Photon p = Photon::product(basis, bit);
        signal.alice_arm.assign(static_cast<std::size_t>(n_alice), p);
        signal.bob_arm.assign(static_cast<std::size_t>(n_bob), p);
    } else {
        const Photon p = Photon::entangled(registry.create());
        signal.alice_arm.assign(static_cast<std::size_t>(n_alice), p);
        signal.bob_arm.assign(static_cast<std::size_t>(n_bob), p);
    }
    return signal;
}

// Splits `n_keep` photons off a multi-photon arm. The remaining photons
// are forwarded exactly as they were.
inline std::pair<Arm, Arm> split_arm(const Arm& arm, std::size_t n_keep) {
    if (n_keep >= arm.size()) {
        throw InsufficientPhotons("cannot keep " + std::to_string(n_keep) + " of " +
                                  std::to_string(arm.size()) + " photons and forward any");
    }
    Arm kept(arm.begin(), arm.begin() + static_cast<std::ptrdiff_t>(n_keep));
    Arm forwarded(arm.begin() + static_cast<std::ptrdiff_t>(n_keep), arm.end());
    return {std::move(kept), std::move(forwarded)};
}

}  // namespace qauth
