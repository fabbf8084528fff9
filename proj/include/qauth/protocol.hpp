#pragma once

// The three-party authentication run: trusted server (Tr), Alice, Bob.
//
//   1. Alice -> Tr   request naming Bob, encrypted under Alice's key
//   2. Tr -> Alice, Tr -> Bob   tamper spec, each under its own key
//   3-4. Tr emits k entangled key pairs and d twin-polarized tamper pairs,
//        interleaved at the spec positions; one arm to Alice, one to Bob
//   5. both parties measure: key slots in the public key basis, tamper slots
//      in the spec basis; a tamper mismatch rate above the threshold
//      restarts the round with a fresh spec and fresh photons
//   6. Alice -> Bob   the first m key bits, in the clear
//   7. Bob accepts iff they match his own bits exactly

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qauth/adversary.hpp"
#include "qauth/classical.hpp"
#include "qauth/errors.hpp"
#include "qauth/qchannel.hpp"
#include "qauth/rng.hpp"
#include "qauth/tamper_spec.hpp"

namespace qauth {

enum class MessageKind : std::uint8_t { Request = 1, TamperSpec = 2, Disclosure = 3 };

inline Bytes encode_request(Party requester, Party peer) {
    return FieldWriter{}
        .u8(static_cast<std::uint8_t>(MessageKind::Request))
        .u32(static_cast<std::uint32_t>(requester))
        .u32(static_cast<std::uint32_t>(peer))
        .finish();
}

struct Request {
    Party requester;
    Party peer;
};

inline std::optional<Request> decode_request(std::span<const std::uint8_t> data) {
    const auto fields = parse_fields(data);
    if (!fields || fields->size() != 3) return std::nullopt;
    const auto kind = as_u8((*fields)[0]);
    const auto from = as_u32((*fields)[1]);
    const auto to = as_u32((*fields)[2]);
    if (!kind || *kind != static_cast<std::uint8_t>(MessageKind::Request) || !from || !to) return std::nullopt;
    if (*from > 2 || *to > 2) return std::nullopt;
    return Request{static_cast<Party>(*from), static_cast<Party>(*to)};
}

inline Bytes encode_spec_message(std::uint32_t round, const TamperSpec& spec) {
    return FieldWriter{}
        .u8(static_cast<std::uint8_t>(MessageKind::TamperSpec))
        .u32(round)
        .field(encode_tamper_spec(spec))
        .finish();
}

// Throws SpecParseError on anything but a well-formed spec message for
// these parameters.
inline TamperSpec decode_spec_message(std::span<const std::uint8_t> data, const ProtocolParams& params) {
    const auto fields = parse_fields(data);
    if (!fields || fields->size() != 3) throw SpecParseError("malformed spec message framing");
    const auto kind = as_u8((*fields)[0]);
    if (!kind || *kind != static_cast<std::uint8_t>(MessageKind::TamperSpec)) {
        throw SpecParseError("not a tamper spec message");
    }
    if (!as_u32((*fields)[1])) throw SpecParseError("malformed round field");
    return decode_tamper_spec((*fields)[2], params.d, params.stream_length());
}

enum class Verdict : std::uint8_t { Pass, Fail };

// Pass iff errors / checked <= threshold. With nothing checked the rule is
// vacuous and passes (only possible when d = 0).
constexpr Verdict tamper_verdict(std::uint32_t errors, std::uint32_t checked, double threshold) noexcept {
    if (checked == 0) return Verdict::Pass;
    return static_cast<double>(errors) <= threshold * static_cast<double>(checked) ? Verdict::Pass : Verdict::Fail;
}

struct PartyResult {
    std::vector<std::uint8_t> key_bits;    // slot order
    std::vector<std::uint32_t> key_slots;  // stream index of each key bit
    std::uint32_t tamper_errors = 0;
    std::uint32_t tamper_checked = 0;
    Verdict verdict = Verdict::Pass;

    std::optional<std::uint8_t> bit_at(std::uint32_t slot) const {
        for (std::size_t i = 0; i < key_slots.size(); ++i) {
            if (key_slots[i] == slot) return key_bits[i];
        }
        return std::nullopt;
    }
};

// Measures a received arm stream. Multi-photon arms are read from their
// first photon only.
inline PartyResult party_measure(ArmStream& stream, const TamperSpec& spec, const ProtocolParams& params,
                                 PairRegistry& registry, Rng& rng) {
    if (stream.size() != params.stream_length()) throw DomainError("stream length does not match k + d");
    PartyResult r;
    r.key_bits.reserve(params.k);
    r.key_slots.reserve(params.k);

    std::size_t next = 0;
    for (std::uint32_t s = 0; s < stream.size(); ++s) {
        Photon& photon = stream[s].front();
        if (next < spec.positions.size() && spec.positions[next] == s) {
            const TamperEntry& e = spec.entries[next++];
            r.tamper_errors += measure(photon, e.basis, registry, rng) != e.bit;
            ++r.tamper_checked;
        } else {
            r.key_bits.push_back(measure(photon, params.key_basis, registry, rng));
            r.key_slots.push_back(s);
        }
    }
    r.verdict = tamper_verdict(r.tamper_errors, r.tamper_checked, params.error_threshold);
    return r;
}

struct Disclosure {
    std::vector<std::uint32_t> slots;
    std::vector<std::uint8_t> bits;
};

// The first m key slots and their bits.
inline Disclosure disclose(const PartyResult& alice, std::uint32_t m) {
    if (m < 1 || m > alice.key_bits.size()) throw DomainError("disclosure size must satisfy 1 <= m <= k");
    return {{alice.key_slots.begin(), alice.key_slots.begin() + m}, {alice.key_bits.begin(), alice.key_bits.begin() + m}};
}

inline Bytes encode_disclosure(const Disclosure& disc) {
    Bytes slots;
    for (std::uint32_t s : disc.slots) FieldWriter::put_u32(slots, s);
    return FieldWriter{}
        .u8(static_cast<std::uint8_t>(MessageKind::Disclosure))
        .u32(static_cast<std::uint32_t>(disc.slots.size()))
        .field(slots)
        .field(disc.bits)
        .finish();
}

inline std::optional<Disclosure> decode_disclosure(std::span<const std::uint8_t> data) {
    const auto fields = parse_fields(data);
    if (!fields || fields->size() != 4) return std::nullopt;
    const auto kind = as_u8((*fields)[0]);
    const auto m = as_u32((*fields)[1]);
    if (!kind || *kind != static_cast<std::uint8_t>(MessageKind::Disclosure) || !m) return std::nullopt;
    const FieldView slots = (*fields)[2];
    const FieldView bits = (*fields)[3];
    if (slots.size() != 4 * static_cast<std::size_t>(*m) || bits.size() != *m) return std::nullopt;
    Disclosure disc;
    for (std::uint32_t i = 0; i < *m; ++i) {
        disc.slots.push_back(*as_u32(slots.subspan(4 * i, 4)));
        if (bits[i] > 1) return std::nullopt;
    }
    disc.bits.assign(bits.begin(), bits.end());
    return disc;
}

// Exact match of every disclosed bit against Bob's bit at the same slot.
inline bool authenticate(const Disclosure& disclosure, const PartyResult& bob) {
    if (disclosure.slots.size() != disclosure.bits.size() || disclosure.slots.empty()) return false;
    std::size_t j = 0;
    for (std::size_t i = 0; i < disclosure.slots.size(); ++i) {
        // Disclosed slots are in stream order, so a forward scan suffices.
        while (j < bob.key_slots.size() && bob.key_slots[j] < disclosure.slots[i]) ++j;
        if (j == bob.key_slots.size() || bob.key_slots[j] != disclosure.slots[i]) return false;
        if (bob.key_bits[j] != disclosure.bits[i]) return false;
    }
    return true;
}

// Everything Tr retains about a round: the spec and the pair ids it
// emitted. Measurement outcomes never reach it.
struct ServerState {
    TamperSpec spec;
    std::vector<PairId> pair_ids;
};

struct RoundOutput {
    std::size_t spec_msg_alice = 0;  // transcript indices
    std::size_t spec_msg_bob = 0;
    ArmStream stream_alice;
    ArmStream stream_bob;
};

class TrustedServer {
public:
    TrustedServer(SecretKey alice, SecretKey bob) : alice_key_(alice), bob_key_(bob) {}

    // Step 1 on Tr's side: decrypt and validate Alice's request.
    std::optional<Request> accept_request(const ChannelTranscript& transcript, std::size_t index) const {
        return decode_request(transcript.receive(index, alice_key_));
    }

    // Steps 2-4. `pinned` replaces the random spec when given.
    RoundOutput server_round(const ProtocolParams& params, const PhotonSourceModel& source, ChannelTranscript& transcript,
                             std::uint64_t& nonce, PairRegistry& registry, Rng& rng,
                             const std::optional<TamperSpec>& pinned = std::nullopt) {
        state_.spec = pinned ? *pinned : build_tamper_spec(params.k, params.d, rng);
        state_.pair_ids.clear();
        state_.pair_ids.reserve(params.k);
        if (state_.spec.size() != params.d) throw DomainError("pinned spec does not have d entries");

        const Bytes msg = encode_spec_message(round_, state_.spec);
        RoundOutput out;
        out.spec_msg_alice = transcript.send(Party::Server, Party::Alice, alice_key_, nonce++, msg);
        out.spec_msg_bob = transcript.send(Party::Server, Party::Bob, bob_key_, nonce++, msg);

        const std::uint32_t n = params.stream_length();
        out.stream_alice.reserve(n);
        out.stream_bob.reserve(n);
        std::size_t next = 0;
        for (std::uint32_t s = 0; s < n; ++s) {
            SignalPair signal;
            if (next < state_.spec.positions.size() && state_.spec.positions[next] == s) {
                const TamperEntry& e = state_.spec.entries[next++];
                signal = emit_signal(SignalKind::Tamper, e.basis, e.bit, source, registry, rng);
            } else {
                signal = emit_signal(SignalKind::Key, params.key_basis, 0, source, registry, rng);
                state_.pair_ids.push_back(std::get<EntangledHalf>(signal.alice_arm.front().state).pair_id);
            }
            out.stream_alice.push_back(std::move(signal.alice_arm));
            out.stream_bob.push_back(std::move(signal.bob_arm));
        }
        ++round_;
        return out;
    }

    const ServerState& state() const noexcept { return state_; }

private:
    SecretKey alice_key_;
    SecretKey bob_key_;
    ServerState state_;
    std::uint32_t round_ = 0;
};

struct TrialOutcome {
    bool authenticated = false;
    bool eavesdropping_detected = false;
    std::uint32_t restarts = 0;
    bool restart_limit_exceeded = false;

    std::uint32_t eve_key_bits_known = 0;  // key slots Eve measured in the key basis
    bool forgery_attempted = false;
    bool eve_forged_auth = false;
    std::uint32_t forgery_guessed_bits = 0;
    // First round: Eve measured every key slot and was not detected.
    bool eve_covered_key_undetected = false;
    std::uint32_t disturbed_tamper_slots = 0;  // first round

    bool key_agreement = false;  // final round: Alice's and Bob's key vectors identical
    std::uint32_t retained_key_bits = 0;

    // Summed over all rounds.
    std::uint64_t alice_tamper_errors = 0;
    std::uint64_t alice_tamper_checked = 0;
    std::uint64_t bob_tamper_errors = 0;
    std::uint64_t bob_tamper_checked = 0;

    double alice_tamper_error_rate() const noexcept {
        return alice_tamper_checked ? static_cast<double>(alice_tamper_errors) / alice_tamper_checked : 0.0;
    }
    double bob_tamper_error_rate() const noexcept {
        return bob_tamper_checked ? static_cast<double>(bob_tamper_errors) / bob_tamper_checked : 0.0;
    }
};

struct RoundRecord {
    PartyResult alice;
    PartyResult bob;
    std::optional<EveKnowledge> eve;
};

// One complete protocol execution with its transcript and per-round state
// kept for inspection.
class ProtocolRun {
public:
    ProtocolRun(ProtocolParams params, PhotonSourceModel source, SecretKey alice_key, SecretKey bob_key)
        : params_(std::move(params)),
          source_(source),
          alice_key_(alice_key),
          bob_key_(bob_key),
          server_(alice_key, bob_key) {
        params_.validate();
        source_.validate();
    }

    // Spec used for the first round instead of a random one.
    void pin_first_spec(TamperSpec spec) { pinned_ = std::move(spec); }

    TrialOutcome execute(const AdversaryStrategy& strategy, Rng& rng) {
        strategy.validate(params_.k, params_.d);
        TrialOutcome out;
        out.retained_key_bits = params_.k - params_.disclosed();

        // Step 1.
        const std::size_t req =
            transcript_.send(Party::Alice, Party::Server, alice_key_, nonce_++, encode_request(Party::Alice, Party::Bob));
        const auto request = server_.accept_request(transcript_, req);
        if (!request || request->requester != Party::Alice || request->peer != Party::Bob) {
            throw Error("trusted server rejected the session request");
        }

        for (std::uint32_t round = 0;; ++round) {
            registry_.clear();
            std::optional<TamperSpec> pinned;
            if (round == 0) pinned = pinned_;
            RoundOutput ro = server_.server_round(params_, source_, transcript_, nonce_, registry_, rng, pinned);

            // Eve reads the transcript; plaintext only if granted.
            std::optional<TamperSpec> eve_view;
            if (strategy.knows_plaintext) {
                eve_view = decode_spec_message(transcript_.receive(ro.spec_msg_alice, alice_key_), params_);
            }
            const TamperSpec* eve_spec = eve_view ? &*eve_view : nullptr;

            const bool active = strategy.kind != AttackKind::Passive;
            std::optional<InterceptResult> on_alice, on_bob;
            if (active && strategy.taps_alice()) {
                on_alice = apply(strategy, std::move(ro.stream_alice), eve_spec, params_.key_basis, registry_, rng);
                ro.stream_alice = std::move(on_alice->forwarded);
            }
            if (active && strategy.taps_bob()) {
                on_bob = apply(strategy, std::move(ro.stream_bob), eve_spec, params_.key_basis, registry_, rng);
                ro.stream_bob = std::move(on_bob->forwarded);
            }

            // Step 5.
            const TamperSpec alice_spec = decode_spec_message(transcript_.receive(ro.spec_msg_alice, alice_key_), params_);
            const TamperSpec bob_spec = decode_spec_message(transcript_.receive(ro.spec_msg_bob, bob_key_), params_);
            RoundRecord rec;
            rec.alice = party_measure(ro.stream_alice, alice_spec, params_, registry_, rng);
            rec.bob = party_measure(ro.stream_bob, bob_spec, params_, registry_, rng);

            if (on_alice) settle(*on_alice, params_.key_basis, registry_, rng);
            if (on_bob) settle(*on_bob, params_.key_basis, registry_, rng);
            if (on_alice || on_bob) {
                EveKnowledge k = on_alice ? std::move(on_alice->knowledge) : std::move(on_bob->knowledge);
                if (on_alice && on_bob) k.merge(on_bob->knowledge);
                rec.eve = std::move(k);
            }

            out.alice_tamper_errors += rec.alice.tamper_errors;
            out.alice_tamper_checked += rec.alice.tamper_checked;
            out.bob_tamper_errors += rec.bob.tamper_errors;
            out.bob_tamper_checked += rec.bob.tamper_checked;
            out.key_agreement = rec.alice.key_bits == rec.bob.key_bits;

            const bool passed = rec.alice.verdict == Verdict::Pass && rec.bob.verdict == Verdict::Pass;
            if (rec.eve) score_eve(*rec.eve, server_.state().spec, rec.alice.key_slots, out, round == 0, passed);
            last_ = std::move(rec);

            if (!passed) {
                out.eavesdropping_detected = true;
                if (round >= params_.max_restarts) {
                    out.restart_limit_exceeded = true;
                    return out;
                }
                ++out.restarts;
                continue;
            }

            // Steps 6-7.
            const Disclosure disc = disclose(last_->alice, params_.disclosed());
            const std::size_t di = transcript_.send_clear(Party::Alice, Party::Bob, encode_disclosure(disc));
            const auto received = decode_disclosure(transcript_.receive(di, SecretKey{}));
            out.authenticated = received && authenticate(*received, last_->bob);

            if (strategy.attempt_forgery) {
                const EveKnowledge none(params_.stream_length());
                const EveKnowledge& known = last_->eve ? *last_->eve : none;
                const ForgedToken token = forge_attempt(known, disc.slots, rng);
                out.forgery_attempted = true;
                out.forgery_guessed_bits = token.guessed;
                out.eve_forged_auth = out.authenticated && authenticate(Disclosure{disc.slots, token.bits}, last_->bob);
            }
            return out;
        }
    }

    const ChannelTranscript& transcript() const noexcept { return transcript_; }
    const TrustedServer& server() const noexcept { return server_; }
    const std::optional<RoundRecord>& last_round() const noexcept { return last_; }
    const ProtocolParams& params() const noexcept { return params_; }

private:
    void score_eve(EveKnowledge& eve, const TamperSpec& spec, const std::vector<std::uint32_t>& key_slots,
                   TrialOutcome& out, bool first_round, bool passed) const {
        std::uint32_t disturbed = 0;
        std::size_t t = 0;
        for (std::uint32_t s : eve.resent_slots) {
            while (t < spec.positions.size() && spec.positions[t] < s) ++t;
            disturbed += t < spec.positions.size() && spec.positions[t] == s;
        }
        eve.disturbed_tamper_slots = disturbed;

        std::uint32_t known = 0;
        bool covered = true;
        for (std::uint32_t s : key_slots) {
            const auto& kb = eve.slot_bits[s];
            known += kb && kb->basis == params_.key_basis;
            covered = covered && std::binary_search(eve.measured_slots.begin(), eve.measured_slots.end(), s);
        }
        out.eve_key_bits_known = known;
        if (first_round) {
            out.disturbed_tamper_slots = disturbed;
            out.eve_covered_key_undetected = covered && passed;
        }
    }

    ProtocolParams params_;
    PhotonSourceModel source_;
    SecretKey alice_key_;
    SecretKey bob_key_;
    TrustedServer server_;
    ChannelTranscript transcript_;
    PairRegistry registry_;
    std::uint64_t nonce_ = 0;
    std::optional<TamperSpec> pinned_;
    std::optional<RoundRecord> last_;
};

// Runs the protocol once with fresh party keys drawn from `rng`.
inline TrialOutcome run_protocol(const ProtocolParams& params, const AdversaryStrategy& strategy,
                                 const PhotonSourceModel& source, Rng& rng) {
    const SecretKey alice{rng()};
    const SecretKey bob{rng()};
    ProtocolRun run(params, source, alice, bob);
    return run.execute(strategy, rng);
}

}  // namespace qauth
