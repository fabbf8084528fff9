#pragma once

// Seeded Monte Carlo runner. Trial i draws from Rng::for_trial(seed, i) and
// contributes only integer counts, so a report depends on the configuration
// and seed alone, never on how trials were scheduled across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qauth/adversary.hpp"
#include "qauth/analysis.hpp"
#include "qauth/errors.hpp"
#include "qauth/protocol.hpp"
#include "qauth/qchannel.hpp"
#include "qauth/rng.hpp"

namespace qauth {

enum class OutputFormat { Json, Csv };

struct ExperimentConfig {
    ProtocolParams params;
    AdversaryStrategy strategy;
    PhotonSourceModel source;
    std::uint64_t trials = 10000;
    std::uint64_t master_seed = 0;
    OutputFormat output_format = OutputFormat::Json;
    unsigned threads = 0;  // 0 = hardware concurrency; never affects results

    void validate() const {
        if (trials < 1) throw ConfigError("trials", "must be >= 1");
        params.validate();
        strategy.validate(params.k, params.d);
        try {
            source.validate();
        } catch (const DomainError& e) {
            throw ConfigError("p1", e.what());
        }
    }
};

// ---------------------------------------------------------------------------
// Config parsing

// Flat key = value settings, '#' starts a comment. Keys are ExperimentConfig
// field names; short aliases match the CLI flags.
using Settings = std::map<std::string, std::string>;

inline std::string canonical_key(const std::string& key) {
    static const std::map<std::string, std::string> aliases = {
        {"D", "target_D"},           {"threshold", "error_threshold"}, {"seed", "master_seed"},
        {"format", "output_format"}, {"forge", "attempt_forgery"},
    };
    const auto it = aliases.find(key);
    return it == aliases.end() ? key : it->second;
}

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "k",          "d",          "target_D",        "error_threshold", "m",         "key_basis",
        "max_restarts", "strategy", "g",               "knows_plaintext", "eve_basis", "eve_arm",
        "attempt_forgery", "p1",    "max_photons",     "trials",          "master_seed", "output_format",
        "threads",
    };
    return keys;
}

inline Settings parse_settings(std::istream& in) {
    Settings out;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno), "expected key = value");
        }
        out[canonical_key(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
    }
    return out;
}

inline Settings load_settings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    return parse_settings(in);
}

namespace detail {

inline std::uint64_t parse_u64(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long x = std::stoull(v, &used, 0);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a non-negative integer, got '" + v + "'");
    }
}

inline std::uint32_t parse_u32(const std::string& field, const std::string& v) {
    const std::uint64_t x = parse_u64(field, v);
    if (x > 0xFFFFFFFFull) throw ConfigError(field, "value out of range");
    return static_cast<std::uint32_t>(x);
}

inline double parse_double(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& field, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(field, "expected true or false, got '" + v + "'");
}

}  // namespace detail

// Builds a validated config. When target_D is set and k or d is not, the
// missing size comes from size_parameters(target_D).
inline ExperimentConfig resolve_config(const Settings& settings) {
    using namespace detail;
    for (const auto& [key, value] : settings) {
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
            throw ConfigError(key, "unknown setting");
        }
    }
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        const auto it = settings.find(key);
        if (it == settings.end()) return std::nullopt;
        return it->second;
    };

    ExperimentConfig c;
    ProtocolParams& p = c.params;
    if (auto v = get("target_D")) {
        p.target_D = parse_double("target_D", *v);
        if (!(*p.target_D > 0.0 && *p.target_D < 1.0)) throw ConfigError("target_D", "must lie in (0, 1)");
        const auto sized = analysis::size_parameters(*p.target_D);
        p.k = sized.k;
        p.d = sized.d;
    }
    if (auto v = get("k")) p.k = parse_u32("k", *v);
    if (auto v = get("d")) p.d = parse_u32("d", *v);
    if (auto v = get("m")) p.m = parse_u32("m", *v);
    if (auto v = get("error_threshold")) p.error_threshold = parse_double("error_threshold", *v);
    if (auto v = get("max_restarts")) p.max_restarts = parse_u32("max_restarts", *v);
    if (auto v = get("key_basis")) {
        if (*v == "rectilinear") p.key_basis = Basis::Rectilinear;
        else if (*v == "diagonal") p.key_basis = Basis::Diagonal;
        else throw ConfigError("key_basis", "expected rectilinear or diagonal");
    }

    AdversaryStrategy& s = c.strategy;
    const std::string name = get("strategy").value_or("passive");
    const auto kind = parse_attack_kind(name);
    if (!kind) {
        throw ConfigError("strategy",
                          "unknown strategy '" + name + "' (passive, intercept-resend, subset-guess, pns, oracle-locations)");
    }
    switch (*kind) {
        case AttackKind::Passive: s = AdversaryStrategy::passive(); break;
        case AttackKind::InterceptResendAll: s = AdversaryStrategy::intercept_resend_all(); break;
        case AttackKind::SubsetGuess: {
            const auto g = get("g");
            if (!g) throw ConfigError("g", "required by subset-guess");
            s = AdversaryStrategy::subset_guess(parse_u32("g", *g));
            break;
        }
        case AttackKind::PhotonNumberSplitting: s = AdversaryStrategy::photon_number_splitting(); break;
        case AttackKind::OracleLocations: s = AdversaryStrategy::oracle_locations(); break;
    }
    if (auto v = get("knows_plaintext")) s.knows_plaintext = parse_bool("knows_plaintext", *v);
    if (auto v = get("attempt_forgery")) s.attempt_forgery = parse_bool("attempt_forgery", *v);
    if (auto v = get("eve_basis")) {
        if (*v == "uniform") s.basis_choice = EveBasisChoice::Uniform;
        else if (*v == "key") s.basis_choice = EveBasisChoice::KeyBasis;
        else throw ConfigError("eve_basis", "expected uniform or key");
    }
    if (auto v = get("eve_arm")) {
        if (*v == "alice") s.placement = EvePlacement::AliceArm;
        else if (*v == "bob") s.placement = EvePlacement::BobArm;
        else if (*v == "both") s.placement = EvePlacement::BothArms;
        else throw ConfigError("eve_arm", "expected alice, bob or both");
    }

    if (auto v = get("p1")) c.source.p1 = parse_double("p1", *v);
    if (auto v = get("max_photons")) c.source.max_photons = static_cast<int>(parse_u32("max_photons", *v));
    if (auto v = get("trials")) c.trials = parse_u64("trials", *v);
    if (auto v = get("master_seed")) c.master_seed = parse_u64("master_seed", *v);
    if (auto v = get("threads")) c.threads = parse_u32("threads", *v);
    if (auto v = get("output_format")) {
        if (*v == "json") c.output_format = OutputFormat::Json;
        else if (*v == "csv") c.output_format = OutputFormat::Csv;
        else throw ConfigError("output_format", "expected json or csv");
    }

    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Statistics

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

inline constexpr double kZ95 = 1.959963984540054;

// Wilson score interval for `successes` out of `n`.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = kZ95) {
    if (n == 0) return {0.0, 1.0};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return {successes == 0 ? 0.0 : std::max(0.0, center - half), successes == n ? 1.0 : std::min(1.0, center + half)};
}

// Expected count of the rarer outcome below this means the analytic value is
// reported without a z-score.
inline constexpr double kMinExpectedEvents = 10.0;
// |z| above this counts as disagreement.
inline constexpr double kZTolerance = 4.0;

struct MetricReport {
    std::string name;
    std::uint64_t successes = 0;
    std::uint64_t samples = 0;
    double empirical_rate = 0.0;
    Interval ci95;
    std::optional<double> analytic;
    std::optional<double> z_score;
    std::optional<bool> agrees;
    bool monte_carlo_verifiable = true;
};

inline MetricReport make_metric(std::string name, std::uint64_t successes, std::uint64_t samples,
                                std::optional<double> analytic) {
    MetricReport m;
    m.name = std::move(name);
    m.successes = successes;
    m.samples = samples;
    m.empirical_rate = samples ? static_cast<double>(successes) / static_cast<double>(samples) : 0.0;
    m.ci95 = wilson_interval(successes, samples);
    m.analytic = analytic;
    if (!analytic || samples == 0) return m;

    const double p = *analytic;
    const double n = static_cast<double>(samples);
    if (p <= 0.0 || p >= 1.0) {
        m.agrees = m.empirical_rate == p;
        return m;
    }
    if (n * std::min(p, 1.0 - p) < kMinExpectedEvents) {
        m.monte_carlo_verifiable = false;
        return m;
    }
    m.z_score = (m.empirical_rate - p) / std::sqrt(p * (1.0 - p) / n);
    m.agrees = std::abs(*m.z_score) <= kZTolerance;
    return m;
}

// ---------------------------------------------------------------------------
// Closed-form expectations for a configuration

// Per-round probabilities for one configuration. Unset members have no
// closed form under these settings.
struct Forecast {
    std::optional<double> undetected;       // both tamper checks pass in a round
    std::optional<double> auth_round;       // pass and Bob accepts Alice
    std::optional<double> forge_round;      // pass and Bob accepts Eve's token
    std::optional<double> covered_first;    // first round: Eve measured all key slots and passed
    std::optional<double> alice_error;      // per tamper bit
    std::optional<double> bob_error;
    std::optional<double> key_agreement;    // final round, all k bits
    std::map<std::string, double> references;
};

inline Forecast forecast(const ExperimentConfig& c) {
    using analysis::Rational;
    const ProtocolParams& p = c.params;
    const AdversaryStrategy& s = c.strategy;
    const std::uint32_t k = p.k, d = p.d, m = p.disclosed();
    const double p1 = c.source.p1;
    const bool zero_threshold = p.error_threshold == 0.0;
    const bool uniform = s.basis_choice == EveBasisChoice::Uniform;
    const bool single_arm = s.placement != EvePlacement::BothArms;

    // Intercept-resend of one key slot: probability Alice and Bob still
    // agree, and probability Eve's bit also matches Bob's.
    const Rational ir_agree = uniform ? Rational(3, 4) : Rational(1);
    const Rational ir_eve_match = uniform ? Rational(5, 8) : Rational(1);

    Forecast f;
    double arm_error = 0.0;
    double arm_undetected = 1.0;
    std::optional<double> agree_slot;  // per key slot, when slots are independent
    std::optional<double> forge_slot;

    switch (s.kind) {
        case AttackKind::Passive:
            arm_error = 0.0;
            arm_undetected = 1.0;
            agree_slot = 1.0;
            forge_slot = 0.5;
            f.covered_first = 0.0;
            break;
        case AttackKind::InterceptResendAll:
            arm_error = 0.25;
            arm_undetected = analysis::evade_prob(d);
            agree_slot = ir_agree.convert_to<double>();
            forge_slot = ir_eve_match.convert_to<double>();
            if (single_arm && zero_threshold) f.covered_first = arm_undetected;
            break;
        case AttackKind::SubsetGuess: {
            const std::uint32_t n = k + d;
            arm_error = 0.25 * static_cast<double>(s.g) / static_cast<double>(n);
            arm_undetected = analysis::subset_undetected(k, d, s.g).float_value();
            if (single_arm && zero_threshold) {
                f.covered_first = s.g >= k ? analysis::subset_guess_success(k, d, s.g).float_value() : 0.0;
                f.auth_round = analysis::subset_joint(k, d, s.g, m, ir_agree, 1).float_value();
                f.forge_round = analysis::subset_joint(k, d, s.g, m, ir_eve_match, Rational(1, 2)).float_value();
            }
            if (single_arm && p.max_restarts == 0) {
                f.key_agreement = analysis::subset_joint(k, d, s.g, k, ir_agree, 1, 1).float_value();
            }
            break;
        }
        case AttackKind::PhotonNumberSplitting: {
            // Multi-photon tamper slots are forwarded untouched; single ones
            // are intercept-resent.
            arm_error = 0.25 * p1;
            arm_undetected = analysis::pns_evade_exact(d, p1);
            agree_slot = (1.0 - p1) + p1 * ir_agree.convert_to<double>();
            forge_slot = (1.0 - p1) + p1 * ir_eve_match.convert_to<double>();
            if (single_arm && zero_threshold) f.covered_first = arm_undetected;
            f.references["pns_evade_approx"] = analysis::pns_evade_approx(d, p1);
            f.references["pns_effective_d"] = analysis::pns_effective_d(d, p1);
            f.references["pns_adjusted_d"] = analysis::pns_adjusted_d(d, p1);
            break;
        }
        case AttackKind::OracleLocations:
            arm_error = 0.0;
            arm_undetected = 1.0;
            agree_slot = 1.0;
            forge_slot = 1.0;
            f.covered_first = 1.0;
            break;
    }

    const bool passive = s.kind == AttackKind::Passive;
    f.alice_error = (s.taps_alice() && !passive) ? arm_error : 0.0;
    f.bob_error = (s.taps_bob() && !passive) ? arm_error : 0.0;

    if (zero_threshold) {
        f.undetected = single_arm || passive ? arm_undetected : arm_undetected * arm_undetected;
    }
    if ((single_arm || passive) && zero_threshold && agree_slot) {
        f.auth_round = *f.undetected * std::pow(*agree_slot, m);
        f.forge_round = *f.undetected * std::pow(*forge_slot, m);
    }
    if ((single_arm || passive) && agree_slot) f.key_agreement = std::pow(*agree_slot, k);
    if (!s.attempt_forgery) f.forge_round = 0.0;
    if (!single_arm && !passive) f.covered_first.reset();

    f.references["evade_prob_d"] = analysis::evade_prob(d);
    f.references["forgery_prob_m"] = analysis::forgery_prob(m);
    return f;
}

// ---------------------------------------------------------------------------
// Runner

struct Tally {
    std::uint64_t trials = 0;
    std::uint64_t authenticated = 0;
    std::uint64_t detected = 0;
    std::uint64_t forged = 0;
    std::uint64_t forgery_attempts = 0;
    std::uint64_t covered_undetected = 0;
    std::uint64_t key_agreement = 0;
    std::uint64_t restarts = 0;
    std::uint64_t restart_limit = 0;
    std::uint64_t eve_key_bits = 0;
    std::uint64_t alice_errors = 0, alice_checked = 0;
    std::uint64_t bob_errors = 0, bob_checked = 0;

    void add(const TrialOutcome& o) {
        ++trials;
        authenticated += o.authenticated;
        detected += o.eavesdropping_detected;
        forged += o.eve_forged_auth;
        forgery_attempts += o.forgery_attempted;
        covered_undetected += o.eve_covered_key_undetected;
        key_agreement += o.key_agreement;
        restarts += o.restarts;
        restart_limit += o.restart_limit_exceeded;
        eve_key_bits += o.eve_key_bits_known;
        alice_errors += o.alice_tamper_errors;
        alice_checked += o.alice_tamper_checked;
        bob_errors += o.bob_tamper_errors;
        bob_checked += o.bob_tamper_checked;
    }

    Tally& operator+=(const Tally& t) {
        trials += t.trials;
        authenticated += t.authenticated;
        detected += t.detected;
        forged += t.forged;
        forgery_attempts += t.forgery_attempts;
        covered_undetected += t.covered_undetected;
        key_agreement += t.key_agreement;
        restarts += t.restarts;
        restart_limit += t.restart_limit;
        eve_key_bits += t.eve_key_bits;
        alice_errors += t.alice_errors;
        alice_checked += t.alice_checked;
        bob_errors += t.bob_errors;
        bob_checked += t.bob_checked;
        return *this;
    }
};

// Runs trials [begin, end) of `c`.
inline Tally run_trials(const ExperimentConfig& c, std::uint64_t begin, std::uint64_t end) {
    Tally t;
    for (std::uint64_t i = begin; i < end; ++i) {
        Rng rng = Rng::for_trial(c.master_seed, i);
        t.add(run_protocol(c.params, c.strategy, c.source, rng));
    }
    return t;
}

inline Tally run_all_trials(const ExperimentConfig& c) {
    unsigned threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, c.trials));
    if (threads <= 1) return run_trials(c, 0, c.trials);

    std::vector<Tally> partial(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < threads; ++w) {
        const std::uint64_t begin = c.trials * w / threads;
        const std::uint64_t end = c.trials * (w + 1) / threads;
        pool.emplace_back([&, w, begin, end] {
            try {
                partial[w] = run_trials(c, begin, end);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    Tally total;
    for (const Tally& t : partial) total += t;
    return total;
}

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<MetricReport> metrics;
    double mean_restarts = 0.0;
    std::optional<double> analytic_mean_restarts;
    double mean_eve_key_bits = 0.0;
    std::uint64_t restart_limit_exceeded = 0;
    std::map<std::string, double> references;
    std::vector<std::string> notes;

    const MetricReport& metric(const std::string& name) const {
        for (const auto& m : metrics) {
            if (m.name == name) return m;
        }
        throw Error("no metric named " + name);
    }
};

// Metric names in report order.
inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "authentication_rate",   "detection_rate",           "undetected_rate",
        "forgery_rate",          "eve_covered_key_undetected_rate", "alice_tamper_error_rate",
        "bob_tamper_error_rate", "key_agreement_rate",
    };
    return names;
}

inline ExperimentReport build_report(const ExperimentConfig& c, const Tally& t) {
    const Forecast f = forecast(c);
    const double R = c.params.max_restarts;

    // A trial authenticates in whichever round first passes, so per-round
    // probabilities scale by the chance that some round within the restart
    // budget passes, divided by the per-round pass probability.
    std::optional<double> eventually;
    std::optional<double> mean_restarts;
    if (f.undetected) {
        const double u = *f.undetected;
        eventually = u > 0.0 ? (1.0 - std::pow(1.0 - u, R + 1.0)) / u : 0.0;
        double acc = 0.0;
        for (std::uint32_t r = 1; r <= c.params.max_restarts; ++r) acc += std::pow(1.0 - u, r);
        mean_restarts = acc;
    }
    auto scaled = [&](const std::optional<double>& per_round) -> std::optional<double> {
        if (!per_round || !eventually) return std::nullopt;
        return *per_round * *eventually;
    };

    ExperimentReport r;
    r.config = c;
    r.metrics.push_back(make_metric("authentication_rate", t.authenticated, t.trials, scaled(f.auth_round)));
    r.metrics.push_back(make_metric("detection_rate", t.detected, t.trials,
                                    f.undetected ? std::optional<double>(1.0 - *f.undetected) : std::nullopt));
    r.metrics.push_back(make_metric("undetected_rate", t.trials - t.detected, t.trials, f.undetected));
    r.metrics.push_back(make_metric("forgery_rate", t.forged, t.trials, scaled(f.forge_round)));
    r.metrics.push_back(make_metric("eve_covered_key_undetected_rate", t.covered_undetected, t.trials, f.covered_first));
    r.metrics.push_back(make_metric("alice_tamper_error_rate", t.alice_errors, t.alice_checked, f.alice_error));
    r.metrics.push_back(make_metric("bob_tamper_error_rate", t.bob_errors, t.bob_checked, f.bob_error));
    r.metrics.push_back(make_metric("key_agreement_rate", t.key_agreement, t.trials, f.key_agreement));

    r.mean_restarts = static_cast<double>(t.restarts) / static_cast<double>(t.trials);
    r.analytic_mean_restarts = mean_restarts;
    r.mean_eve_key_bits = static_cast<double>(t.eve_key_bits) / static_cast<double>(t.trials);
    r.restart_limit_exceeded = t.restart_limit;
    r.references = f.references;

    if (!c.strategy.rational_for(c.params.k, c.params.d)) {
        r.notes.push_back("subset-guess g outside [k, k+d]: not a rational forgery attempt");
    }
    for (const auto& m : r.metrics) {
        if (!m.monte_carlo_verifiable) {
            r.notes.push_back(m.name + ": analytic value not Monte Carlo verifiable at this trial count");
        }
    }
    return r;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    return build_report(config, run_all_trials(config));
}

// ---------------------------------------------------------------------------
// Sweeps

inline const std::vector<std::string>& sweepable_parameters() {
    static const std::vector<std::string> names = {"g", "d", "k", "p1", "D"};
    return names;
}

struct SweepCell {
    std::string vary;
    double value = 0.0;
    ExperimentReport report;
};

// Reruns `base` once per value of `vary`. Every cell uses the base seed.
inline std::vector<SweepCell> sweep(const ExperimentConfig& base, const std::string& vary,
                                    const std::vector<double>& values) {
    const auto& allowed = sweepable_parameters();
    if (std::find(allowed.begin(), allowed.end(), vary) == allowed.end()) throw UnknownParameter(vary);

    auto as_count = [&](double v) {
        if (v < 0 || v != std::floor(v) || v > 0xFFFFFFFFp0) throw ConfigError(vary, "expected a non-negative integer");
        return static_cast<std::uint32_t>(v);
    };

    std::vector<SweepCell> cells;
    for (double v : values) {
        ExperimentConfig c = base;
        if (vary == "g") {
            c.strategy.g = as_count(v);
        } else if (vary == "d") {
            c.params.d = as_count(v);
        } else if (vary == "k") {
            c.params.k = as_count(v);
            if (c.params.m && *c.params.m > c.params.k) c.params.m.reset();
        } else if (vary == "p1") {
            c.source.p1 = v;
        } else if (vary == "D") {
            if (!(v > 0.0 && v < 1.0)) throw ConfigError("D", "must lie in (0, 1)");
            const auto sized = analysis::size_parameters(v);
            c.params.target_D = v;
            c.params.k = sized.k;
            c.params.d = sized.d;
            if (c.params.m && *c.params.m > c.params.k) c.params.m.reset();
        }
        cells.push_back({vary, v, run_experiment(c)});
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Serialization. Both layouts are frozen; see docs/report_format.md.

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["k"] = c.params.k;
    j["d"] = c.params.d;
    j["target_D"] = optional_json(c.params.target_D);
    j["error_threshold"] = c.params.error_threshold;
    j["m"] = c.params.disclosed();
    j["key_basis"] = std::string(to_string(c.params.key_basis));
    j["max_restarts"] = c.params.max_restarts;
    j["strategy"] = std::string(to_string(c.strategy.kind));
    j["g"] = c.strategy.kind == AttackKind::SubsetGuess ? nlohmann::ordered_json(c.strategy.g)
                                                         : nlohmann::ordered_json(nullptr);
    j["knows_plaintext"] = c.strategy.knows_plaintext;
    j["eve_basis"] = std::string(to_string(c.strategy.basis_choice));
    j["eve_arm"] = std::string(to_string(c.strategy.placement));
    j["attempt_forgery"] = c.strategy.attempt_forgery;
    j["p1"] = c.source.p1;
    j["max_photons"] = c.source.max_photons;
    j["trials"] = c.trials;
    j["master_seed"] = c.master_seed;
    return j;
}

inline nlohmann::ordered_json report_json(const ExperimentReport& r) {
    nlohmann::ordered_json j;
    j["schema"] = "qauth.report/1";
    j["config"] = config_json(r.config);
    j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : r.metrics) {
        nlohmann::ordered_json mj;
        mj["name"] = m.name;
        mj["successes"] = m.successes;
        mj["samples"] = m.samples;
        mj["empirical_rate"] = m.empirical_rate;
        mj["ci95"] = {m.ci95.low, m.ci95.high};
        mj["analytic"] = optional_json(m.analytic);
        mj["z_score"] = optional_json(m.z_score);
        mj["agrees"] = m.agrees ? nlohmann::ordered_json(*m.agrees) : nlohmann::ordered_json(nullptr);
        mj["monte_carlo_verifiable"] = m.monte_carlo_verifiable;
        j["metrics"].push_back(std::move(mj));
    }
    j["mean_restarts"] = {{"empirical", r.mean_restarts}, {"analytic", optional_json(r.analytic_mean_restarts)}};
    j["mean_eve_key_bits"] = r.mean_eve_key_bits;
    j["restart_limit_exceeded"] = r.restart_limit_exceeded;
    j["references"] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : r.references) j["references"][name] = value;
    j["notes"] = r.notes;
    return j;
}

inline nlohmann::ordered_json sweep_json(const std::vector<SweepCell>& cells) {
    nlohmann::ordered_json j;
    j["schema"] = "qauth.sweep/1";
    j["vary"] = cells.empty() ? std::string{} : cells.front().vary;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : cells) j["cells"].push_back({{"value", c.value}, {"report", report_json(c.report)}});
    return j;
}

inline const char* kCsvHeader =
    "metric,successes,samples,empirical_rate,ci95_low,ci95_high,analytic,z_score,agrees,monte_carlo_verifiable";

namespace detail {
inline std::string csv_number(double v) { return nlohmann::json(v).dump(); }
inline std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : std::string{}; }
}  // namespace detail

inline void write_csv_rows(std::ostream& out, const ExperimentReport& r, const std::string& prefix) {
    using detail::csv_number;
    using detail::csv_optional;
    for (const auto& m : r.metrics) {
        out << prefix << m.name << ',' << m.successes << ',' << m.samples << ',' << csv_number(m.empirical_rate) << ','
            << csv_number(m.ci95.low) << ',' << csv_number(m.ci95.high) << ',' << csv_optional(m.analytic) << ','
            << csv_optional(m.z_score) << ',' << (m.agrees ? (*m.agrees ? "true" : "false") : "") << ','
            << (m.monte_carlo_verifiable ? "true" : "false") << '\n';
    }
    const std::uint64_t total_restarts =
        static_cast<std::uint64_t>(std::llround(r.mean_restarts * static_cast<double>(r.config.trials)));
    out << prefix << "mean_restarts," << total_restarts << ',' << r.config.trials << ',' << csv_number(r.mean_restarts)
        << ",,," << csv_optional(r.analytic_mean_restarts) << ",,,true\n";
}

inline std::string report_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    write_csv_rows(out, r, "");
    return out.str();
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << "vary,value," << kCsvHeader << '\n';
    for (const auto& c : cells) write_csv_rows(out, c.report, c.vary + ',' + detail::csv_number(c.value) + ',');
    return out.str();
}

inline std::string render(const ExperimentReport& r, OutputFormat fmt) {
    return fmt == OutputFormat::Json ? report_json(r).dump(2) + "\n" : report_csv(r);
}

inline std::string render(const std::vector<SweepCell>& cells, OutputFormat fmt) {
    return fmt == OutputFormat::Json ? sweep_json(cells).dump(2) + "\n" : sweep_csv(cells);
}

}  // namespace qauth
