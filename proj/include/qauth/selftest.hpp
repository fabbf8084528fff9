#pragma once

// Quick consistency suite behind `qauth_sim selftest`: closed forms against
// exhaustive enumeration, the marginal-gain identity, the sizing table, and
// one small Monte Carlo cross-check.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "qauth/analysis.hpp"
#include "qauth/classical.hpp"
#include "qauth/experiment.hpp"

namespace qauth {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::string format_ratio(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r);
    return buf;
}

// Every (k, d) with k + d <= max_slots and every k <= g <= k + d.
inline CheckResult check_subset_oracle(std::uint32_t max_slots = 12) {
    using namespace analysis;
    std::size_t cases = 0;
    for (std::uint32_t k = 1; k <= max_slots; ++k) {
        for (std::uint32_t d = 0; k + d <= max_slots; ++d) {
            for (std::uint32_t g = k; g <= k + d; ++g) {
                ++cases;
                const ExactProb closed = subset_guess_success(k, d, g);
                if (!(brute_force_subset_oracle(k, d, g) == closed) ||
                    !(subset_guess_success_factorial(k, d, g) == closed)) {
                    return {"subset-oracle", false,
                            "mismatch at k=" + std::to_string(k) + " d=" + std::to_string(d) + " g=" + std::to_string(g)};
                }
            }
        }
    }
    return {"subset-oracle", true, std::to_string(cases) + " cases equal as rationals"};
}

inline CheckResult check_marginal_gain(std::uint32_t max_slots = 12, std::uint32_t max_k = 6) {
    using namespace analysis;
    const Rational three_quarters(3, 4);
    std::size_t cases = 0;
    for (std::uint32_t k = 1; k <= max_slots; ++k) {
        for (std::uint32_t d = 0; k + d <= max_slots; ++d) {
            for (std::uint32_t g = k; g + 1 <= k + d; ++g) {
                ++cases;
                if (successive_ratio(k, d, g) != marginal_gain_ratio(g, k) * three_quarters) {
                    return {"marginal-gain", false, "identity fails at k=" + std::to_string(k) + " g=" + std::to_string(g)};
                }
            }
        }
    }
    // Boundary: gain factor > 1 exactly up to g = 4k - 2, and not beyond.
    for (std::uint32_t k = 1; k <= max_k; ++k) {
        const std::uint32_t lim = g_limit(k);
        if (!(marginal_gain_ratio(lim, k) * three_quarters > 1) ||
            marginal_gain_ratio(lim + 1, k) * three_quarters > 1) {
            return {"marginal-gain", false, "limit boundary wrong at k=" + std::to_string(k)};
        }
        // Success strictly increases through the limit when the stream is long enough.
        const std::uint32_t d = 4 * k;
        for (std::uint32_t g = k; g <= lim && g + 1 <= k + d; ++g) {
            if (!(subset_guess_success(k, d, g + 1).value() > subset_guess_success(k, d, g).value())) {
                return {"marginal-gain", false, "not increasing at k=" + std::to_string(k) + " g=" + std::to_string(g)};
            }
        }
        if (lim + 2 <= k + d &&
            subset_guess_success(k, d, lim + 2).value() > subset_guess_success(k, d, lim + 1).value()) {
            return {"marginal-gain", false, "still increasing past the limit at k=" + std::to_string(k)};
        }
    }
    return {"marginal-gain", true, std::to_string(cases) + " successive ratios exact; limit 4k-2 for k=1.." +
                                       std::to_string(max_k)};
}

inline bool sizing_is_minimal(double D) {
    using namespace analysis;
    const auto s = size_parameters(D);
    const bool k_ok = forgery_prob(s.k) <= D && (s.k == 1 || forgery_prob(s.k - 1) > D);
    const bool d_ok = evade_prob(s.d) <= D && (s.d == 0 || evade_prob(s.d - 1) > D);
    return k_ok && d_ok;
}

inline CheckResult check_sizing() {
    using namespace analysis;
    const auto s = size_parameters(std::ldexp(1.0, -17));
    if (s.k != 17 || s.d != 41) {
        return {"sizing", false, "size_parameters(2^-17) = (" + std::to_string(s.k) + ", " + std::to_string(s.d) + ")"};
    }
    if (format_ratio(balance_ratio()) != "2.41") return {"sizing", false, "ratio " + format_ratio(balance_ratio())};
    for (double D : {1e-3, 1e-6, 1e-9, std::ldexp(1.0, -17)}) {
        if (!sizing_is_minimal(D)) return {"sizing", false, "not minimal at D=" + std::to_string(D)};
    }
    return {"sizing", true, "(17, 41) at D=2^-17; d/k -> " + format_ratio(balance_ratio())};
}

inline CheckResult check_pns_adjustment() {
    const auto adjusted = analysis::pns_adjusted_d(41, 0.5);
    const double effective = analysis::pns_effective_d(41, 0.5);
    const bool ok = adjusted == 82 && effective == 20.5;
    return {"pns-adjustment", ok, "pns_adjusted_d(41, 0.5) = " + std::to_string(adjusted)};
}

inline CheckResult check_keystream() {
    const std::uint64_t w = keystream_word(SecretKey{0}, 0, 0);
    return {"keystream", w == 0xE220A8397B1DCDAFULL, "first word for key 0, nonce 0"};
}

// Intercept-resend evasion at d = 8 against 0.75^8.
inline CheckResult check_intercept_resend_mc(std::uint64_t trials = 20000) {
    ExperimentConfig c;
    c.params.k = 4;
    c.params.d = 8;
    c.params.max_restarts = 0;
    c.strategy = AdversaryStrategy::intercept_resend_all();
    c.trials = trials;
    c.master_seed = 0x5e1f7e57ULL;
    const ExperimentReport r = run_experiment(c);
    const MetricReport& m = r.metric("undetected_rate");
    const bool ok = m.agrees.value_or(false);
    return {"intercept-resend-mc", ok,
            "undetected " + std::to_string(m.empirical_rate) + " vs 0.75^8, z=" + std::to_string(m.z_score.value_or(0))};
}

inline std::vector<CheckResult> run_selftest() {
    return {check_keystream(),       check_subset_oracle(), check_marginal_gain(),
            check_sizing(),          check_pns_adjustment(), check_intercept_resend_mc()};
}

}  // namespace qauth
