#pragma once

// Closed-form security quantities for the protocol, computed exactly.
//
// Combinatorial factors such as C(58, 41) overflow 64-bit integers, and the
// identities checked here are exact, so everything is carried as
// arbitrary-precision rationals with the per-tamper-slot survival factor
// kept as 3/4. Doubles only appear on the way out.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "qauth/errors.hpp"

namespace qauth::analysis {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Probability that an intercept-resent tamper slot goes unnoticed.
inline const Rational kTamperSurvival{3, 4};

class ExactProb {
public:
    ExactProb() = default;
    explicit ExactProb(Rational value)
        : value_(std::move(value)), float_value_(value_.convert_to<double>()) {}

    const Rational& value() const noexcept { return value_; }
    BigInt numerator() const { return boost::multiprecision::numerator(value_); }
    BigInt denominator() const { return boost::multiprecision::denominator(value_); }
    double float_value() const noexcept { return float_value_; }
    std::string str() const { return value_.str(); }

    friend bool operator==(const ExactProb& a, const ExactProb& b) { return a.value_ == b.value_; }

private:
    Rational value_{0};
    double float_value_ = 0.0;
};

inline BigInt binomial(std::uint32_t n, std::uint32_t r) {
    if (r > n) return 0;
    if (r > n - r) r = n - r;
    BigInt c = 1;
    for (std::uint32_t i = 1; i <= r; ++i) {
        c *= n - r + i;
        c /= i;
    }
    return c;
}

inline BigInt factorial(std::uint32_t n) {
    BigInt f = 1;
    for (std::uint32_t i = 2; i <= n; ++i) f *= i;
    return f;
}

inline Rational rational_pow(const Rational& base, std::uint32_t e) {
    Rational r{1};
    for (std::uint32_t i = 0; i < e; ++i) r *= base;
    return r;
}

// Chance that k coin flips reproduce a k-bit token.
inline double forgery_prob(std::uint32_t k) {
    if (k < 1) throw DomainError("forgery_prob requires k >= 1");
    return std::ldexp(1.0, -static_cast<int>(k));
}

inline ExactProb forgery_prob_exact(std::uint32_t k) {
    if (k < 1) throw DomainError("forgery_prob requires k >= 1");
    return ExactProb(Rational(BigInt(1), BigInt(1) << k));
}

// Chance that intercept-resending all d tamper slots raises no mismatch.
inline double evade_prob(std::uint32_t d) { return std::pow(0.75, static_cast<double>(d)); }

inline ExactProb evade_prob_exact(std::uint32_t d) { return ExactProb(rational_pow(kTamperSurvival, d)); }

namespace detail {
inline void check_subset_domain(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    if (g < k || g > k + d) {
        throw DomainError("subset guess needs k <= g <= k + d (k=" + std::to_string(k) + ", d=" + std::to_string(d) +
                          ", g=" + std::to_string(g) + ")");
    }
}
}  // namespace detail

// Eve measures a uniform g-subset of the k + d slots. Success means the
// subset contains every key slot and none of the g - k tamper slots in it
// raises a mismatch:
//
//   C(d, g-k) / C(k+d, g) * (3/4)^(g-k)
inline ExactProb subset_guess_success(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    detail::check_subset_domain(k, d, g);
    const Rational cover(binomial(d, g - k), binomial(k + d, g));
    return ExactProb(cover * rational_pow(kTamperSurvival, g - k));
}

// Same quantity in factorial form: d! g! / ((k+d)! (g-k)!) * (3/4)^(g-k).
inline ExactProb subset_guess_success_factorial(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    detail::check_subset_domain(k, d, g);
    const Rational cover(factorial(d) * factorial(g), factorial(k + d) * factorial(g - k));
    return ExactProb(cover * rational_pow(kTamperSurvival, g - k));
}

inline constexpr std::uint32_t kBruteForceMaxSlots = 20;

// Exhaustive check of subset_guess_success. Key slots are fixed at
// positions [0, k) without loss of generality; every g-subset of the k + d
// slots is visited and weighted by (3/4)^(tamper slots hit) when it covers
// the key.
inline ExactProb brute_force_subset_oracle(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    const std::uint32_t n = k + d;
    if (n > kBruteForceMaxSlots) throw TooLarge("enumeration limited to k + d <= 20");
    detail::check_subset_domain(k, d, g);

    const std::uint32_t key_mask = (k == 0) ? 0u : ((1u << k) - 1u);
    BigInt subsets = 0;
    BigInt weight = 0;  // in units of 4^-d
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::uint32_t>(std::popcount(mask)) != g) continue;
        ++subsets;
        if ((mask & key_mask) != key_mask) continue;
        const auto hit = static_cast<std::uint32_t>(std::popcount(mask & ~key_mask));
        weight += boost::multiprecision::pow(BigInt(3), hit) * boost::multiprecision::pow(BigInt(4), d - hit);
    }
    return ExactProb(Rational(weight, subsets * boost::multiprecision::pow(BigInt(4), d)));
}

// Factor by which the covering term grows when Eve measures slot g + 1.
inline Rational marginal_gain_ratio(std::uint32_t g, std::uint32_t k) {
    if (k < 1 || g < k) throw DomainError("marginal gain ratio needs g >= k >= 1");
    return Rational(g + 1, g + 1 - k);
}

// Largest g at which measuring one more slot still helps:
// ((g+1)/(g+1-k)) * 3/4 > 1  <=>  g < 4k - 1.
constexpr std::uint32_t g_limit(std::uint32_t k) noexcept { return 4 * k - 2; }

// Success with one more slot over success now, exactly.
inline Rational successive_ratio(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    return subset_guess_success(k, d, g + 1).value() / subset_guess_success(k, d, g).value();
}

// Probability that no tamper slot in a uniform g-subset raises a mismatch,
// summed over the hypergeometric number of tamper slots hit.
inline ExactProb subset_undetected(std::uint32_t k, std::uint32_t d, std::uint32_t g) {
    if (g > k + d) throw DomainError("g exceeds k + d");
    Rational total{0};
    for (std::uint32_t t = 0; t <= std::min(g, d); ++t) {
        if (g - t > k) continue;
        total += Rational(binomial(d, t) * binomial(k, g - t)) * rational_pow(kTamperSurvival, t);
    }
    return ExactProb(total / Rational(binomial(k + d, g)));
}

// Joint probability over a uniform g-subset of measured slots, for m
// designated key slots: each measured designated slot contributes
// `per_measured`, each unmeasured one `per_unmeasured`, and each measured
// tamper slot `per_tamper`. Undesignated key slots contribute 1.
//
// With per_tamper = 3/4 and per_unmeasured = 1/2 this is the chance a
// forged m-bit token is accepted while Eve stays undetected; with
// per_unmeasured = 1 it is the chance Alice and Bob still agree.
inline ExactProb subset_joint(std::uint32_t k, std::uint32_t d, std::uint32_t g, std::uint32_t m,
                              const Rational& per_measured, const Rational& per_unmeasured,
                              const Rational& per_tamper = kTamperSurvival) {
    if (g > k + d || m > k) throw DomainError("subset_joint needs g <= k + d and m <= k");
    Rational total{0};
    for (std::uint32_t a = 0; a <= std::min(m, g); ++a) {
        for (std::uint32_t t = 0; t <= std::min(d, g - a); ++t) {
            const std::uint32_t b = g - a - t;
            if (b > k - m) continue;
            const Rational ways(binomial(m, a) * binomial(k - m, b) * binomial(d, t));
            total += ways * rational_pow(per_measured, a) * rational_pow(per_unmeasured, m - a) *
                     rational_pow(per_tamper, t);
        }
    }
    return ExactProb(total / Rational(binomial(k + d, g)));
}

struct SizedParameters {
    std::uint32_t k = 0;
    std::uint32_t d = 0;

    friend bool operator==(const SizedParameters&, const SizedParameters&) = default;
};

enum class SizingMode {
    Exact,    // ceil(-ln D / ln 2), ceil(ln D / ln 0.75)
    Rounded,  // ceil(-1.44 ln D), ceil(-3.48 ln D)
};

inline constexpr double kRoundedKeyFactor = 1.44;
inline constexpr double kRoundedTamperFactor = 3.48;

// Smallest k and d with 2^-k <= D and 0.75^d <= D. The exact mode corrects
// the logarithm quotient by one step either way so ceilings of values that
// should be integral (D = 2^-17) are not thrown off by rounding.
inline SizedParameters size_parameters(double D, SizingMode mode = SizingMode::Exact) {
    if (!(D > 0.0 && D < 1.0)) throw DomainError("D must lie in (0, 1)");
    const double ln_d = std::log(D);
    if (mode == SizingMode::Rounded) {
        return {static_cast<std::uint32_t>(std::ceil(-kRoundedKeyFactor * ln_d)),
                static_cast<std::uint32_t>(std::ceil(-kRoundedTamperFactor * ln_d))};
    }

    auto k = static_cast<std::uint32_t>(std::max(1.0, std::ceil(-std::log2(D))));
    while (forgery_prob(k) > D) ++k;
    while (k > 1 && forgery_prob(k - 1) <= D) --k;

    auto d = static_cast<std::uint32_t>(std::max(0.0, std::ceil(ln_d / std::log(0.75))));
    while (evade_prob(d) > D) ++d;
    while (d > 0 && evade_prob(d - 1) <= D) --d;
    return {k, d};
}

// Asymptotic tamper-to-key ratio when forgery and evasion are balanced.
inline double balance_ratio() { return std::log(2.0) / -std::log(0.75); }

// Effective tamper slots when single-photon emissions have probability p1.
inline double pns_effective_d(std::uint32_t d, double p1) {
    if (!(p1 > 0.0 && p1 <= 1.0)) throw DomainError("p1 must lie in (0, 1]");
    return p1 * static_cast<double>(d);
}

// Smallest d' with p1 * d' >= d.
inline std::uint32_t pns_adjusted_d(std::uint32_t d, double p1) {
    if (!(p1 > 0.0 && p1 <= 1.0)) throw DomainError("p1 must lie in (0, 1]");
    auto adjusted = static_cast<std::uint32_t>(std::ceil(static_cast<double>(d) / p1));
    while (pns_effective_d(adjusted, p1) < static_cast<double>(d)) ++adjusted;
    while (adjusted > 0 && pns_effective_d(adjusted - 1, p1) >= static_cast<double>(d)) --adjusted;
    return adjusted;
}

// Point approximation of evasion under photon-number splitting: 0.75^(p1 d).
inline double pns_evade_approx(std::uint32_t d, double p1) { return std::pow(0.75, pns_effective_d(d, p1)); }

// Exact expectation E[0.75^Binomial(d, p1)] = (1 - p1/4)^d.
inline double pns_evade_exact(std::uint32_t d, double p1) {
    if (!(p1 > 0.0 && p1 <= 1.0)) throw DomainError("p1 must lie in (0, 1]");
    return std::pow(1.0 - p1 / 4.0, static_cast<double>(d));
}

}  // namespace qauth::analysis
