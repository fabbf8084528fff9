#include <cmath>

#include <gtest/gtest.h>

#include "qauth/analysis.hpp"

namespace qauth::analysis {
namespace {

// Reference values computed independently (Python fractions / float64).
constexpr double kEvade8 = 0.1001129150390625;      // 6561 / 65536
constexpr double kEvade41 = 7.542438871228123e-06;  // 0.75^41
constexpr double kForge17 = 7.62939453125e-06;      // 2^-17
constexpr double kPns16Half = 0.1180670870212488;   // 0.875^16
constexpr double kBalance = 2.409420839653209;      // ln 2 / -ln 0.75

Rational q(long long n, long long d) { return Rational(BigInt(n), BigInt(d)); }

// Enumerates every placement of d tamper slots among k + d and every
// g-subset Eve might pick, then applies `weight` to the (measured key,
// measured designated, measured tamper) counts. Independent of the closed
// forms: no binomials, just counting.
template <class Weight>
Rational enumerate(std::uint32_t k, std::uint32_t d, std::uint32_t g, std::uint32_t m, Weight weight) {
    const std::uint32_t n = k + d;
    Rational total{0};
    BigInt cases = 0;
    for (std::uint32_t tamper = 0; tamper < (1u << n); ++tamper) {
        if (static_cast<std::uint32_t>(std::popcount(tamper)) != d) continue;
        // Designated slots: the first m key slots in stream order.
        std::uint32_t designated = 0, seen = 0;
        for (std::uint32_t s = 0; s < n && seen < m; ++s) {
            if (!(tamper >> s & 1u)) {
                designated |= 1u << s;
                ++seen;
            }
        }
        for (std::uint32_t eve = 0; eve < (1u << n); ++eve) {
            if (static_cast<std::uint32_t>(std::popcount(eve)) != g) continue;
            ++cases;
            total += weight(static_cast<std::uint32_t>(std::popcount(eve & ~tamper)),
                            static_cast<std::uint32_t>(std::popcount(eve & designated)),
                            static_cast<std::uint32_t>(std::popcount(eve & tamper)));
        }
    }
    return total / Rational(cases);
}

TEST(ForgeryProb, Values) {
    EXPECT_EQ(forgery_prob(17), kForge17);
    EXPECT_EQ(forgery_prob(1), 0.5);
    EXPECT_EQ(forgery_prob(10), 1.0 / 1024);
    EXPECT_EQ(forgery_prob_exact(17).denominator(), BigInt(131072));
    EXPECT_THROW(forgery_prob(0), DomainError);
}

TEST(EvadeProb, Values) {
    EXPECT_NEAR(evade_prob(41), kEvade41, 1e-18);
    EXPECT_EQ(evade_prob(0), 1.0);
    EXPECT_EQ(evade_prob(8), kEvade8);
    EXPECT_EQ(evade_prob_exact(8).value(), q(6561, 65536));
    EXPECT_NEAR(evade_prob_exact(41).float_value(), kEvade41, 1e-18);
}

TEST(SubsetGuess, Examples) {
    EXPECT_EQ(subset_guess_success(1, 1, 1).value(), q(1, 2));
    EXPECT_EQ(subset_guess_success(2, 3, 2).value(), q(1, 10));
    EXPECT_EQ(subset_guess_success(3, 7, 6).value(), q(9, 128));
    EXPECT_EQ(subset_guess_success(3, 12, 10).value(), q(6561, 186368));
    EXPECT_EQ(subset_guess_success(2, 3, 4).value(), q(27, 80));
    const ExactProb default_scale = subset_guess_success(17, 41, 58);
    EXPECT_EQ(default_scale.value(), evade_prob_exact(41).value());
    EXPECT_EQ(default_scale.numerator().str(), "36472996377170786403");
    EXPECT_EQ(default_scale.denominator().str(), "4835703278458516698824704");
    for (std::uint32_t k = 1; k <= 5; ++k) {
        for (std::uint32_t d = 0; d <= 6; ++d) EXPECT_EQ(subset_guess_success(k, d, k + d), evade_prob_exact(d));
    }
}

TEST(SubsetGuess, DomainErrors) {
    EXPECT_THROW(subset_guess_success(3, 4, 2), DomainError);
    EXPECT_THROW(subset_guess_success(3, 4, 8), DomainError);
    EXPECT_THROW(subset_guess_success_factorial(3, 4, 8), DomainError);
}

TEST(ExactProb, LowestTermsAndFloat) {
    const ExactProb p = subset_guess_success(3, 12, 10);
    EXPECT_EQ(boost::multiprecision::gcd(p.numerator(), p.denominator()), 1);
    EXPECT_NEAR(p.float_value(), 6561.0 / 186368.0, 1e-12);
    EXPECT_EQ(p.str(), "6561/186368");
}

TEST(BruteForce, Examples) {
    EXPECT_EQ(brute_force_subset_oracle(1, 1, 1).value(), q(1, 2));
    EXPECT_EQ(brute_force_subset_oracle(1, 1, 2).value(), q(3, 4));
    EXPECT_EQ(brute_force_subset_oracle(2, 3, 5).value(), q(27, 64));
    EXPECT_THROW(brute_force_subset_oracle(11, 10, 12), TooLarge);
    EXPECT_NO_THROW(brute_force_subset_oracle(10, 10, 20));
}

TEST(BruteForce, EqualsBothClosedFormsUpToTwelveSlots) {
    std::size_t cases = 0;
    for (std::uint32_t k = 1; k <= 12; ++k) {
        for (std::uint32_t d = 0; k + d <= 12; ++d) {
            for (std::uint32_t g = k; g <= k + d; ++g) {
                const ExactProb closed = subset_guess_success(k, d, g);
                ASSERT_EQ(brute_force_subset_oracle(k, d, g), closed) << k << ' ' << d << ' ' << g;
                ASSERT_EQ(subset_guess_success_factorial(k, d, g), closed) << k << ' ' << d << ' ' << g;
                ++cases;
            }
        }
    }
    EXPECT_EQ(cases, 364u);
}

TEST(MarginalGain, SuccessiveRatioIdentity) {
    for (std::uint32_t k = 1; k <= 8; ++k) {
        for (std::uint32_t d = 1; d <= 20; ++d) {
            for (std::uint32_t g = k; g < k + d; ++g) {
                ASSERT_EQ(successive_ratio(k, d, g), marginal_gain_ratio(g, k) * kTamperSurvival) << k << ' ' << d << ' ' << g;
            }
        }
    }
}

TEST(MarginalGain, BoundaryAtFourKMinusTwo) {
    EXPECT_EQ(marginal_gain_ratio(10, 3) * kTamperSurvival, q(33, 32));
    EXPECT_EQ(marginal_gain_ratio(11, 3) * kTamperSurvival, Rational(1));
    EXPECT_EQ(g_limit(1), 2u);
    for (std::uint32_t k = 1; k <= 6; ++k) {
        EXPECT_GT(marginal_gain_ratio(g_limit(k), k) * kTamperSurvival, 1);
        EXPECT_LE(marginal_gain_ratio(g_limit(k) + 1, k) * kTamperSurvival, 1);
    }
    EXPECT_THROW(marginal_gain_ratio(1, 2), DomainError);
}

TEST(MarginalGain, StrictlyIncreasingUpToTheLimit) {
    const std::uint32_t k = 3, d = 12;
    for (std::uint32_t g = k; g < std::min(k + d, g_limit(k)); ++g) {
        EXPECT_GT(subset_guess_success(k, d, g + 1).value(), subset_guess_success(k, d, g).value()) << g;
    }
    // g = 11 -> 12 is neutral, then it falls.
    EXPECT_EQ(subset_guess_success(k, d, 12).value(), subset_guess_success(k, d, 11).value());
    EXPECT_LT(subset_guess_success(k, d, 13).value(), subset_guess_success(k, d, 12).value());
}

TEST(SubsetUndetected, MatchesEnumeration) {
    for (std::uint32_t k = 1; k <= 4; ++k) {
        for (std::uint32_t d = 0; d <= 4; ++d) {
            for (std::uint32_t g = 0; g <= k + d; ++g) {
                const Rational brute = enumerate(k, d, g, 0, [](std::uint32_t, std::uint32_t, std::uint32_t t) {
                    return rational_pow(kTamperSurvival, t);
                });
                ASSERT_EQ(subset_undetected(k, d, g).value(), brute) << k << ' ' << d << ' ' << g;
            }
        }
    }
}

TEST(SubsetJoint, MatchesEnumeration) {
    const Rational agree(3, 4), match(5, 8), half(1, 2);
    for (std::uint32_t k = 1; k <= 4; ++k) {
        for (std::uint32_t d = 0; d <= 3; ++d) {
            for (std::uint32_t m = 1; m <= k; ++m) {
                for (std::uint32_t g = 0; g <= k + d; ++g) {
                    const Rational forge = enumerate(k, d, g, m, [&](std::uint32_t, std::uint32_t a, std::uint32_t t) {
                        return rational_pow(match, a) * rational_pow(half, m - a) * rational_pow(kTamperSurvival, t);
                    });
                    ASSERT_EQ(subset_joint(k, d, g, m, match, half).value(), forge) << k << d << m << g;
                    const Rational auth = enumerate(k, d, g, m, [&](std::uint32_t, std::uint32_t a, std::uint32_t t) {
                        return rational_pow(agree, a) * rational_pow(kTamperSurvival, t);
                    });
                    ASSERT_EQ(subset_joint(k, d, g, m, agree, 1).value(), auth) << k << d << m << g;
                }
            }
        }
    }
}

TEST(SubsetJoint, ReducesToCoverage) {
    // Weight 1 per measured key slot and 0 per unmeasured one is coverage.
    for (std::uint32_t k = 1; k <= 5; ++k) {
        for (std::uint32_t d = 0; d <= 5; ++d) {
            for (std::uint32_t g = k; g <= k + d; ++g) {
                ASSERT_EQ(subset_joint(k, d, g, k, 1, 0), subset_guess_success(k, d, g));
            }
        }
    }
}

TEST(Sizing, Table) {
    struct Row {
        double D;
        SizedParameters exact;
        SizedParameters rounded;
    };
    const Row rows[] = {
        {1e-3, {10, 25}, {10, 25}},
        {1e-6, {20, 49}, {20, 49}},
        {1e-9, {30, 73}, {30, 73}},
        {std::ldexp(1.0, -17), {17, 41}, {17, 42}},
        {0.5, {1, 3}, {1, 3}},
    };
    for (const Row& r : rows) {
        EXPECT_EQ(size_parameters(r.D), r.exact) << r.D;
        EXPECT_EQ(size_parameters(r.D, SizingMode::Rounded), r.rounded) << r.D;
    }
    EXPECT_THROW(size_parameters(0.0), DomainError);
    EXPECT_THROW(size_parameters(1.0), DomainError);
    EXPECT_THROW(size_parameters(-2.0), DomainError);
}

TEST(Sizing, MinimalOverAGrid) {
    for (int e = 1; e <= 400; ++e) {
        const double D = std::pow(10.0, -e / 20.0);
        const SizedParameters s = size_parameters(D);
        ASSERT_LE(forgery_prob(s.k), D);
        ASSERT_LE(evade_prob(s.d), D);
        if (s.k > 1) {
            ASSERT_GT(forgery_prob(s.k - 1), D);
        }
        if (s.d > 0) {
            ASSERT_GT(evade_prob(s.d - 1), D);
        }
    }
    for (int k = 1; k <= 60; ++k) {
        EXPECT_EQ(size_parameters(std::ldexp(1.0, -k)).k, static_cast<std::uint32_t>(k));
    }
}

TEST(Sizing, BalanceRatio) {
    EXPECT_NEAR(balance_ratio(), kBalance, 1e-15);
    const SizedParameters big = size_parameters(1e-300);
    EXPECT_NEAR(static_cast<double>(big.d) / big.k, kBalance, 0.01);
}

TEST(Pns, Values) {
    EXPECT_EQ(pns_effective_d(41, 0.5), 20.5);
    EXPECT_EQ(pns_adjusted_d(41, 0.5), 82u);
    EXPECT_EQ(pns_effective_d(41, 1.0), 41.0);
    EXPECT_EQ(pns_adjusted_d(41, 1.0), 41u);
    EXPECT_EQ(pns_adjusted_d(10, 0.3), 34u);
    EXPECT_NEAR(pns_evade_exact(16, 0.5), kPns16Half, 1e-15);
    EXPECT_NEAR(pns_evade_approx(16, 0.5), kEvade8, 1e-15);
    EXPECT_THROW(pns_effective_d(4, 0.0), DomainError);
    EXPECT_THROW(pns_adjusted_d(4, -1.0), DomainError);
    for (std::uint32_t d = 0; d <= 50; ++d) {
        for (double p1 : {0.1, 0.25, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            const std::uint32_t a = pns_adjusted_d(d, p1);
            ASSERT_GE(pns_effective_d(a, p1), d);
            if (a > 0) {
                ASSERT_LT(pns_effective_d(a - 1, p1), d);
            }
        }
    }
}

TEST(Binomial, SmallAndLarge) {
    EXPECT_EQ(binomial(5, 2), 10);
    EXPECT_EQ(binomial(5, 6), 0);
    EXPECT_EQ(binomial(58, 41).str(), "197548686920970");
    EXPECT_EQ(factorial(20).str(), "2432902008176640000");
}

}  // namespace
}  // namespace qauth::analysis
