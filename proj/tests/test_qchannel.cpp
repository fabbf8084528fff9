#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "qauth/qchannel.hpp"

namespace qauth {
namespace {

TEST(Basis, ConjugateIsAnInvolution) {
    EXPECT_EQ(conjugate(Basis::Rectilinear), Basis::Diagonal);
    EXPECT_EQ(conjugate(Basis::Diagonal), Basis::Rectilinear);
    EXPECT_EQ(conjugate(conjugate(Basis::Diagonal)), Basis::Diagonal);
}

TEST(Measure, ProductInOwnBasisIsDeterministic) {
    PairRegistry reg;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        Photon p = Photon::product(Basis::Rectilinear, 1);
        EXPECT_EQ(measure(p, Basis::Rectilinear, reg, rng), 1);
        EXPECT_TRUE(p.consumed);
    }
}

TEST(Measure, ProductInConjugateBasisIsUniform) {
    PairRegistry reg;
    Rng rng(2);
    const int n = 100000;
    int agree = 0;
    for (int i = 0; i < n; ++i) {
        Photon p = Photon::product(Basis::Rectilinear, 1);
        agree += measure(p, Basis::Diagonal, reg, rng) == 1;
    }
    const double sigma = 0.5 / std::sqrt(n);
    EXPECT_NEAR(agree / double(n), 0.5, 4 * sigma);
}

TEST(Measure, ConsumedPhotonThrows) {
    PairRegistry reg;
    Rng rng(3);
    Photon p = Photon::product(Basis::Diagonal, 0);
    measure(p, Basis::Diagonal, reg, rng);
    EXPECT_THROW(measure(p, Basis::Diagonal, reg, rng), AlreadyConsumed);
}

TEST(Measure, CollapseIsIdempotent) {
    PairRegistry reg;
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const Basis prep = random_basis(rng);
        const Basis meas = random_basis(rng);
        Photon p = Photon::product(prep, rng.bit());
        const auto first = measure(p, meas, reg, rng);
        ASSERT_TRUE(p.is_product());
        const auto rewritten = std::get<ProductState>(p.state);
        EXPECT_EQ(rewritten, (ProductState{meas, first}));
        Photon again{rewritten, false};
        EXPECT_EQ(measure(again, meas, reg, rng), first);
    }
}

TEST(Measure, EntangledSameBasisAlwaysAgrees) {
    PairRegistry reg;
    Rng rng(5);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const PairId id = reg.create();
        Photon a = Photon::entangled(id), b = Photon::entangled(id);
        const Basis basis = random_basis(rng);
        ASSERT_EQ(measure(a, basis, reg, rng), measure(b, basis, reg, rng));
    }
}

TEST(Measure, EntangledConjugateBasisAgreesHalfTheTime) {
    PairRegistry reg;
    Rng rng(6);
    const int n = 100000;
    int agree = 0;
    for (int i = 0; i < n; ++i) {
        const PairId id = reg.create();
        Photon a = Photon::entangled(id), b = Photon::entangled(id);
        agree += measure(a, Basis::Rectilinear, reg, rng) == measure(b, Basis::Diagonal, reg, rng);
    }
    EXPECT_NEAR(agree / double(n), 0.5, 4 * 0.5 / std::sqrt(n));
}

TEST(Measure, RegistryCollapsesOnce) {
    PairRegistry reg;
    Rng rng(7);
    const PairId id = reg.create();
    EXPECT_FALSE(reg.collapsed(id));
    Photon a = Photon::entangled(id);
    const auto bit = measure(a, Basis::Diagonal, reg, rng);
    EXPECT_TRUE(reg.collapsed(id));
    EXPECT_EQ(reg.collapse_of(id).basis, Basis::Diagonal);
    EXPECT_EQ(reg.collapse_of(id).bit, bit);
    EXPECT_THROW(reg.collapse(id, Basis::Rectilinear, 0), Error);
}

TEST(Measure, InterceptResendGivesQuarterErrorRate) {
    PairRegistry reg;
    Rng rng(8);
    const int n = 200000;
    int errors = 0;
    for (int i = 0; i < n; ++i) {
        const Basis prep = random_basis(rng);
        const std::uint8_t bit = rng.bit();
        Photon sent = Photon::product(prep, bit);
        const Basis eve = random_basis(rng);
        const auto seen = measure(sent, eve, reg, rng);
        Photon resent = Photon::product(eve, seen);
        errors += measure(resent, prep, reg, rng) != bit;
    }
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    EXPECT_NEAR(errors / double(n), 0.25, 4 * sigma);
}

TEST(EmitSignal, SinglePhotonTamper) {
    PairRegistry reg;
    Rng rng(9);
    const SignalPair s = emit_signal(SignalKind::Tamper, Basis::Diagonal, 0, PhotonSourceModel{1.0, 2}, reg, rng);
    ASSERT_EQ(s.alice_multiplicity(), 1u);
    ASSERT_EQ(s.bob_multiplicity(), 1u);
    EXPECT_EQ(std::get<ProductState>(s.alice_arm[0].state), (ProductState{Basis::Diagonal, 0}));
    EXPECT_EQ(std::get<ProductState>(s.bob_arm[0].state), (ProductState{Basis::Diagonal, 0}));
    EXPECT_EQ(reg.size(), 0u);
}

TEST(EmitSignal, SinglePhotonKeySharesPairId) {
    PairRegistry reg;
    Rng rng(10);
    const SignalPair s = emit_signal(SignalKind::Key, Basis::Rectilinear, 0, PhotonSourceModel{1.0, 2}, reg, rng);
    ASSERT_EQ(s.alice_multiplicity(), 1u);
    ASSERT_EQ(s.bob_multiplicity(), 1u);
    const auto a = std::get<EntangledHalf>(s.alice_arm[0].state);
    const auto b = std::get<EntangledHalf>(s.bob_arm[0].state);
    EXPECT_EQ(a.pair_id, b.pair_id);
    EXPECT_FALSE(reg.collapsed(a.pair_id));
}

TEST(EmitSignal, TamperArmsAreIdenticalProducts) {
    PairRegistry reg;
    Rng rng(11);
    const PhotonSourceModel src{0.3, 4};
    for (int i = 0; i < 2000; ++i) {
        const Basis b = random_basis(rng);
        const std::uint8_t bit = rng.bit();
        const SignalPair s = emit_signal(SignalKind::Tamper, b, bit, src, reg, rng);
        for (const auto* arm : {&s.alice_arm, &s.bob_arm}) {
            ASSERT_GE(arm->size(), 1u);
            ASSERT_LE(arm->size(), 4u);
            for (const Photon& p : *arm) EXPECT_EQ(std::get<ProductState>(p.state), (ProductState{b, bit}));
        }
    }
}

TEST(EmitSignal, MultiplicityHistogramMatchesSource) {
    PairRegistry reg;
    Rng rng(12);
    const PhotonSourceModel src{0.5, 2};
    const int n = 1000000;
    int single = 0;
    for (int i = 0; i < n; ++i) {
        const SignalPair s = emit_signal(SignalKind::Tamper, Basis::Rectilinear, 1, src, reg, rng);
        single += s.alice_multiplicity() == 1;
    }
    EXPECT_NEAR(single / double(n), 0.5, 0.002);
}

TEST(EmitSignal, HistogramWithinFourSigmaPerBucket) {
    PairRegistry reg;
    Rng rng(13);
    const PhotonSourceModel src{0.4, 4};
    const int n = 200000;
    std::map<std::size_t, int> counts;
    for (int i = 0; i < n; ++i) {
        ++counts[emit_signal(SignalKind::Tamper, Basis::Rectilinear, 0, src, reg, rng).bob_multiplicity()];
    }
    for (int photons = 1; photons <= 4; ++photons) {
        const double p = src.probability(photons);
        const double sigma = std::sqrt(p * (1 - p) / n);
        EXPECT_NEAR(counts[photons] / double(n), p, 4 * sigma) << photons << " photons";
    }
    EXPECT_EQ(counts.count(5), 0u);
}

TEST(SplitArm, KeepsOneForwardsRestUntouched) {
    Arm arm{Photon::product(Basis::Rectilinear, 0), Photon::product(Basis::Rectilinear, 0)};
    auto [kept, forwarded] = split_arm(arm, 1);
    ASSERT_EQ(kept.size(), 1u);
    ASSERT_EQ(forwarded.size(), 1u);
    EXPECT_FALSE(forwarded[0].consumed);
    PairRegistry reg;
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
        Photon copy = forwarded[0];
        EXPECT_EQ(measure(copy, Basis::Rectilinear, reg, rng), 0);
    }
}

TEST(SplitArm, SinglePhotonCannotBeSplit) {
    Arm arm{Photon::product(Basis::Diagonal, 1)};
    EXPECT_THROW(split_arm(arm, 1), InsufficientPhotons);
}

TEST(SplitArm, ThreeKeepTwo) {
    Arm arm(3, Photon::product(Basis::Diagonal, 1));
    auto [kept, forwarded] = split_arm(arm, 2);
    EXPECT_EQ(kept.size(), 2u);
    EXPECT_EQ(forwarded.size(), 1u);
}

TEST(SplitArm, ForwardedTamperPhotonNeverErrsWhateverEveDoes) {
    PairRegistry reg;
    Rng rng(15);
    for (int i = 0; i < 10000; ++i) {
        const Basis prep = random_basis(rng);
        const std::uint8_t bit = rng.bit();
        Arm arm(2 + rng.below(3), Photon::product(prep, bit));
        auto [kept, forwarded] = split_arm(arm, arm.size() - 1);
        for (Photon& p : kept) measure(p, random_basis(rng), reg, rng);
        ASSERT_EQ(measure(forwarded[0], prep, reg, rng), bit);
    }
}

TEST(PhotonSource, Validation) {
    EXPECT_THROW((PhotonSourceModel{0.0, 2}.validate()), DomainError);
    EXPECT_THROW((PhotonSourceModel{1.2, 2}.validate()), DomainError);
    EXPECT_NO_THROW((PhotonSourceModel{1.0, 2}.validate()));
    EXPECT_DOUBLE_EQ((PhotonSourceModel{0.7, 2}.p_multi()), 0.3);
}

TEST(Rng, SubsetIsSortedAndDistinct) {
    Rng rng(16);
    for (int i = 0; i < 1000; ++i) {
        const auto s = sample_subset(20, 7, rng);
        ASSERT_EQ(s.size(), 7u);
        for (std::size_t j = 1; j < s.size(); ++j) ASSERT_LT(s[j - 1], s[j]);
        ASSERT_LT(s.back(), 20u);
    }
}

TEST(Rng, BelowIsUniform) {
    Rng rng(17);
    const int n = 300000;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) ++counts[rng.below(3)];
    for (int c : counts) EXPECT_NEAR(c / double(n), 1.0 / 3, 4 * std::sqrt((1.0 / 3) * (2.0 / 3) / n));
}

}  // namespace
}  // namespace qauth
