// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "evk/hots.hpp"
#include "evk/ingest.hpp"
#include "test_helpers.hpp"

namespace {

using evk::Event;
using evk::Polarity;

constexpr evk::SensorGeometry kSmall{64, 48};

TEST(TimeSurface, FirstEventIsAUnitImpulse) {
    evk::TimeSurfaceState state(kSmall);
    const Event e{1000, 10, 10, Polarity::On};
    const auto surface = evk::time_surface(state, e, 2, 20000);
    ASSERT_EQ(surface.values.size(), 50u);  // 5×5 × two channels
    for (std::size_t i = 0; i < surface.values.size(); ++i) {
        const double expected =
            (i == evk::TimeSurface::cell_index(2, Polarity::On, 2, 2)) ? 1.0 : 0.0;
        EXPECT_EQ(surface.values[i], expected) << "cell " << i;
    }
    EXPECT_EQ(surface.at(Polarity::On, 0, 0), 1.0);
}

TEST(TimeSurface, LinearDecayMidpoint) {
    evk::TimeSurfaceState state(kSmall);
    const std::uint64_t tau = 20000;
    evk::time_surface(state, {1000, 11, 10, Polarity::On}, 2, tau);
    const auto surface = evk::time_surface(state, {1000 + tau / 2, 10, 10, Polarity::On}, 2, tau);
    EXPECT_DOUBLE_EQ(surface.at(Polarity::On, 1, 0), 0.5);
    EXPECT_DOUBLE_EQ(surface.at(Polarity::On, 0, 0), 1.0);
}

TEST(TimeSurface, FullDecayBoundaryReadsZero) {
    const std::uint64_t tau = 20000;
    {
        evk::TimeSurfaceState state(kSmall);
        evk::time_surface(state, {0, 11, 10, Polarity::On}, 2, tau);
        const auto at_tau = evk::time_surface(state, {tau, 10, 10, Polarity::On}, 2, tau);
        EXPECT_EQ(at_tau.at(Polarity::On, 1, 0), 0.0);
    }
    {
        evk::TimeSurfaceState state(kSmall);
        evk::time_surface(state, {0, 11, 10, Polarity::On}, 2, tau);
        const auto just_before =
            evk::time_surface(state, {tau - 1, 10, 10, Polarity::On}, 2, tau);
        EXPECT_GT(just_before.at(Polarity::On, 1, 0), 0.0);
    }
}

TEST(TimeSurface, PolarityChannelsAreSeparate) {
    evk::TimeSurfaceState state(kSmall);
    evk::time_surface(state, {1000, 11, 10, Polarity::Off}, 2, 20000);
    const auto surface = evk::time_surface(state, {2000, 10, 10, Polarity::On}, 2, 20000);
    EXPECT_GT(surface.at(Polarity::Off, 1, 0), 0.9);
    EXPECT_EQ(surface.at(Polarity::On, 1, 0), 0.0);
    // layout is channel-major: the OFF patch occupies the first 25 cells
    EXPECT_EQ(evk::TimeSurface::cell_index(2, Polarity::Off, 2, 3), 13u);
    EXPECT_EQ(evk::TimeSurface::cell_index(2, Polarity::On, 2, 3), 38u);
    EXPECT_EQ(surface.values[13], surface.at(Polarity::Off, 1, 0));
}

TEST(TimeSurface, OutOfFrameCellsReadZero) {
    evk::TimeSurfaceState state(kSmall);
    const auto surface = evk::time_surface(state, {1000, 0, 0, Polarity::On}, 2, 20000);
    for (std::int32_t d = -2; d < 0; ++d) {
        EXPECT_EQ(surface.at(Polarity::On, d, 0), 0.0);
        EXPECT_EQ(surface.at(Polarity::On, 0, d), 0.0);
    }
    EXPECT_EQ(surface.at(Polarity::On, 0, 0), 1.0);
}

TEST(TimeSurface, IncrementalMatchesFullHistoryRescan) {
    auto rng = testutil::make_rng(909);
    const auto events = testutil::random_stream(rng, 10000, kSmall, 120);
    const std::uint32_t rho = 3;
    const std::uint64_t tau = 25000;
    evk::TimeSurfaceState state(kSmall);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto surface = evk::time_surface(state, events[i], rho, tau);
        if (i % 10 != 0) continue;
        const auto expected = testutil::oracle_time_surface(
            std::span(events.data(), i + 1), events[i], rho, tau);
        ASSERT_EQ(surface.values.size(), expected.size());
        for (std::size_t c = 0; c < expected.size(); ++c) {
            ASSERT_NEAR(surface.values[c], expected[c], 1e-12)
                << "event " << i << " cell " << c;
        }
    }
}

TEST(TimeSurface, ValuesAlwaysInUnitInterval) {
    auto rng = testutil::make_rng(4711);
    const auto events = testutil::random_stream(rng, 3000, kSmall, 40);
    evk::TimeSurfaceState state(kSmall);
    for (const Event& e : events) {
        const auto surface = evk::time_surface(state, e, 4, 5000);
        for (double v : surface.values) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
    }
}

evk::PrototypeBank bank_with(std::uint32_t rho, std::uint64_t tau,
                             std::vector<std::vector<double>> prototypes) {
    evk::PrototypeBank bank;
    bank.rho = rho;
    bank.tau = tau;
    bank.prototypes = std::move(prototypes);
    bank.activation_counts.assign(bank.prototypes.size(), 0);
    bank.update_counts.assign(bank.prototypes.size(), 0);
    return bank;
}

TEST(Prototypes, MatchFindsExactAndBreaksTiesLow) {
    const std::size_t cells = 3 * 3 * 2;  // rho == 1
    std::vector<std::vector<double>> protos(3, std::vector<double>(cells, 0.0));
    protos[1].assign(cells, 0.5);
    protos[2].assign(cells, 1.0);
    auto bank = bank_with(1, 20000, protos);

    evk::TimeSurface surface;
    surface.rho = 1;
    surface.values.assign(cells, 0.5);
    const auto exact = evk::match_prototype(surface, bank);
    EXPECT_EQ(exact.index, 1u);
    EXPECT_EQ(exact.distance, 0.0);
    EXPECT_EQ(bank.activation_counts[1], 1u);

    surface.values.assign(cells, 0.25);  // equidistant from 0 and 1
    EXPECT_EQ(evk::match_prototype(surface, bank).index, 0u);

    surface.values.assign(8, 0.0);  // wrong shape
    try {
        evk::match_prototype(surface, bank);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
}

TEST(Prototypes, MatchAgreesWithExhaustiveScan) {
    auto rng = testutil::make_rng(77);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::size_t cells = 9 * 9 * 2;
    std::vector<std::vector<double>> protos(16, std::vector<double>(cells));
    for (auto& p : protos) {
        for (double& v : p) v = uniform(rng);
    }
    auto bank = bank_with(4, 20000, protos);
    for (int trial = 0; trial < 200; ++trial) {
        evk::TimeSurface surface;
        surface.rho = 4;
        surface.values.resize(cells);
        for (double& v : surface.values) v = uniform(rng);
        EXPECT_EQ(evk::match_prototype(surface, bank).index,
                  testutil::oracle_nearest(surface.values, bank.prototypes));
    }
}

TEST(Prototypes, MatchDependsOnlyOnTimeDifferences) {
    auto rng = testutil::make_rng(31);
    const auto events = testutil::random_stream(rng, 500, kSmall, 80);
    std::vector<Event> shifted = events;
    for (Event& e : shifted) e.t += 777777;

    auto rng2 = testutil::make_rng(32);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::size_t cells = 5 * 5 * 2;
    std::vector<std::vector<double>> protos(8, std::vector<double>(cells));
    for (auto& p : protos) {
        for (double& v : p) v = uniform(rng2);
    }
    auto bank_a = bank_with(2, 20000, protos);
    auto bank_b = bank_with(2, 20000, protos);

    evk::TimeSurfaceState sa(kSmall), sb(kSmall);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto a = evk::time_surface(sa, events[i], 2, 20000);
        const auto b = evk::time_surface(sb, shifted[i], 2, 20000);
        EXPECT_EQ(evk::match_prototype(a, bank_a).index,
                  evk::match_prototype(b, bank_b).index);
    }
}

/// Two tight clusters of surfaces: lone events (pure unit impulse) and events
/// arriving δ after a same-polarity neighbor (unit + one decayed cell).
std::vector<Event> two_cluster_stream(std::uint64_t jitter_seed, std::size_t pairs) {
    std::mt19937_64 rng(jitter_seed);
    std::uniform_int_distribution<std::uint64_t> delta(1500, 2500);
    std::vector<Event> events;
    std::uint64_t t = 1000;
    std::uint16_t x = 10, y = 10;
    for (std::size_t i = 0; i < pairs; ++i) {
        events.push_back({t, static_cast<std::uint16_t>(x - 1), y, Polarity::On});
        events.push_back({t + delta(rng), x, y, Polarity::On});
        t += 100000;  // far beyond τ, so pairs never see each other
        x = static_cast<std::uint16_t>(10 + (i % 5));
        y = static_cast<std::uint16_t>(10 + (i / 5) % 5);
    }
    return events;
}

TEST(Prototypes, TwoClusterTrainingRecoversClusterMeans) {
    evk::HotsConfig config;
    config.rho = 2;
    config.tau = 20000;
    config.prototype_count = 2;
    const std::vector<std::vector<Event>> streams{two_cluster_stream(5, 40)};
    const auto bank = evk::learn_prototypes(streams, kSmall, config);
    ASSERT_EQ(bank.size(), 2u);

    // exact two-pass reference: recompute every surface, assign to its
    // nearest final prototype, and compare prototypes with cluster centroids
    std::vector<std::vector<double>> sums(2, std::vector<double>(bank.cells(), 0.0));
    std::vector<std::size_t> counts(2, 0);
    evk::TimeSurfaceState state(kSmall);
    for (const Event& e : streams[0]) {
        const auto surface = evk::time_surface(state, e, config);
        const std::size_t j = testutil::oracle_nearest(surface.values, bank.prototypes);
        ++counts[j];
        for (std::size_t c = 0; c < surface.values.size(); ++c) {
            sums[j][c] += surface.values[c];
        }
    }
    for (std::size_t j = 0; j < 2; ++j) {
        ASSERT_GT(counts[j], 10u) << "cluster " << j << " starved";
        double sq = 0.0;
        for (std::size_t c = 0; c < sums[j].size(); ++c) {
            const double centroid = sums[j][c] / static_cast<double>(counts[j]);
            const double d = bank.prototypes[j][c] - centroid;
            sq += d * d;
        }
        EXPECT_LE(std::sqrt(sq / static_cast<double>(sums[j].size())), 0.1)
            << "cluster " << j;
    }
}

TEST(Prototypes, TrainingMatchesRunningMeanReference) {
    // with α₀ = 1 each prototype is exactly the running mean of its surfaces;
    // replicate the schedule directly from recomputed surfaces
    auto rng = testutil::make_rng(606);
    const std::vector<std::vector<Event>> streams{
        testutil::random_stream(rng, 800, kSmall, 60),
        testutil::random_stream(rng, 800, kSmall, 60, 2'000'000)};
    evk::HotsConfig config;
    config.rho = 2;
    config.prototype_count = 4;
    const auto bank = evk::learn_prototypes(streams, kSmall, config);

    std::vector<std::vector<double>> protos;
    std::vector<std::uint64_t> updates;
    for (const auto& stream : streams) {
        evk::TimeSurfaceState state(kSmall);
        for (const Event& e : stream) {
            const auto surface = evk::time_surface(state, e, config);
            if (protos.size() < config.prototype_count &&
                std::find(protos.begin(), protos.end(), surface.values) == protos.end()) {
                protos.push_back(surface.values);
                updates.push_back(1);
                continue;
            }
            const std::size_t j = testutil::oracle_nearest(surface.values, protos);
            const double alpha = 1.0 / (1.0 + static_cast<double>(updates[j]));
            for (std::size_t c = 0; c < protos[j].size(); ++c) {
                protos[j][c] += alpha * (surface.values[c] - protos[j][c]);
            }
            ++updates[j];
        }
    }
    ASSERT_EQ(bank.size(), protos.size());
    for (std::size_t j = 0; j < protos.size(); ++j) {
        EXPECT_EQ(bank.update_counts[j], updates[j]);
        for (std::size_t c = 0; c < protos[j].size(); ++c) {
            ASSERT_NEAR(bank.prototypes[j][c], protos[j][c], 1e-12)
                << "prototype " << j << " cell " << c;
        }
    }
}

TEST(Prototypes, RetrainingIsBitIdentical) {
    auto rng = testutil::make_rng(607);
    const std::vector<std::vector<Event>> streams{
        testutil::random_stream(rng, 1500, kSmall, 60)};
    evk::HotsConfig config;
    config.rho = 2;
    config.prototype_count = 8;
    const auto a = evk::learn_prototypes(streams, kSmall, config);
    const auto b = evk::learn_prototypes(streams, kSmall, config);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        EXPECT_TRUE(a.prototypes[j] == b.prototypes[j]) << "prototype " << j;
    }
}

TEST(Prototypes, TooFewDistinctSurfacesIsAnError) {
    // one pixel firing far apart in time yields one distinct surface
    std::vector<Event> events;
    for (int i = 0; i < 10; ++i) {
        events.push_back({static_cast<std::uint64_t>(i) * 100000, 5, 5, Polarity::On});
    }
    const std::vector<std::vector<Event>> streams{events};
    evk::HotsConfig config;
    config.rho = 1;
    config.prototype_count = 2;
    try {
        evk::learn_prototypes(streams, kSmall, config);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InsufficientData);
    }
}

TEST(Signature, AllMassOnTheMatchingPrototype) {
    const std::size_t cells = 3 * 3 * 2;
    std::vector<std::vector<double>> protos(2, std::vector<double>(cells, 0.0));
    protos[0][evk::TimeSurface::cell_index(1, Polarity::On, 1, 1)] = 1.0;  // unit impulse
    protos[1].assign(cells, 0.8);
    auto bank = bank_with(1, 20000, protos);

    std::vector<Event> events;
    for (int i = 0; i < 50; ++i) {
        events.push_back({static_cast<std::uint64_t>(i) * 100000,
                          static_cast<std::uint16_t>(5 + i % 3), 5, Polarity::On});
    }
    evk::HotsConfig config;
    config.rho = 1;
    const auto result = evk::signature(events, kSmall, bank, config);
    EXPECT_EQ(result.signature.histogram[0], 50u);
    EXPECT_EQ(result.signature.histogram[1], 0u);
    EXPECT_EQ(bank.activation_counts[0], 50u);
    EXPECT_GE(result.feature_seconds, 0.0);
}

TEST(Signature, ConcatenationAddsAndPartitioningIsInvisible) {
    auto rng = testutil::make_rng(1234);
    const auto events = testutil::random_stream(rng, 6000, kSmall, 50);
    evk::HotsConfig config;
    config.rho = 2;
    config.prototype_count = 8;
    const std::vector<std::vector<Event>> streams{
        std::vector<Event>(events.begin(), events.begin() + 2000)};
    auto bank = evk::learn_prototypes(streams, kSmall, config);

    const auto whole = evk::signature(events, kSmall, bank, config);

    for (const std::size_t n : {std::size_t{500}, std::size_t{5000}}) {
        evk::SignatureAccumulator acc(kSmall, bank, config);
        for (std::size_t start = 0; start < events.size(); start += n) {
            const std::size_t len = std::min(n, events.size() - start);
            acc.add(std::span(events.data() + start, len));
        }
        EXPECT_TRUE(acc.signature() == whole.signature) << "batch " << n;
        EXPECT_EQ(acc.matched_events(), events.size());
    }

    // two half-windows sum to the whole histogram
    const std::span<const Event> first(events.data(), 3000);
    const std::span<const Event> second(events.data() + 3000, 3000);
    evk::SignatureAccumulator split(kSmall, bank, config);
    split.add(first);
    const auto h1 = split.signature();
    split.add(second);
    const auto h2 = split.signature();
    for (std::size_t j = 0; j < h2.histogram.size(); ++j) {
        EXPECT_EQ(h2.histogram[j], whole.signature.histogram[j]);
        EXPECT_LE(h1.histogram[j], h2.histogram[j]);
    }
}

TEST(Signature, EmptyAfterFilteringIsAnError) {
    const std::size_t cells = 3 * 3 * 2;
    auto bank = bank_with(1, 20000, {std::vector<double>(cells, 0.0),
                                     std::vector<double>(cells, 1.0)});
    evk::HotsConfig config;
    config.rho = 1;
    evk::FilterConfig filter;
    filter.hot_pixels = {{5, 5}};
    const std::vector<Event> events{{100, 5, 5, Polarity::On},
                                    {200, 5, 5, Polarity::Off}};
    try {
        evk::signature(events, kSmall, bank, config, filter);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::EmptyWindow);
    }
}

evk::LabeledSignature labeled(std::string label, std::vector<std::uint64_t> histogram) {
    return {evk::GestureSignature{std::move(histogram)}, std::move(label)};
}

TEST(Knn, ExactNeighborMajorityAndTies) {
    const std::vector<evk::LabeledSignature> training{
        labeled("A", {10, 0, 0}), labeled("A", {9, 1, 0}), labeled("B", {0, 10, 0}),
        labeled("B", {0, 9, 1}), labeled("C", {0, 0, 10})};

    // k=1 with the query equal to a training signature
    const auto exact = evk::knn_classify(evk::GestureSignature{{0, 0, 10}}, training, 1);
    EXPECT_EQ(exact.label, "C");
    ASSERT_EQ(exact.neighbor_distances.size(), 1u);
    EXPECT_EQ(exact.neighbor_distances[0], 0.0);

    // k=3 with votes {A, A, B}
    const auto majority = evk::knn_classify(evk::GestureSignature{{8, 2, 0}}, training, 3);
    EXPECT_EQ(majority.label, "A");
    ASSERT_EQ(majority.neighbor_distances.size(), 3u);
    EXPECT_TRUE(std::is_sorted(majority.neighbor_distances.begin(),
                               majority.neighbor_distances.end()));

    // tie between one A and one B vote goes to the nearer neighbor
    const std::vector<evk::LabeledSignature> two{labeled("A", {10, 0, 0}),
                                                 labeled("B", {0, 10, 0})};
    const auto tie = evk::knn_classify(evk::GestureSignature{{6, 4, 0}}, two, 2);
    EXPECT_EQ(tie.label, "A");
}

TEST(Knn, ScalingRawCountsChangesNothing) {
    const std::vector<evk::LabeledSignature> training{
        labeled("A", {10, 0, 0}), labeled("A", {9, 1, 0}), labeled("B", {0, 10, 0}),
        labeled("B", {1, 9, 0}), labeled("C", {0, 0, 10})};
    std::vector<evk::LabeledSignature> scaled = training;
    for (auto& s : scaled) {
        for (auto& c : s.signature.histogram) c *= 7;
    }
    const evk::GestureSignature query{{5, 4, 1}};
    const evk::GestureSignature query_scaled{{15, 12, 3}};
    const auto a = evk::knn_classify(query, training, 3);
    const auto b = evk::knn_classify(query_scaled, scaled, 3);
    EXPECT_EQ(a.label, b.label);
    for (std::size_t i = 0; i < a.neighbor_distances.size(); ++i) {
        EXPECT_NEAR(a.neighbor_distances[i], b.neighbor_distances[i], 1e-12);
    }
}

TEST(Knn, AgreesWithExhaustiveOracle) {
    auto rng = testutil::make_rng(55);
    std::uniform_int_distribution<std::uint64_t> count(0, 40);
    const std::vector<std::string> labels{"up", "down", "left", "right"};
    std::vector<evk::LabeledSignature> training;
    for (int i = 0; i < 50; ++i) {
        std::vector<std::uint64_t> h(8);
        for (auto& c : h) c = count(rng);
        training.push_back(labeled(labels[i % 4], std::move(h)));
    }
    std::vector<std::pair<std::vector<double>, std::string>> oracle_training;
    for (const auto& s : training) {
        oracle_training.push_back({s.signature.normalized(), s.label});
    }
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint64_t> h(8);
        for (auto& c : h) c = count(rng);
        const evk::GestureSignature query{h};
        EXPECT_EQ(evk::knn_classify(query, training, 3).label,
                  testutil::oracle_knn(query.normalized(), oracle_training, 3));
    }
}

TEST(Knn, RefusesUndersizedTrainingSet) {
    const std::vector<evk::LabeledSignature> training{labeled("A", {1, 0})};
    for (const std::uint32_t k : {std::uint32_t{3}, std::uint32_t{0}}) {
        try {
            evk::knn_classify(evk::GestureSignature{{1, 0}}, training, k);
            FAIL() << "expected an error for k=" << k;
        } catch (const evk::Error& e) {
            EXPECT_EQ(e.code(), evk::ErrorCode::NotEnoughTrainingData);
        }
    }
}

TEST(BankFile, RoundTripIsBitExact) {
    auto rng = testutil::make_rng(66);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::size_t cells = 5 * 5 * 2;
    std::vector<std::vector<double>> protos(6, std::vector<double>(cells));
    for (auto& p : protos) {
        for (double& v : p) v = uniform(rng);
    }
    const auto bank = bank_with(2, 20000, protos);
    const auto bytes = evk::encode_prototype_bank(bank);
    EXPECT_EQ(bytes.size(), 20 + 6 * cells * 8);  // magic + K + ρ + τ, then doubles
    const auto decoded = evk::decode_prototype_bank(bytes);
    EXPECT_EQ(decoded.rho, bank.rho);
    EXPECT_EQ(decoded.tau, bank.tau);
    ASSERT_EQ(decoded.size(), bank.size());
    for (std::size_t j = 0; j < bank.size(); ++j) {
        EXPECT_TRUE(decoded.prototypes[j] == bank.prototypes[j]) << "prototype " << j;
        EXPECT_EQ(decoded.activation_counts[j], 0u);
    }
    EXPECT_TRUE(evk::encode_prototype_bank(decoded) == bytes);
}

void expect_decode_error(std::vector<std::uint8_t> bytes, evk::ErrorCode code) {
    try {
        evk::decode_prototype_bank(bytes);
        FAIL() << "expected error " << static_cast<int>(code);
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), code);
    }
}

TEST(BankFile, RejectsDamage) {
    const std::size_t cells = 3 * 3 * 2;
    const auto bank =
        bank_with(1, 20000, {std::vector<double>(cells, 0.25), std::vector<double>(cells, 0.75)});
    const auto good = evk::encode_prototype_bank(bank);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    expect_decode_error(bad_magic, evk::ErrorCode::BadMagic);

    expect_decode_error({good.begin(), good.begin() + 10}, evk::ErrorCode::Truncated);
    expect_decode_error({good.begin(), good.end() - 8}, evk::ErrorCode::Truncated);

    auto trailing = good;
    trailing.push_back(0);
    expect_decode_error(trailing, evk::ErrorCode::CountMismatch);

    auto zero_rho = good;
    zero_rho[8] = zero_rho[9] = zero_rho[10] = zero_rho[11] = 0;
    expect_decode_error(zero_rho, evk::ErrorCode::Malformed);

    auto non_finite = good;
    ASSERT_GE(non_finite.size(), std::size_t{28});
    std::fill(non_finite.begin() + 20, non_finite.begin() + 28, 0xff);  // -NaN payload
    expect_decode_error(non_finite, evk::ErrorCode::Malformed);

    try {
        evk::encode_prototype_bank(evk::PrototypeBank{});
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
}

TEST(SignatureCsv, RoundTripAndRejects) {
    std::vector<evk::LabeledSignature> rows{labeled("left", {3, 0, 7}),
                                            labeled("right", {0, 12, 5})};
    const std::string csv = evk::signatures_to_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,h0,h1,h2");
    const auto parsed = evk::signatures_from_csv(csv);
    ASSERT_EQ(parsed.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(parsed[i].label, rows[i].label);
        EXPECT_TRUE(parsed[i].signature == rows[i].signature);
    }

    const auto expect_parse_error = [](const std::string& text) {
        try {
            evk::signatures_from_csv(text);
            FAIL() << "expected an error for: " << text;
        } catch (const evk::Error& e) {
            EXPECT_EQ(e.code(), evk::ErrorCode::Parse);
        }
    };
    expect_parse_error("h0,h1\nA,1,2\n");            // header must lead with label
    expect_parse_error("label,h0,h1\nA,1\n");        // row width mismatch
    expect_parse_error("label,h0\nA,notanumber\n");  // bad count
}

TEST(AccuracyStudy, KeptFractionStartsAtOneAndDecreases) {
    // four motion directions, tiny streams: enough to exercise the sweep
    const auto make = [](double vx, double vy, std::uint64_t seed) {
        evk::SyntheticSpec spec;
        spec.kind = evk::SyntheticKind::MovingBlob;
        spec.vx = vx;
        spec.vy = vy;
        spec.blob_radius = 5;
        spec.duration_s = 0.05;
        spec.seed = seed;
        return evk::synthesize(spec);
    };
    std::vector<evk::LabeledStream> train, test;
    const std::vector<std::pair<double, double>> dirs{{600, 0}, {-600, 0}, {0, 600}, {0, -600}};
    const std::vector<std::string> names{"right", "left", "down", "up"};
    for (std::size_t d = 0; d < dirs.size(); ++d) {
        for (std::uint64_t i = 0; i < 3; ++i) {
            auto s = make(dirs[d].first, dirs[d].second, 100 + 10 * d + i);
            (i < 2 ? train : test).push_back({std::move(s.events), names[d]});
        }
    }
    evk::HotsConfig config;
    config.rho = 2;
    config.prototype_count = 8;
    std::vector<evk::FilterConfig> levels(3, evk::FilterConfig::none());
    levels[1].refractory_us = 2000;
    levels[2].refractory_us = 20000;
    const auto table =
        evk::accuracy_vs_filtering(train, test, evk::kDefaultGeometry, levels, config);
    ASSERT_EQ(table.size(), levels.size());
    EXPECT_DOUBLE_EQ(table[0].kept_fraction, 1.0);
    EXPECT_GE(table[0].kept_fraction, table[1].kept_fraction);
    EXPECT_GE(table[1].kept_fraction, table[2].kept_fraction);
    for (const auto& row : table) {
        EXPECT_GE(row.accuracy, 0.0);
        EXPECT_LE(row.accuracy, 1.0);
    }
}

}  // namespace
