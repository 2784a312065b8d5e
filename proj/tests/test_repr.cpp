// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "evk/ingest.hpp"
#include "evk/repr.hpp"
#include "test_helpers.hpp"

namespace {

using evk::Event;
using evk::Polarity;

constexpr evk::SensorGeometry kSmall{64, 48};

TEST(VoxelGrid, SingleEventLandsFullyInBinZero) {
    const std::vector<Event> batch{{5000, 7, 9, Polarity::On}};
    const auto grid = evk::voxel_grid(batch, 5, kSmall);
    EXPECT_EQ(grid.bins, 5u);
    EXPECT_EQ(grid.t_start, 5000u);
    EXPECT_EQ(grid.t_end, 5000u);
    EXPECT_DOUBLE_EQ(grid.at(0, 7, 9), 1.0);
    EXPECT_DOUBLE_EQ(grid.signed_mass(), 1.0);
    for (std::uint32_t b = 1; b < 5; ++b) EXPECT_EQ(grid.at(b, 7, 9), 0.0);
}

TEST(VoxelGrid, BilinearMidpointSplitsEvenly) {
    // span 10000 µs with 6 bins: the event at 5000 sits at t* = 2.5
    const std::vector<Event> batch{{0, 1, 1, Polarity::On},
                                   {5000, 7, 9, Polarity::On},
                                   {10000, 2, 2, Polarity::On}};
    const auto grid = evk::voxel_grid(batch, 6, kSmall);
    EXPECT_DOUBLE_EQ(grid.at(2, 7, 9), 0.5);
    EXPECT_DOUBLE_EQ(grid.at(3, 7, 9), 0.5);
    // endpoints land exactly on bins 0 and B−1 with weight 1
    EXPECT_DOUBLE_EQ(grid.at(0, 1, 1), 1.0);
    EXPECT_DOUBLE_EQ(grid.at(5, 2, 2), 1.0);
    EXPECT_DOUBLE_EQ(grid.signed_mass(), 3.0);
}

TEST(VoxelGrid, OffEventsCarryNegativeSign) {
    const std::vector<Event> batch{{0, 3, 3, Polarity::Off},
                                   {1000, 3, 3, Polarity::On},
                                   {2000, 4, 4, Polarity::Off}};
    const auto grid = evk::voxel_grid(batch, 3, kSmall);
    EXPECT_DOUBLE_EQ(grid.signed_mass(), -1.0);
    const auto collapsed = grid.collapsed();
    EXPECT_DOUBLE_EQ(collapsed.at(3, 3), 0.0);   // +1 and −1 cancel
    EXPECT_DOUBLE_EQ(collapsed.at(4, 4), -1.0);
}

TEST(VoxelGrid, SingleBinCollapsesTime) {
    auto rng = testutil::make_rng(21);
    const auto events = testutil::random_stream(rng, 5000, kSmall, 100);
    const auto grid = evk::voxel_grid(events, 1, kSmall);
    double expected = 0.0;
    for (const Event& e : events) expected += e.polarity == Polarity::On ? 1.0 : -1.0;
    EXPECT_NEAR(grid.signed_mass(), expected, 1e-9);
    // every event contributes its whole weight to the only bin
    const auto collapsed = grid.collapsed();
    for (std::uint16_t y = 0; y < kSmall.height; ++y) {
        for (std::uint16_t x = 0; x < kSmall.width; ++x) {
            ASSERT_EQ(grid.at(0, x, y), collapsed.at(x, y));
        }
    }
}

TEST(VoxelGrid, MatchesBruteForceAccumulator) {
    auto rng = testutil::make_rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const auto events = testutil::random_stream(rng, 20000, kSmall, 50);
        const std::uint32_t bins = 3 + trial % 5;
        const auto grid = evk::voxel_grid(events, bins, kSmall);
        bool weights_ok = true;
        const auto expected = testutil::oracle_voxel(events, bins, kSmall, &weights_ok);
        EXPECT_TRUE(weights_ok);
        ASSERT_EQ(grid.values.size(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            ASSERT_NEAR(grid.values[i], static_cast<double>(expected[i]), 1e-9)
                << "trial " << trial << " cell " << i;
        }
    }
}

TEST(VoxelGrid, SignedMassConservation) {
    auto rng = testutil::make_rng(909);
    for (int trial = 0; trial < 20; ++trial) {
        const auto events = testutil::random_stream(rng, 10000, kSmall, 75);
        long long signed_count = 0;
        for (const Event& e : events) signed_count += e.polarity == Polarity::On ? 1 : -1;
        const auto grid = evk::voxel_grid(events, 5, kSmall);
        EXPECT_NEAR(grid.signed_mass(), static_cast<double>(signed_count),
                    1e-6 * static_cast<double>(events.size()))
            << "trial " << trial;
    }
}

TEST(VoxelGrid, PerPixelSumsMatchSignedCounts) {
    auto rng = testutil::make_rng(910);
    const auto events = testutil::random_stream(rng, 8000, kSmall, 60);
    evk::PixelMap<double> expected(kSmall, 0.0);
    for (const Event& e : events) {
        expected.at(e.x, e.y) += e.polarity == Polarity::On ? 1.0 : -1.0;
    }
    const auto collapsed = evk::voxel_grid(events, 6, kSmall).collapsed();
    for (std::uint16_t y = 0; y < kSmall.height; ++y) {
        for (std::uint16_t x = 0; x < kSmall.width; ++x) {
            ASSERT_NEAR(collapsed.at(x, y), expected.at(x, y), 1e-9)
                << "pixel " << x << "," << y;
        }
    }
}

TEST(VoxelGrid, RejectsBadInput) {
    const std::vector<Event> ok{{0, 1, 1, Polarity::On}};
    try {
        evk::voxel_grid({}, 5, kSmall);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::EmptyBatch);
    }
    try {
        evk::voxel_grid(ok, 0, kSmall);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
    const std::vector<Event> regression{{1000, 1, 1, Polarity::On}, {500, 1, 1, Polarity::On}};
    try {
        evk::voxel_grid(regression, 5, kSmall);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::NonMonotoneTimestamps);
    }
    const std::vector<Event> outside{{0, 64, 1, Polarity::On}};
    try {
        evk::voxel_grid(outside, 5, kSmall);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
}

evk::VoxelGrid zero_grid(evk::SensorGeometry geometry, std::uint32_t bins) {
    evk::VoxelGrid grid;
    grid.bins = bins;
    grid.geometry = geometry;
    grid.values.assign(std::size_t(bins) * geometry.pixel_count(), 0.0);
    return grid;
}

TEST(LeakyIntegrator, FirstCallDecaysMidGray) {
    auto backend = evk::leaky_integrator_backend();  // decay 0.8, gain 0.1
    const auto frame = evk::reconstruct(*backend, zero_grid(kSmall, 5));
    for (double v : frame) EXPECT_DOUBLE_EQ(v, 0.4);
}

TEST(LeakyIntegrator, FrozenDynamicsStayMidGray) {
    evk::LeakyIntegratorBackend backend(1.0, 0.0);
    auto grid = zero_grid(kSmall, 3);
    grid.at(1, 5, 5) = 40.0;
    for (int i = 0; i < 4; ++i) {
        const auto frame = evk::reconstruct(backend, grid);
        for (double v : frame) ASSERT_DOUBLE_EQ(v, 0.5);
    }
}

TEST(LeakyIntegrator, UpdateArithmeticAndClamping) {
    evk::LeakyIntegratorBackend backend(0.8, 0.1);
    auto grid = zero_grid(kSmall, 2);
    grid.at(0, 5, 5) = 2.0;    // split across bins: collapses to 3.0
    grid.at(1, 5, 5) = 1.0;
    grid.at(0, 6, 6) = 50.0;   // drives the pixel into the upper clamp
    grid.at(1, 7, 7) = -50.0;  // and the lower clamp
    const auto first = backend.run(grid);
    EXPECT_DOUBLE_EQ(first.at(5, 5), 0.8 * 0.5 + 0.1 * 3.0);
    EXPECT_DOUBLE_EQ(first.at(6, 6), 1.0);
    EXPECT_DOUBLE_EQ(first.at(7, 7), 0.0);
    EXPECT_DOUBLE_EQ(first.at(10, 10), 0.4);
    const auto second = backend.run(zero_grid(kSmall, 2));
    EXPECT_DOUBLE_EQ(second.at(5, 5), 0.8 * (0.8 * 0.5 + 0.1 * 3.0));
    EXPECT_DOUBLE_EQ(second.at(6, 6), 0.8);
    EXPECT_DOUBLE_EQ(second.at(7, 7), 0.0);
}

TEST(LeakyIntegrator, ZeroDecayForgetsHistory) {
    evk::LeakyIntegratorBackend a(0.0, 0.1), b(0.0, 0.1);
    auto warm = zero_grid(kSmall, 2);
    warm.at(0, 3, 3) = 9.0;
    a.run(warm);  // histories differ before the common grid
    auto probe = zero_grid(kSmall, 2);
    probe.at(1, 8, 8) = 4.0;
    const auto fa = a.run(probe);
    const auto fb = b.run(probe);
    for (std::uint16_t y = 0; y < kSmall.height; ++y) {
        for (std::uint16_t x = 0; x < kSmall.width; ++x) {
            ASSERT_DOUBLE_EQ(fa.at(x, y), fb.at(x, y));
        }
    }
}

TEST(LeakyIntegrator, GeometryChangeMidStreamThrows) {
    evk::LeakyIntegratorBackend backend;
    backend.run(zero_grid(kSmall, 2));
    try {
        backend.run(zero_grid({32, 32}, 2));
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
    backend.reset();
    const auto frame = backend.run(zero_grid({32, 32}, 2));  // fine after reset
    EXPECT_DOUBLE_EQ(frame.at(0, 0), 0.4);
}

TEST(LeakyIntegrator, RejectsBadParameters) {
    for (const double decay : {-0.1, 1.1}) {
        try {
            evk::LeakyIntegratorBackend backend(decay, 0.1);
            FAIL() << "expected an error for decay " << decay;
        } catch (const evk::Error& e) {
            EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
        }
    }
}

TEST(Reconstruct, BrightPixelBeatsItsNeighborhood) {
    auto backend = evk::leaky_integrator_backend();
    auto grid = zero_grid(kSmall, 5);
    grid.at(2, 20, 20) = 3.0;
    const auto frame = evk::reconstruct(*backend, grid);
    double neighbor_sum = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            neighbor_sum += frame.at(static_cast<std::uint16_t>(20 + dx),
                                     static_cast<std::uint16_t>(20 + dy));
        }
    }
    EXPECT_GT(frame.at(20, 20), neighbor_sum / 8.0);
}

struct ConstantBackend final : evk::ReconstructionBackend {
    std::string_view identifier() const override { return "constant"; }
    evk::PixelMap<double> run(const evk::VoxelGrid& grid) override {
        evk::PixelMap<double> frame(grid.geometry, 0.25);
        return frame;
    }
};

struct ThrowingBackend final : evk::ReconstructionBackend {
    std::string_view identifier() const override { return "throwing"; }
    evk::PixelMap<double> run(const evk::VoxelGrid&) override {
        throw std::runtime_error("weights not loaded");
    }
};

struct WrongShapeBackend final : evk::ReconstructionBackend {
    std::string_view identifier() const override { return "wrong-shape"; }
    evk::PixelMap<double> run(const evk::VoxelGrid&) override {
        return evk::PixelMap<double>({8, 8}, 0.5);
    }
};

struct OutOfRangeBackend final : evk::ReconstructionBackend {
    std::string_view identifier() const override { return "out-of-range"; }
    evk::PixelMap<double> run(const evk::VoxelGrid& grid) override {
        return evk::PixelMap<double>(grid.geometry, 1.5);
    }
};

TEST(Reconstruct, StatelessBackendIsDeterministic) {
    ConstantBackend backend;
    const auto grid = zero_grid(kSmall, 3);
    const auto a = evk::reconstruct(backend, grid);
    const auto b = evk::reconstruct(backend, grid);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
}

TEST(Reconstruct, WrapsAndValidatesBackends) {
    const auto grid = zero_grid(kSmall, 3);
    const auto expect_backend_failure = [&](evk::ReconstructionBackend& backend,
                                            const std::string& needle) {
        try {
            evk::reconstruct(backend, grid);
            FAIL() << "expected an error from " << backend.identifier();
        } catch (const evk::Error& e) {
            EXPECT_EQ(e.code(), evk::ErrorCode::BackendFailure);
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos);
        }
    };
    ThrowingBackend throwing;
    expect_backend_failure(throwing, "weights not loaded");
    WrongShapeBackend wrong_shape;
    expect_backend_failure(wrong_shape, "wrong-shape");
    OutOfRangeBackend out_of_range;
    expect_backend_failure(out_of_range, "out-of-range");
}

std::vector<Event> uniform_events(std::size_t count, std::uint64_t gap_us,
                                  std::uint64_t t0 = 0) {
    std::vector<Event> events;
    events.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        events.push_back({t0 + i * gap_us, static_cast<std::uint16_t>(i % 64),
                          static_cast<std::uint16_t>((i / 64) % 48), Polarity::On});
    }
    return events;
}

TEST(FrameRate, UniformStreamScalesInverselyWithBufferSize) {
    // 100000 events per second for three full seconds, exactly
    const auto events = uniform_events(300000, 10);
    const auto at_5000 = evk::frames_per_second_trace(events, 5000);
    ASSERT_EQ(at_5000.frames_per_second.size(), 3u);
    for (std::uint64_t frames : at_5000.frames_per_second) EXPECT_EQ(frames, 20u);
    EXPECT_EQ(at_5000.total_frames(), 60u);

    const auto at_10000 = evk::frames_per_second_trace(events, 10000);
    ASSERT_EQ(at_10000.frames_per_second.size(), 3u);
    for (std::uint64_t frames : at_10000.frames_per_second) EXPECT_EQ(frames, 10u);
    EXPECT_EQ(at_10000.total_frames(), 30u);
}

TEST(FrameRate, TrailingPartialBufferEmitsNothing) {
    const auto events = uniform_events(113900, 8);
    const auto trace = evk::frames_per_second_trace(events, 5000);
    EXPECT_EQ(trace.total_frames(), 22u);  // floor(113900 / 5000)
    const auto singles = evk::frames_per_second_trace(events, 1);
    EXPECT_EQ(singles.total_frames(), events.size());
}

TEST(FrameRate, BurstSecondExceedsDisplayRate) {
    // quiet second, one 500 kev/s burst second, quiet second
    std::vector<Event> events = uniform_events(1000, 1000);
    const auto burst = uniform_events(500000, 2, 1000000);
    events.insert(events.end(), burst.begin(), burst.end());
    const auto tail = uniform_events(1000, 1000, 2000000);
    events.insert(events.end(), tail.begin(), tail.end());

    const auto trace = evk::frames_per_second_trace(events, 5000);
    ASSERT_EQ(trace.frames_per_second.size(), 3u);
    EXPECT_EQ(trace.frames_per_second[0], 0u);    // 1000 events fill no buffer
    EXPECT_EQ(trace.frames_per_second[1], 100u);  // carried 1000 + 500000
    EXPECT_EQ(trace.frames_per_second[2], 0u);
    EXPECT_FALSE(trace.exceeds_display_rate(0));
    EXPECT_TRUE(trace.exceeds_display_rate(1));
    EXPECT_FALSE(trace.exceeds_display_rate(2));
    EXPECT_EQ(trace.total_frames(), 100u);
}

TEST(FrameRate, CsvFormat) {
    const auto events = uniform_events(12000, 100);  // 10 kev/s for 1.2 s
    const auto trace = evk::frames_per_second_trace(events, 5000, 5, 1);
    const std::string csv = evk::trace_to_csv(trace);
    EXPECT_EQ(csv,
              "second_index,frames,exceeds_display_rate\n"
              "0,2,true\n"
              "1,0,false\n");
}

TEST(FrameRate, RejectsZeroBatchAndHandlesEmptyStream) {
    try {
        evk::frames_per_second_trace({}, 0);
        FAIL() << "expected an error";
    } catch (const evk::Error& e) {
        EXPECT_EQ(e.code(), evk::ErrorCode::InvalidArgument);
    }
    const auto trace = evk::frames_per_second_trace({}, 100);
    EXPECT_TRUE(trace.frames_per_second.empty());
    EXPECT_EQ(trace.total_frames(), 0u);
}

TEST(Reconstruct, SmallBuffersShowWeakerPerFrameStructure) {
    evk::SyntheticSpec spec;
    spec.kind = evk::SyntheticKind::TranslatingBar;
    spec.vx = 400.0;
    spec.bar_angle_deg = 90.0;
    spec.duration_s = 0.3;
    spec.seed = 5;
    const auto stream = evk::synthesize(spec);
    ASSERT_GT(stream.events.size(), 6000u);

    // per-frame structure: total deviation from the background (median) level
    const auto mean_structure = [&](std::size_t n) {
        evk::LeakyIntegratorBackend backend;
        double sum = 0.0;
        std::size_t frames = 0;
        for (std::size_t start = 0; start + n <= stream.events.size(); start += n) {
            const auto grid =
                evk::voxel_grid(std::span(stream.events.data() + start, n), 5, spec.geometry);
            const auto frame = evk::reconstruct(backend, grid);
            std::vector<double> values(frame.begin(), frame.end());
            std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
            const double median = values[values.size() / 2];
            for (double v : frame) sum += std::fabs(v - median);
            ++frames;
        }
        return sum / static_cast<double>(frames);
    };
    EXPECT_LT(mean_structure(500), 0.75 * mean_structure(4000));
}

}  // namespace
