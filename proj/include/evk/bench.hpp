// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// BatchAlgorithm adapters: the processing backends wrapped for the latency
// harness and the pipeline, plus two calibration dummies with known cost
// shapes (constant per batch, linear per event).

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "evk/core.hpp"
#include "evk/flow.hpp"
#include "evk/hots.hpp"
#include "evk/latency.hpp"
#include "evk/repr.hpp"

namespace evk {

/// Per-event optical flow with the rolling neighborhood state.
class FlowAlgorithm final : public BatchAlgorithm {
public:
    explicit FlowAlgorithm(SensorGeometry geometry, FlowConfig config = {})
        : config_(std::move(config)), state_(geometry) {
        config_.validate();
    }

    std::string_view name() const override { return "flow"; }
    void reset() override { state_.clear(); }
    void process(std::span<const Event> batch) override {
        last_ = flow_batch(batch, state_, config_);
    }

    const FlowBatchResult& last_result() const { return last_; }
    const FlowConfig& config() const { return config_; }

private:
    FlowConfig config_;
    FlowState state_;
    FlowBatchResult last_;
};

/// Time-surface matching against a fixed prototype bank, accumulating the
/// histogram signature; the feature stage of gesture classification.
class GestureFeatureAlgorithm final : public BatchAlgorithm {
public:
    GestureFeatureAlgorithm(SensorGeometry geometry, PrototypeBank bank, HotsConfig config = {})
        : geometry_(geometry),
          bank_(std::move(bank)),
          config_(config),
          state_(geometry) {
        config_.validate();
        histogram_.assign(bank_.size(), 0);
    }

    std::string_view name() const override { return "gesture-features"; }

    void reset() override {
        state_.clear();
        histogram_.assign(bank_.size(), 0);
    }

    void process(std::span<const Event> batch) override {
        for (const Event& e : batch) {
            const TimeSurface surface = time_surface(state_, e, config_);
            ++histogram_[detail::nearest_prototype(surface.values, bank_).index];
        }
    }

    GestureSignature signature() const { return GestureSignature{histogram_}; }

private:
    SensorGeometry geometry_;
    PrototypeBank bank_;
    HotsConfig config_;
    TimeSurfaceState state_;
    std::vector<std::uint64_t> histogram_;
};

/// Voxel-grid construction per batch.
class VoxelAlgorithm final : public BatchAlgorithm {
public:
    explicit VoxelAlgorithm(SensorGeometry geometry, std::uint32_t bins = 5)
        : geometry_(geometry), bins_(bins) {}

    std::string_view name() const override { return "voxel"; }
    void reset() override { last_.reset(); }
    void process(std::span<const Event> batch) override {
        if (batch.empty()) return;
        last_ = voxel_grid(batch, bins_, geometry_);
    }

    const std::optional<VoxelGrid>& last_grid() const { return last_; }

private:
    SensorGeometry geometry_;
    std::uint32_t bins_;
    std::optional<VoxelGrid> last_;
};

/// Voxel grid plus grayscale reconstruction per batch.
class ReconstructAlgorithm final : public BatchAlgorithm {
public:
    ReconstructAlgorithm(SensorGeometry geometry, std::uint32_t bins = 5,
                         double decay_per_frame = 0.8, double gain = 0.1)
        : geometry_(geometry),
          bins_(bins),
          decay_(decay_per_frame),
          gain_(gain),
          backend_(decay_per_frame, gain) {}

    std::string_view name() const override { return "reconstruct"; }

    void reset() override { backend_ = LeakyIntegratorBackend(decay_, gain_); }

    void process(std::span<const Event> batch) override {
        if (batch.empty()) return;
        const VoxelGrid grid = voxel_grid(batch, bins_, geometry_);
        last_frame_ = reconstruct(backend_, grid);
    }

    const std::optional<PixelMap<double>>& last_frame() const { return last_frame_; }

private:
    SensorGeometry geometry_;
    std::uint32_t bins_;
    double decay_;
    double gain_;
    LeakyIntegratorBackend backend_;
    std::optional<PixelMap<double>> last_frame_;
};

/// Fixed amount of arithmetic per batch, independent of batch size; its
/// measured λ_exec should be flat in N.
class ConstantWorkAlgorithm final : public BatchAlgorithm {
public:
    explicit ConstantWorkAlgorithm(std::size_t iterations = 20000)
        : iterations_(iterations) {}

    std::string_view name() const override { return "dummy-const"; }
    void reset() override { sink_ = 0; }

    void process(std::span<const Event>) override {
        std::uint64_t x = sink_ | 1;
        for (std::size_t i = 0; i < iterations_; ++i) {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
        }
        sink_ = x;
    }

    std::uint64_t sink() const { return sink_; }

private:
    std::size_t iterations_;
    std::uint64_t sink_ = 0;
};

/// Touches every event once; its measured λ_exec should grow linearly in N.
class LinearTouchAlgorithm final : public BatchAlgorithm {
public:
    std::string_view name() const override { return "dummy-linear"; }
    void reset() override { sink_ = 0; }

    void process(std::span<const Event> batch) override {
        std::uint64_t acc = sink_;
        for (const Event& e : batch) {
            acc += e.t ^ (std::uint64_t(e.x) << 32) ^ (std::uint64_t(e.y) << 16) ^
                   static_cast<std::uint64_t>(e.polarity);
        }
        sink_ = acc;
    }

    std::uint64_t sink() const { return sink_; }

private:
    std::uint64_t sink_ = 0;
};

/// A deterministic stand-in bank for benchmarking the feature stage when no
/// trained bank is at hand: K prototypes of uniform random cells. Matching
/// cost is identical to a trained bank's.
inline PrototypeBank make_reference_bank(const HotsConfig& config, std::uint64_t seed) {
    config.validate();
    PrototypeBank bank;
    bank.rho = config.rho;
    bank.tau = config.tau;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> cell(0.0, 1.0);
    bank.prototypes.assign(config.prototype_count, std::vector<double>(config.surface_cells()));
    for (auto& proto : bank.prototypes) {
        for (double& v : proto) v = cell(rng);
    }
    bank.activation_counts.assign(config.prototype_count, 0);
    bank.update_counts.assign(config.prototype_count, 0);
    return bank;
}

/// The evkit.hpp umbrella include and the CLI construct algorithms by name.
inline std::unique_ptr<BatchAlgorithm> make_algorithm(std::string_view name,
                                                      SensorGeometry geometry,
                                                      const FlowConfig& flow_config = {},
                                                      const HotsConfig& hots_config = {},
                                                      std::uint32_t bins = 5,
                                                      std::uint64_t seed = 0) {
    if (name == "flow") return std::make_unique<FlowAlgorithm>(geometry, flow_config);
    if (name == "gesture-features") {
        return std::make_unique<GestureFeatureAlgorithm>(
            geometry, make_reference_bank(hots_config, seed), hots_config);
    }
    if (name == "voxel") return std::make_unique<VoxelAlgorithm>(geometry, bins);
    if (name == "reconstruct") return std::make_unique<ReconstructAlgorithm>(geometry, bins);
    if (name == "dummy-const") return std::make_unique<ConstantWorkAlgorithm>();
    if (name == "dummy-linear") return std::make_unique<LinearTouchAlgorithm>();
    throw_error(ErrorCode::InvalidArgument, "unknown algorithm '" + std::string(name) + "'");
}

}  // namespace evk
