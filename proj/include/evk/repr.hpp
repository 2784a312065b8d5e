// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Frame-style representations of event batches: bilinear-in-time voxel grids,
// a pluggable grayscale reconstruction backend with a leaky-integrator
// baseline, and the frames-per-second activity trace of a buffered stream.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evk/core.hpp"

namespace evk {

// ---------------------------------------------------------------------------
// Voxel grids
// ---------------------------------------------------------------------------

/// B temporal bins of signed event mass over the sensor plane. Bin values
/// sum to the signed event count of the contributing batch (+1 ON, −1 OFF).
struct VoxelGrid {
    std::uint32_t bins = 0;
    SensorGeometry geometry;
    std::vector<double> values;  ///< [bin][y][x]
    std::uint64_t t_start = 0;
    std::uint64_t t_end = 0;

    double& at(std::uint32_t bin, std::uint16_t x, std::uint16_t y) {
        return values[(std::size_t(bin) * geometry.height + y) * geometry.width + x];
    }
    double at(std::uint32_t bin, std::uint16_t x, std::uint16_t y) const {
        return values[(std::size_t(bin) * geometry.height + y) * geometry.width + x];
    }

    double signed_mass() const {
        double sum = 0.0;
        for (double v : values) sum += v;
        return sum;
    }

    /// Per-pixel sum across bins; what an integrating consumer sees.
    PixelMap<double> collapsed() const {
        PixelMap<double> out(geometry, 0.0);
        for (std::uint32_t b = 0; b < bins; ++b) {
            for (std::uint16_t y = 0; y < geometry.height; ++y) {
                for (std::uint16_t x = 0; x < geometry.width; ++x) {
                    out.at(x, y) += at(b, x, y);
                }
            }
        }
        return out;
    }
};

/// Accumulates a time-ordered batch into B bins. Each event's normalized time
/// t* = (B−1)·(t − t_start)/(t_end − t_start) splits its polarity sign
/// bilinearly between the two straddling bins with weights 1 − |t* − b|.
/// A zero-span batch puts all mass in bin 0.
inline VoxelGrid voxel_grid(std::span<const Event> batch, std::uint32_t bins,
                            SensorGeometry geometry) {
    if (bins < 1) throw_error(ErrorCode::InvalidArgument, "need at least one bin");
    if (!geometry.valid()) throw_error(ErrorCode::InvalidArgument, "invalid geometry");
    if (batch.empty()) throw_error(ErrorCode::EmptyBatch, "voxel grid of an empty batch");

    VoxelGrid grid;
    grid.bins = bins;
    grid.geometry = geometry;
    grid.t_start = batch.front().t;
    grid.t_end = batch.back().t;
    grid.values.assign(std::size_t(bins) * geometry.pixel_count(), 0.0);

    const double span = static_cast<double>(grid.t_end - grid.t_start);
    const double scale = (span > 0.0 && bins > 1) ? (bins - 1) / span : 0.0;
    std::uint64_t prev_t = grid.t_start;
    for (const Event& e : batch) {
        if (e.t < prev_t) {
            throw_error(ErrorCode::NonMonotoneTimestamps, "voxel batch must be time ordered");
        }
        prev_t = e.t;
        if (!geometry.contains(e.x, e.y)) {
            throw_error(ErrorCode::InvalidArgument, "event outside sensor frame");
        }
        const double sign = e.polarity == Polarity::On ? 1.0 : -1.0;
        const double t_star = scale * static_cast<double>(e.t - grid.t_start);
        const auto lo = static_cast<std::uint32_t>(t_star);  // floor; t_star ≥ 0
        const double w_hi = t_star - lo;
        grid.at(lo, e.x, e.y) += sign * (1.0 - w_hi);
        if (w_hi > 0.0 && lo + 1 < bins) {
            grid.at(lo + 1, e.x, e.y) += sign * w_hi;
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Turns voxel grids into grayscale frames in [0,1]. Implementations may be
/// stateful across calls (video-style reconstruction); they must be
/// deterministic given their state and input.
class ReconstructionBackend {
public:
    virtual ~ReconstructionBackend() = default;
    virtual std::string_view identifier() const = 0;
    virtual PixelMap<double> run(const VoxelGrid& grid) = 0;
};

/// Baseline reconstruction: a per-pixel leaky integrator over collapsed grid
/// mass, F ← clamp(decay·F + gain·Σ_bins grid, 0, 1), starting from mid-gray.
class LeakyIntegratorBackend final : public ReconstructionBackend {
public:
    explicit LeakyIntegratorBackend(double decay_per_frame = 0.8, double gain = 0.1)
        : decay_(decay_per_frame), gain_(gain) {
        if (!(decay_ >= 0.0 && decay_ <= 1.0)) {
            throw_error(ErrorCode::InvalidArgument, "decay must be in [0,1]");
        }
        if (!std::isfinite(gain_)) {
            throw_error(ErrorCode::InvalidArgument, "gain must be finite");
        }
    }

    std::string_view identifier() const override { return "leaky-integrator"; }

    PixelMap<double> run(const VoxelGrid& grid) override {
        if (!frame_) {
            frame_.emplace(grid.geometry, 0.5);
        } else if (!(frame_->geometry() == grid.geometry)) {
            throw_error(ErrorCode::InvalidArgument, "grid geometry changed mid-stream");
        }
        const PixelMap<double> mass = grid.collapsed();
        const SensorGeometry geo = grid.geometry;
        for (std::uint16_t y = 0; y < geo.height; ++y) {
            for (std::uint16_t x = 0; x < geo.width; ++x) {
                double v = decay_ * frame_->at(x, y) + gain_ * mass.at(x, y);
                frame_->at(x, y) = std::clamp(v, 0.0, 1.0);
            }
        }
        return *frame_;
    }

    void reset() { frame_.reset(); }

private:
    double decay_;
    double gain_;
    std::optional<PixelMap<double>> frame_;
};

inline std::unique_ptr<ReconstructionBackend> leaky_integrator_backend(
    double decay_per_frame = 0.8, double gain = 0.1) {
    return std::make_unique<LeakyIntegratorBackend>(decay_per_frame, gain);
}

/// Runs a backend on one grid with output validation: the frame must match
/// the grid's geometry and stay within [0,1]. Backend exceptions surface as
/// BackendFailure.
inline PixelMap<double> reconstruct(ReconstructionBackend& backend, const VoxelGrid& grid) {
    PixelMap<double> frame(grid.geometry, 0.0);
    try {
        frame = backend.run(grid);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw_error(ErrorCode::BackendFailure,
                    std::string(backend.identifier()) + ": " + e.what());
    }
    if (!(frame.geometry() == grid.geometry)) {
        throw_error(ErrorCode::BackendFailure,
                    std::string(backend.identifier()) + " returned a mismatched frame");
    }
    for (double v : frame) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw_error(ErrorCode::BackendFailure,
                        std::string(backend.identifier()) + " returned values outside [0,1]");
        }
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Frames-per-second trace
// ---------------------------------------------------------------------------

/// How many frames (full N-event buffers) the stream emits in each second of
/// stream time. Seconds are counted from the first event.
struct FrameRateTrace {
    std::vector<std::uint64_t> frames_per_second;
    std::uint32_t display_rate_hz = 60;
    std::size_t batch_size = 0;
    std::uint32_t bins = 0;

    std::uint64_t total_frames() const {
        std::uint64_t sum = 0;
        for (std::uint64_t c : frames_per_second) sum += c;
        return sum;
    }

    bool exceeds_display_rate(std::size_t second) const {
        return frames_per_second[second] > display_rate_hz;
    }
};

/// A frame is emitted the moment the N-th event of a buffer arrives; the
/// trailing partial buffer emits nothing. B tags the trace with the grid
/// depth frames would be built at; it does not change the counts.
inline FrameRateTrace frames_per_second_trace(std::span<const Event> stream, std::size_t batch,
                                              std::uint32_t bins = 5,
                                              std::uint32_t display_rate_hz = 60) {
    if (batch < 1) throw_error(ErrorCode::InvalidArgument, "batch size must be at least 1");
    FrameRateTrace trace;
    trace.display_rate_hz = display_rate_hz;
    trace.batch_size = batch;
    trace.bins = bins;
    if (stream.empty()) return trace;

    const std::uint64_t t0 = stream.front().t;
    const std::uint64_t span = stream.back().t - t0;
    trace.frames_per_second.assign(
        static_cast<std::size_t>(span / std::uint64_t(kMicrosPerSecond)) + 1, 0);
    std::size_t filled = 0;
    for (const Event& e : stream) {
        if (++filled < batch) continue;
        filled = 0;
        const auto second = static_cast<std::size_t>((e.t - t0) / std::uint64_t(kMicrosPerSecond));
        ++trace.frames_per_second[second];
    }
    return trace;
}

/// CSV rows: second_index, frames, exceeds_display_rate.
inline std::string trace_to_csv(const FrameRateTrace& trace) {
    std::string out = "second_index,frames,exceeds_display_rate\n";
    for (std::size_t s = 0; s < trace.frames_per_second.size(); ++s) {
        out += std::to_string(s) + ',' + std::to_string(trace.frames_per_second[s]) + ',' +
               (trace.exceeds_display_rate(s) ? "true" : "false") + '\n';
    }
    return out;
}

}  // namespace evk
