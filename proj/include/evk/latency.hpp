// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Accumulated-latency-per-second model for an event pipeline: camera cost,
// buffering cost and execution cost as dimensionless fractions of wall time,
// plus a measurement harness that profiles batch algorithms and sweeps the
// model over event rates and batch sizes. A total at or under 1 means the
// pipeline keeps up with the stream in real time.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evk/core.hpp"

namespace evk {

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

/// Fixed per-packet costs of getting events off the sensor, in seconds.
/// Defaults reflect a USB event camera delivering 1024-event packets:
/// 0.91 ms transfer plus 0.73 ms decode+filter, about 1.6 us per event.
struct CameraCost {
    double t_transfer = 910e-6;
    double t_decode = 500e-6;
    double t_filter = 230e-6;
    double n_packet = 1024.0;

    /// Seconds of camera-side work per event.
    double lambda_cam() const { return (t_transfer + t_decode + t_filter) / n_packet; }
};

/// Per-batch execution times measured for one algorithm at several batch
/// sizes. Samples are kept sorted by batch size; sizes are distinct.
struct ExecProfile {
    struct Sample {
        std::size_t n = 0;         ///< batch size, events
        double lambda_exec = 0.0;  ///< seconds per batch of this size
    };
    std::string algorithm;
    std::vector<Sample> samples;

    /// λ_exec at an arbitrary batch size, linearly interpolated between the
    /// neighboring measured sizes. Extrapolation is refused rather than
    /// silently trusted.
    double lambda_exec_at(std::size_t n) const {
        if (samples.empty() || n < samples.front().n || n > samples.back().n) {
            throw_error(ErrorCode::OutOfProfileRange,
                        "batch size " + std::to_string(n) + " outside measured profile");
        }
        auto hi = std::lower_bound(
            samples.begin(), samples.end(), n,
            [](const Sample& s, std::size_t value) { return s.n < value; });
        if (hi->n == n) return hi->lambda_exec;
        auto lo = hi - 1;
        const double f = static_cast<double>(n - lo->n) / static_cast<double>(hi->n - lo->n);
        return lo->lambda_exec + f * (hi->lambda_exec - lo->lambda_exec);
    }
};

/// How buffer latency accrues while a batch of N events fills at rate R.
enum class BufferModel {
    FullFill,  ///< N/R: every event charged the full fill time ("paper")
    MeanWait,  ///< N/(2R): events charged their mean waiting time ("mean-wait")
};

inline std::string_view buffer_model_name(BufferModel model) {
    return model == BufferModel::FullFill ? "paper" : "mean-wait";
}

inline BufferModel parse_buffer_model(std::string_view name) {
    if (name == "paper") return BufferModel::FullFill;
    if (name == "mean-wait") return BufferModel::MeanWait;
    throw_error(ErrorCode::InvalidArgument,
                "unknown buffer model '" + std::string(name) + "' (expected paper or mean-wait)");
}

struct LatencyBreakdown {
    std::string algorithm;
    double rate = 0.0;       ///< events per second
    std::size_t batch = 0;   ///< events per batch
    double l_cam = 0.0;
    double l_buffer = 0.0;
    double l_exec = 0.0;
    double l_total = 0.0;
    bool real_time = false;  ///< l_total ≤ 1
};

// ---------------------------------------------------------------------------
// Model evaluation (pure)
// ---------------------------------------------------------------------------

/// Seconds of camera-side latency accumulated per second at rate R.
inline double l_cam(double rate, double lambda_cam) {
    if (rate < 0.0 || lambda_cam < 0.0) {
        throw_error(ErrorCode::InvalidArgument, "l_cam needs non-negative rate and cost");
    }
    return rate * lambda_cam;
}

/// Seconds of buffering latency accumulated per second while batches of N
/// events fill at rate R.
inline double l_buffer(double rate, std::size_t batch,
                       BufferModel model = BufferModel::FullFill) {
    if (batch < 1) throw_error(ErrorCode::InvalidArgument, "batch size must be at least 1");
    if (rate <= 0.0) throw_error(ErrorCode::ZeroRate, "buffer latency undefined at zero rate");
    const double fill = static_cast<double>(batch) / rate;
    return model == BufferModel::FullFill ? fill : fill / 2.0;
}

/// Seconds of execution latency accumulated per second when batches of N
/// events each cost lambda_exec seconds and arrive at rate R.
inline double l_exec(double rate, std::size_t batch, double lambda_exec) {
    if (batch < 1) throw_error(ErrorCode::InvalidArgument, "batch size must be at least 1");
    if (rate < 0.0 || lambda_exec < 0.0) {
        throw_error(ErrorCode::InvalidArgument, "l_exec needs non-negative rate and cost");
    }
    return (rate / static_cast<double>(batch)) * lambda_exec;
}

inline LatencyBreakdown l_total(const CameraCost& cost, const ExecProfile& profile, double rate,
                                std::size_t batch, BufferModel model = BufferModel::FullFill) {
    LatencyBreakdown out;
    out.algorithm = profile.algorithm;
    out.rate = rate;
    out.batch = batch;
    out.l_cam = l_cam(rate, cost.lambda_cam());
    out.l_buffer = l_buffer(rate, batch, model);
    out.l_exec = l_exec(rate, batch, profile.lambda_exec_at(batch));
    out.l_total = out.l_cam + out.l_buffer + out.l_exec;
    out.real_time = out.l_total <= 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Measurement harness
// ---------------------------------------------------------------------------

/// A consumer of event batches with resettable internal state. Implemented by
/// every processing backend that can sit at the end of the pipeline.
class BatchAlgorithm {
public:
    virtual ~BatchAlgorithm() = default;

    virtual std::string_view name() const = 0;

    /// Drop all internal state accumulated from previous batches.
    virtual void reset() = 0;

    virtual void process(std::span<const Event> batch) = 0;

    /// Whether a trailing batch smaller than the configured size is useful to
    /// this algorithm. Defaults to yes.
    virtual bool accepts_partial_batches() const { return true; }
};

/// Times `algorithm` on consecutive batches cut from `stream`, one profile
/// sample per requested batch size. For each size the algorithm is reset and
/// the whole stream is replayed in full batches: the first `warmup` batches
/// are untimed, every following batch is timed individually with a monotonic
/// clock, and the median is recorded. Replaying the same stream at every size
/// keeps the samples comparable — each one is dominated by the same
/// steady-state content rather than by however far a few batches happen to
/// get. The stream must supply warmup+repetitions full batches at the largest
/// size. Runs on the calling thread only, so measurements are not polluted by
/// scheduling.
inline ExecProfile measure_exec_profile(BatchAlgorithm& algorithm, std::span<const Event> stream,
                                        std::span<const std::size_t> batch_sizes,
                                        std::size_t repetitions = 7, std::size_t warmup = 3) {
    if (batch_sizes.empty()) {
        throw_error(ErrorCode::InvalidArgument, "profile needs at least one batch size");
    }
    if (repetitions < 1) {
        throw_error(ErrorCode::InvalidArgument, "profile needs at least one repetition");
    }
    std::vector<std::size_t> sizes(batch_sizes.begin(), batch_sizes.end());
    std::sort(sizes.begin(), sizes.end());
    if (std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end() || sizes.front() == 0) {
        throw_error(ErrorCode::InvalidArgument, "batch sizes must be distinct and positive");
    }

    ExecProfile profile;
    profile.algorithm = std::string(algorithm.name());
    profile.samples.reserve(sizes.size());

    using Clock = std::chrono::steady_clock;
    std::vector<double> timings;
    for (std::size_t n : sizes) {
        const std::size_t needed = (warmup + repetitions) * n;
        if (stream.size() < needed) {
            throw_error(ErrorCode::StreamTooShort,
                        "profiling batch size " + std::to_string(n) + " needs " +
                            std::to_string(needed) + " events, stream has " +
                            std::to_string(stream.size()));
        }
        algorithm.reset();
        timings.clear();
        std::size_t batch_index = 0;
        for (std::size_t offset = 0; offset + n <= stream.size(); offset += n, ++batch_index) {
            if (batch_index < warmup) {
                algorithm.process(stream.subspan(offset, n));
                continue;
            }
            const auto begin = Clock::now();
            algorithm.process(stream.subspan(offset, n));
            const auto end = Clock::now();
            timings.push_back(std::chrono::duration<double>(end - begin).count());
        }
        auto mid = timings.begin() + static_cast<std::ptrdiff_t>(timings.size() / 2);
        std::nth_element(timings.begin(), mid, timings.end());
        double median = *mid;
        if (timings.size() % 2 == 0) {
            median = (median + *std::max_element(timings.begin(), mid)) / 2.0;
        }
        profile.samples.push_back({n, median});
    }
    return profile;
}

/// Evaluates the model over every (rate, batch) pair of an already-measured
/// profile. Pure: identical profiles give identical tables.
inline std::vector<LatencyBreakdown> sweep_profile(const ExecProfile& profile,
                                                   std::span<const double> rates,
                                                   const CameraCost& cost,
                                                   BufferModel model = BufferModel::FullFill) {
    std::vector<LatencyBreakdown> table;
    table.reserve(rates.size() * profile.samples.size());
    for (double rate : rates) {
        for (const auto& sample : profile.samples) {
            table.push_back(l_total(cost, profile, rate, sample.n, model));
        }
    }
    return table;
}

/// Measures a profile for `algorithm` on `stream` and evaluates the model at
/// every requested rate; rates are imposed analytically while the stream only
/// supplies batch content.
inline std::vector<LatencyBreakdown> sweep(BatchAlgorithm& algorithm,
                                           std::span<const Event> stream,
                                           std::span<const double> rates,
                                           std::span<const std::size_t> batch_sizes,
                                           const CameraCost& cost,
                                           BufferModel model = BufferModel::FullFill,
                                           std::size_t repetitions = 7, std::size_t warmup = 3) {
    const ExecProfile profile =
        measure_exec_profile(algorithm, stream, batch_sizes, repetitions, warmup);
    return sweep_profile(profile, rates, cost, model);
}

/// Report rows as CSV; numeric columns use scientific notation with seven
/// significant digits.
inline std::string latency_table_csv(std::span<const LatencyBreakdown> table) {
    std::string out = "algorithm,R,N,L_cam,L_buffer,L_exec,L_total,real_time\n";
    char line[256];
    for (const auto& row : table) {
        std::snprintf(line, sizeof line, ",%.6e,%.6e,%.6e,%.6e,%.6e,%.6e,%s\n", row.rate,
                      static_cast<double>(row.batch), row.l_cam, row.l_buffer, row.l_exec,
                      row.l_total, row.real_time ? "true" : "false");
        out += row.algorithm;
        out += line;
    }
    return out;
}

}  // namespace evk
