// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Per-event normal optical flow from local plane fits on the event cloud,
// plus an aperture-robust multi-scale correction (ARMS): pick the spatial
// scale that maximizes mean flow magnitude, then average flow direction at
// that scale. Batch processing is stateful and yields bit-identical output
// for any batching of the same stream.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evk/core.hpp"

namespace evk {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Least-squares plane t = a·x + b·y + c over a local window of events,
/// in coordinates centered on the query event. a and b are µs per pixel,
/// c and the residual are µs.
struct PlaneFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    std::size_t inlier_count = 0;
    double residual_rms = 0.0;
};

struct FlowVector {
    double vx = 0.0;     ///< px/s
    double vy = 0.0;     ///< px/s
    double speed = 0.0;  ///< px/s, always √(vx²+vy²)
    std::uint32_t scale = 0;  ///< spatial scale used; 0 for uncorrected normal flow
};

inline FlowVector make_flow_vector(double vx, double vy, std::uint32_t scale) {
    return FlowVector{vx, vy, std::hypot(vx, vy), scale};
}

struct FlowConfig {
    std::uint32_t fit_radius = 3;
    std::uint64_t fit_window_us = 20000;
    std::size_t min_support = 5;
    std::vector<std::uint32_t> scale_set = {3, 5, 7, 9, 11};
    double max_speed = 1e6;  ///< px/s; faster local flows are outliers

    void validate() const {
        if (scale_set.empty()) {
            throw_error(ErrorCode::InvalidArgument, "scale_set must not be empty");
        }
        for (std::size_t i = 1; i < scale_set.size(); ++i) {
            if (scale_set[i] <= scale_set[i - 1]) {
                throw_error(ErrorCode::InvalidArgument, "scale_set must be strictly ascending");
            }
        }
        if (min_support < 3) {
            throw_error(ErrorCode::InvalidArgument, "min_support must be at least 3");
        }
        if (max_speed <= 0.0) {
            throw_error(ErrorCode::InvalidArgument, "max_speed must be positive");
        }
    }
};

// ---------------------------------------------------------------------------
// Plane fitting
// ---------------------------------------------------------------------------

// The plane fit reads a RecentEventIndex (core.hpp). A fit for an event
// expects that event to be recorded already, so its own pixel participates
// at time offset zero.

namespace detail {

/// Eigendecomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Columns of `vectors` are unit eigenvectors matching `values`.
inline void jacobi_eigen3(double m[3][3], double vectors[3][3], double values[3]) {
    double a[3][3];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            a[i][j] = m[i][j];
            vectors[i][j] = (i == j) ? 1.0 : 0.0;
        }
    }
    for (int sweep = 0; sweep < 32; ++sweep) {
        const double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const double vkp = vectors[k][p], vkq = vectors[k][q];
                    vectors[k][p] = c * vkp - s * vkq;
                    vectors[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for (int i = 0; i < 3; ++i) values[i] = a[i][i];
}

/// Minimum-norm least-squares solution of the 3×3 normal equations S·β = z
/// via eigenvalue pseudo-inverse; near-zero eigenvalues (rank deficiency)
/// contribute nothing, which picks the smallest-coefficient plane.
inline std::array<double, 3> solve_min_norm3(double s[3][3], const double z[3]) {
    double vecs[3][3];
    double vals[3];
    jacobi_eigen3(s, vecs, vals);
    double max_val = 0.0;
    for (double v : vals) max_val = std::max(max_val, std::abs(v));
    const double tol = max_val * 1e-9;
    std::array<double, 3> beta{0.0, 0.0, 0.0};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(vals[i]) <= tol) continue;
        double proj = 0.0;
        for (int k = 0; k < 3; ++k) proj += vecs[k][i] * z[k];
        proj /= vals[i];
        for (int k = 0; k < 3; ++k) beta[k] += proj * vecs[k][i];
    }
    return beta;
}

struct FitPoint {
    double dx, dy, dt;
};

enum class FitStatus : std::uint8_t { Ok, InsufficientSupport, DegeneratePlane };

inline PlaneFit fit_points(std::vector<FitPoint>& points) {
    double s[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double z[3] = {0, 0, 0};
    for (const FitPoint& p : points) {
        s[0][0] += p.dx * p.dx;
        s[0][1] += p.dx * p.dy;
        s[0][2] += p.dx;
        s[1][1] += p.dy * p.dy;
        s[1][2] += p.dy;
        z[0] += p.dx * p.dt;
        z[1] += p.dy * p.dt;
        z[2] += p.dt;
    }
    s[1][0] = s[0][1];
    s[2][0] = s[0][2];
    s[2][1] = s[1][2];
    s[2][2] = static_cast<double>(points.size());
    const auto beta = solve_min_norm3(s, z);

    PlaneFit fit;
    fit.a = beta[0];
    fit.b = beta[1];
    fit.c = beta[2];
    fit.inlier_count = points.size();
    double sq = 0.0;
    for (const FitPoint& p : points) {
        const double r = p.dt - (fit.a * p.dx + fit.b * p.dy + fit.c);
        sq += r * r;
    }
    fit.residual_rms = std::sqrt(sq / static_cast<double>(points.size()));
    return fit;
}

/// Gathers neighborhood points and fits, with one residual-trimming pass.
inline FitStatus plane_fit_core(const Event& e, const RecentEventIndex& index,
                                const FlowConfig& config, PlaneFit& out) {
    const SensorGeometry geo = index.geometry();
    const std::int32_t r = static_cast<std::int32_t>(config.fit_radius);
    const std::int32_t x_lo = std::max<std::int32_t>(0, std::int32_t(e.x) - r);
    const std::int32_t x_hi =
        std::min<std::int32_t>(std::int32_t(geo.width) - 1, std::int32_t(e.x) + r);
    const std::int32_t y_lo = std::max<std::int32_t>(0, std::int32_t(e.y) - r);
    const std::int32_t y_hi =
        std::min<std::int32_t>(std::int32_t(geo.height) - 1, std::int32_t(e.y) + r);

    std::vector<FitPoint> points;
    points.reserve(static_cast<std::size_t>(2 * r + 1) * static_cast<std::size_t>(2 * r + 1));
    for (std::int32_t y = y_lo; y <= y_hi; ++y) {
        for (std::int32_t x = x_lo; x <= x_hi; ++x) {
            const std::uint64_t t = index.last_time(static_cast<std::uint16_t>(x),
                                                    static_cast<std::uint16_t>(y), e.polarity);
            if (t == kNeverFired || t > e.t) continue;
            if (e.t - t > config.fit_window_us) continue;
            points.push_back({static_cast<double>(x - std::int32_t(e.x)),
                              static_cast<double>(y - std::int32_t(e.y)),
                              -static_cast<double>(e.t - t)});
        }
    }
    if (points.size() < config.min_support) return FitStatus::InsufficientSupport;

    PlaneFit fit = fit_points(points);
    if (fit.residual_rms > 0.0) {
        std::vector<FitPoint> kept;
        kept.reserve(points.size());
        const double cut = 3.0 * fit.residual_rms;
        for (const FitPoint& p : points) {
            const double r_i = p.dt - (fit.a * p.dx + fit.b * p.dy + fit.c);
            if (std::abs(r_i) <= cut) kept.push_back(p);
        }
        if (kept.size() < points.size() && kept.size() >= config.min_support) {
            fit = fit_points(kept);
        }
    }
    if (std::abs(fit.a) <= 1e-12 && std::abs(fit.b) <= 1e-12) {
        return FitStatus::DegeneratePlane;
    }
    out = fit;
    return FitStatus::Ok;
}

}  // namespace detail

/// Fits the local event surface around `e`. The index must already contain
/// `e` itself and every relevant event before it; only same-polarity events
/// within Chebyshev distance fit_radius and fit_window_us participate, one
/// (the most recent) per pixel.
inline PlaneFit local_plane_fit(const Event& e, const RecentEventIndex& index,
                                const FlowConfig& config) {
    config.validate();
    PlaneFit fit;
    switch (detail::plane_fit_core(e, index, config, fit)) {
        case detail::FitStatus::Ok:
            return fit;
        case detail::FitStatus::InsufficientSupport:
            throw_error(ErrorCode::InsufficientSupport,
                        "plane fit needs " + std::to_string(config.min_support) + " pixels");
        case detail::FitStatus::DegeneratePlane:
        default:
            throw_error(ErrorCode::DegeneratePlane, "local surface has no temporal gradient");
    }
}

/// Normal flow from a plane fit: v = (a, b)/(a² + b²), rescaled from px/µs
/// to px/s. Points along the spatiotemporal gradient with speed 1/‖(a,b)‖.
inline FlowVector normal_flow(const PlaneFit& plane) {
    const double norm_sq = plane.a * plane.a + plane.b * plane.b;
    if (std::abs(plane.a) <= 1e-12 && std::abs(plane.b) <= 1e-12) {
        throw_error(ErrorCode::DegeneratePlane, "normal flow undefined for a flat surface");
    }
    return make_flow_vector(plane.a / norm_sq * kMicrosPerSecond,
                            plane.b / norm_sq * kMicrosPerSecond, 0);
}

// ---------------------------------------------------------------------------
// Aperture-robust multi-scale correction
// ---------------------------------------------------------------------------

/// A normal-flow estimate anchored at the pixel that produced it.
struct PositionedFlow {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    FlowVector flow;
};

namespace detail {

struct ScaleBucket {
    std::size_t count = 0;
    double speed_sum = 0.0;
    double ux_sum = 0.0;
    double uy_sum = 0.0;
};

/// Shared ARMS evaluation over candidates bucketed by Chebyshev distance.
/// `add_candidates` feeds (distance, unit direction, speed) tuples in a
/// deterministic order via the provided callback.
template <typename FeedFn>
std::optional<FlowVector> arms_from_buckets(const FlowConfig& config, FeedFn&& feed) {
    const auto& scales = config.scale_set;
    std::vector<ScaleBucket> buckets(scales.size());
    feed([&](std::uint32_t distance, double ux, double uy, double speed) {
        // smallest scale containing this candidate; larger scales inherit below
        const auto it = std::lower_bound(scales.begin(), scales.end(), distance);
        if (it == scales.end()) return;
        ScaleBucket& b = buckets[static_cast<std::size_t>(it - scales.begin())];
        ++b.count;
        b.speed_sum += speed;
        b.ux_sum += ux;
        b.uy_sum += uy;
    });
    for (std::size_t i = 1; i < buckets.size(); ++i) {
        buckets[i].count += buckets[i - 1].count;
        buckets[i].speed_sum += buckets[i - 1].speed_sum;
        buckets[i].ux_sum += buckets[i - 1].ux_sum;
        buckets[i].uy_sum += buckets[i - 1].uy_sum;
    }
    if (buckets.back().count == 0) return std::nullopt;

    std::size_t best = buckets.size();
    double best_mean = -1.0;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        if (buckets[i].count == 0) continue;
        const double mean = buckets[i].speed_sum / static_cast<double>(buckets[i].count);
        if (mean > best_mean) {
            best_mean = mean;
            best = i;
        }
    }
    const ScaleBucket& b = buckets[best];
    const double inv = 1.0 / static_cast<double>(b.count);
    const double mx = b.ux_sum * inv;
    const double my = b.uy_sum * inv;
    const double norm = std::hypot(mx, my);
    if (norm <= 1e-12) {
        // directions cancel; magnitude is meaningless without a direction
        return make_flow_vector(0.0, 0.0, scales[best]);
    }
    return make_flow_vector(best_mean * mx / norm, best_mean * my / norm, scales[best]);
}

inline std::uint32_t chebyshev(std::uint16_t ax, std::uint16_t ay, std::uint16_t bx,
                               std::uint16_t by) {
    const std::uint32_t dx = ax > bx ? std::uint32_t(ax - bx) : std::uint32_t(bx - ax);
    const std::uint32_t dy = ay > by ? std::uint32_t(ay - by) : std::uint32_t(by - ay);
    return std::max(dx, dy);
}

}  // namespace detail

/// Corrects the aperture bias of normal flow around `e`: picks the scale in
/// config.scale_set whose neighborhood has the highest mean flow speed (ties
/// favor the smallest scale), then combines that mean speed with the mean
/// unit direction there. Candidates faster than max_speed are ignored.
inline FlowVector arms_correct(const Event& e, std::span<const PositionedFlow> local_flows,
                               const FlowConfig& config) {
    config.validate();
    auto result = detail::arms_from_buckets(config, [&](auto&& add) {
        for (const PositionedFlow& f : local_flows) {
            if (f.flow.speed > config.max_speed || f.flow.speed <= 0.0) continue;
            add(detail::chebyshev(f.x, f.y, e.x, e.y), f.flow.vx / f.flow.speed,
                f.flow.vy / f.flow.speed, f.flow.speed);
        }
    });
    if (!result) {
        throw_error(ErrorCode::NoLocalFlows, "no usable local flow within the largest scale");
    }
    return *result;
}

// ---------------------------------------------------------------------------
// Stateful batch processing
// ---------------------------------------------------------------------------

/// Per-event outcome of flow_batch. Missing vectors carry the reason.
struct FlowRecord {
    std::optional<FlowVector> local;  ///< uncorrected normal flow
    std::optional<FlowVector> arms;   ///< aperture-corrected flow
    bool local_outlier = false;       ///< local speed above max_speed
    ErrorCode local_error = ErrorCode::InsufficientSupport;  ///< valid iff !local
    ErrorCode arms_error = ErrorCode::NoLocalFlows;          ///< valid iff !arms
};

struct FlowBatchStats {
    std::size_t events = 0;
    std::size_t local_ok = 0;
    std::size_t local_insufficient = 0;
    std::size_t local_degenerate = 0;
    std::size_t local_outliers = 0;
    std::size_t arms_ok = 0;
    std::size_t arms_no_flows = 0;
};

/// Rolling state carried across batches: the plane-fit index plus a spatial
/// hash of recent valid local flows for ARMS pooling. Results depend only on
/// the event sequence, never on how it is cut into batches.
class FlowState {
public:
    explicit FlowState(SensorGeometry geometry) : index_(geometry) {}

    SensorGeometry geometry() const { return index_.geometry(); }
    const RecentEventIndex& index() const { return index_; }

    void clear() {
        index_.clear();
        pool_.clear();
        last_t_ = 0;
        has_last_ = false;
    }

private:
    friend struct FlowBatchRunner;

    static constexpr std::uint32_t kCellShift = 4;  // 16-pixel pooling cells

    struct PoolEntry {
        std::uint64_t t;
        std::uint16_t x, y;
        double ux, uy, speed;
    };

    static std::uint32_t cell_key(std::uint32_t cx, std::uint32_t cy) {
        return (cy << 16) | cx;
    }

    RecentEventIndex index_;
    std::unordered_map<std::uint32_t, std::deque<PoolEntry>> pool_;
    std::uint64_t last_t_ = 0;
    bool has_last_ = false;
};

struct FlowBatchResult {
    std::vector<FlowRecord> records;  ///< one per input event, same order
    FlowBatchStats stats;
};

struct FlowBatchRunner {
    /// Processes one time-ordered batch. Pool entries too old to matter for
    /// any future event are swept out up front, so state stays bounded by the
    /// fit window however the stream is batched.
    static FlowBatchResult run(std::span<const Event> batch, FlowState& state,
                               const FlowConfig& config) {
        config.validate();
        FlowBatchResult out;
        out.records.reserve(batch.size());
        out.stats.events = batch.size();
        if (batch.empty()) return out;

        if (batch.front().t > config.fit_window_us) {
            sweep_pool(state, batch.front().t - config.fit_window_us);
        }

        const std::uint32_t largest = config.scale_set.back();
        for (const Event& e : batch) {
            if ((state.has_last_ && e.t < state.last_t_) ||
                !state.index_.geometry().contains(e.x, e.y)) {
                throw_error(e.t < state.last_t_ ? ErrorCode::NonMonotoneTimestamps
                                                : ErrorCode::InvalidArgument,
                            "flow input must be in-bounds and time ordered");
            }
            state.last_t_ = e.t;
            state.has_last_ = true;

            FlowRecord record;
            state.index_.record(e);
            PlaneFit fit;
            switch (detail::plane_fit_core(e, state.index_, config, fit)) {
                case detail::FitStatus::Ok: {
                    const FlowVector v = normal_flow(fit);
                    record.local = v;
                    ++out.stats.local_ok;
                    if (v.speed > config.max_speed) {
                        record.local_outlier = true;
                        ++out.stats.local_outliers;
                    } else {
                        const std::uint32_t key = FlowState::cell_key(
                            std::uint32_t(e.x) >> FlowState::kCellShift,
                            std::uint32_t(e.y) >> FlowState::kCellShift);
                        state.pool_[key].push_back(
                            {e.t, e.x, e.y, v.vx / v.speed, v.vy / v.speed, v.speed});
                    }
                    break;
                }
                case detail::FitStatus::InsufficientSupport:
                    record.local_error = ErrorCode::InsufficientSupport;
                    ++out.stats.local_insufficient;
                    break;
                case detail::FitStatus::DegeneratePlane:
                    record.local_error = ErrorCode::DegeneratePlane;
                    ++out.stats.local_degenerate;
                    break;
            }

            auto arms = detail::arms_from_buckets(config, [&](auto&& add) {
                pool_query(state, e, largest, config.fit_window_us, add);
            });
            if (arms) {
                record.arms = *arms;
                ++out.stats.arms_ok;
            } else {
                record.arms_error = ErrorCode::NoLocalFlows;
                ++out.stats.arms_no_flows;
            }
            out.records.push_back(std::move(record));
        }
        return out;
    }

private:
    static void sweep_pool(FlowState& state, std::uint64_t horizon) {
        for (auto it = state.pool_.begin(); it != state.pool_.end();) {
            auto& entries = it->second;
            while (!entries.empty() && entries.front().t < horizon) entries.pop_front();
            if (entries.empty()) {
                it = state.pool_.erase(it);
            } else {
                ++it;
            }
        }
    }

    /// Visits pool entries near `e` in a fixed cell-by-cell order so sums do
    /// not depend on hash layout or batch boundaries. Entries older than the
    /// window are dropped on the way: timestamps only move forward, so an
    /// entry too old for this event is too old for every later one, and
    /// per-event cost stays bounded by the window however large a batch is.
    template <typename AddFn>
    static void pool_query(FlowState& state, const Event& e, std::uint32_t radius,
                           std::uint64_t window_us, AddFn&& add) {
        const SensorGeometry geo = state.index_.geometry();
        const std::uint32_t x_lo =
            (e.x > radius ? std::uint32_t(e.x) - radius : 0u) >> FlowState::kCellShift;
        const std::uint32_t x_hi =
            std::min<std::uint32_t>(std::uint32_t(e.x) + radius, geo.width - 1) >>
            FlowState::kCellShift;
        const std::uint32_t y_lo =
            (e.y > radius ? std::uint32_t(e.y) - radius : 0u) >> FlowState::kCellShift;
        const std::uint32_t y_hi =
            std::min<std::uint32_t>(std::uint32_t(e.y) + radius, geo.height - 1) >>
            FlowState::kCellShift;
        for (std::uint32_t cy = y_lo; cy <= y_hi; ++cy) {
            for (std::uint32_t cx = x_lo; cx <= x_hi; ++cx) {
                const auto it = state.pool_.find(FlowState::cell_key(cx, cy));
                if (it == state.pool_.end()) continue;
                auto& entries = it->second;
                while (!entries.empty() && e.t - entries.front().t > window_us) {
                    entries.pop_front();
                }
                if (entries.empty()) {
                    state.pool_.erase(it);
                    continue;
                }
                // Front survived the window, so every later entry does too.
                for (const auto& entry : entries) {
                    const std::uint32_t d = detail::chebyshev(entry.x, entry.y, e.x, e.y);
                    if (d > radius) continue;
                    add(d, entry.ux, entry.uy, entry.speed);
                }
            }
        }
    }
};

/// Computes local and aperture-corrected flow for every event of a batch.
/// Splitting a stream into different batch sizes changes nothing: output is
/// the concatenation of per-event results either way.
inline FlowBatchResult flow_batch(std::span<const Event> batch, FlowState& state,
                                  const FlowConfig& config) {
    return FlowBatchRunner::run(batch, state, config);
}

}  // namespace evk
