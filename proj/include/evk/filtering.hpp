// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-processing chain: hot-pixel mask, per-pixel refractory period and
// spatiotemporal denoising. Filters are order-preserving scanners that never
// modify event fields.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "evk/core.hpp"

namespace evk {

namespace detail {
inline std::uint32_t pixel_key(std::uint16_t x, std::uint16_t y) {
    return (std::uint32_t(y) << 16) | x;
}
}  // namespace detail

struct FilterConfig {
    std::uint64_t refractory_us = 1000;
    std::uint32_t st_radius = 1;        ///< Chebyshev radius; 0 disables the stage
    std::uint64_t st_window_us = 1000;  ///< 0 disables the stage
    std::vector<std::pair<std::uint16_t, std::uint16_t>> hot_pixels;

    /// Neutral configuration: every stage is an exact identity.
    static FilterConfig none() { return FilterConfig{0, 0, 0, {}}; }
};

struct FilterStats {
    std::size_t input_count = 0;
    std::size_t output_count = 0;
    std::size_t removed_hot_pixel = 0;
    std::size_t removed_refractory = 0;
    std::size_t removed_spatiotemporal = 0;

    std::size_t removed_total() const {
        return removed_hot_pixel + removed_refractory + removed_spatiotemporal;
    }
    bool conserved() const { return input_count == output_count + removed_total(); }
};

// ---------------------------------------------------------------------------
// Stateful single-stage scanners (single consumer per instance)
// ---------------------------------------------------------------------------

class HotPixelMask {
public:
    HotPixelMask() = default;
    explicit HotPixelMask(std::span<const std::pair<std::uint16_t, std::uint16_t>> pixels) {
        for (const auto& [x, y] : pixels) masked_.insert(detail::pixel_key(x, y));
    }

    bool keep(const Event& e) const {
        return masked_.empty() || !masked_.contains(detail::pixel_key(e.x, e.y));
    }

private:
    std::unordered_set<std::uint32_t> masked_;
};

/// Keeps an event iff no kept event at the same pixel is closer than
/// refractory_us before it. Comparison is strict, so a spacing of exactly
/// refractory_us survives, and a zero setting is an exact no-op.
class RefractoryFilter {
public:
    explicit RefractoryFilter(std::uint64_t refractory_us = 0)
        : refractory_us_(refractory_us) {}

    bool keep(const Event& e) {
        if (refractory_us_ == 0) return true;
        const std::uint32_t key = detail::pixel_key(e.x, e.y);
        auto [it, inserted] = last_kept_.try_emplace(key, e.t);
        if (inserted) return true;  // first event at this pixel
        if (e.t - it->second < refractory_us_) return false;
        it->second = e.t;
        return true;
    }

    void reset() { last_kept_.clear(); }

private:
    std::uint64_t refractory_us_;
    std::unordered_map<std::uint32_t, std::uint64_t> last_kept_;
};

/// Keeps an event iff some earlier event (kept or not) fired within Chebyshev
/// distance st_radius, own pixel excluded, no more than st_window_us before
/// it. Isolated events are dropped. Radius or window of zero disables the
/// stage.
class SpatioTemporalFilter {
public:
    SpatioTemporalFilter() = default;
    SpatioTemporalFilter(std::uint32_t st_radius, std::uint64_t st_window_us)
        : radius_(st_radius), window_us_(st_window_us) {}

    bool active() const { return radius_ > 0 && window_us_ > 0; }

    bool keep(const Event& e) {
        if (!active()) return true;
        bool supported = false;
        const std::int32_t r = static_cast<std::int32_t>(radius_);
        for (std::int32_t dy = -r; dy <= r && !supported; ++dy) {
            const std::int32_t ny = std::int32_t(e.y) + dy;
            if (ny < 0 || ny > 0xffff) continue;
            for (std::int32_t dx = -r; dx <= r; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const std::int32_t nx = std::int32_t(e.x) + dx;
                if (nx < 0 || nx > 0xffff) continue;
                const auto it = last_raw_.find(detail::pixel_key(
                    static_cast<std::uint16_t>(nx), static_cast<std::uint16_t>(ny)));
                if (it != last_raw_.end() && e.t - it->second <= window_us_) {
                    supported = true;
                    break;
                }
            }
        }
        // record the raw event whether or not it was kept
        last_raw_[detail::pixel_key(e.x, e.y)] = e.t;
        return supported;
    }

    void reset() { last_raw_.clear(); }

private:
    std::uint32_t radius_ = 0;
    std::uint64_t window_us_ = 0;
    std::unordered_map<std::uint32_t, std::uint64_t> last_raw_;
};

/// Fixed stage order: hot-pixel mask, refractory, spatiotemporal.
class FilterChain {
public:
    FilterChain() : FilterChain(FilterConfig::none()) {}
    explicit FilterChain(const FilterConfig& config)
        : hot_(config.hot_pixels),
          refractory_(config.refractory_us),
          st_(config.st_radius, config.st_window_us) {}

    /// Returns true when the event survives every stage; updates stats.
    bool keep(const Event& e) {
        ++stats_.input_count;
        if (!hot_.keep(e)) {
            ++stats_.removed_hot_pixel;
            return false;
        }
        if (!refractory_.keep(e)) {
            ++stats_.removed_refractory;
            return false;
        }
        if (!st_.keep(e)) {
            ++stats_.removed_spatiotemporal;
            return false;
        }
        ++stats_.output_count;
        return true;
    }

    /// Filters a batch, appending survivors to `out`.
    void process(std::span<const Event> batch, std::vector<Event>& out) {
        for (const Event& e : batch) {
            if (keep(e)) out.push_back(e);
        }
    }

    const FilterStats& stats() const { return stats_; }

    void reset() {
        refractory_.reset();
        st_.reset();
        stats_ = FilterStats{};
    }

private:
    HotPixelMask hot_;
    RefractoryFilter refractory_;
    SpatioTemporalFilter st_;
    FilterStats stats_;
};

// ---------------------------------------------------------------------------
// One-shot operations
// ---------------------------------------------------------------------------

struct FilteredStream {
    std::vector<Event> events;
    FilterStats stats;
};

inline FilteredStream refractory_filter(std::span<const Event> events,
                                        std::uint64_t refractory_us) {
    FilterConfig config = FilterConfig::none();
    config.refractory_us = refractory_us;
    FilteredStream out;
    FilterChain chain(config);
    out.events.reserve(events.size());
    chain.process(events, out.events);
    out.stats = chain.stats();
    return out;
}

inline FilteredStream spatiotemporal_filter(std::span<const Event> events,
                                            std::uint32_t st_radius,
                                            std::uint64_t st_window_us) {
    FilterConfig config = FilterConfig::none();
    config.st_radius = st_radius;
    config.st_window_us = st_window_us;
    FilteredStream out;
    FilterChain chain(config);
    out.events.reserve(events.size());
    chain.process(events, out.events);
    out.stats = chain.stats();
    return out;
}

inline FilteredStream apply_chain(std::span<const Event> events, const FilterConfig& config) {
    FilteredStream out;
    FilterChain chain(config);
    out.events.reserve(events.size());
    chain.process(events, out.events);
    out.stats = chain.stats();
    return out;
}

/// Calibration pass: pixels whose whole-stream event rate exceeds
/// rate_threshold (events per second, per pixel).
inline std::vector<std::pair<std::uint16_t, std::uint16_t>> detect_hot_pixels(
    std::span<const Event> events, SensorGeometry geometry, double rate_threshold) {
    if (events.empty() || events.back().t == events.front().t) {
        throw_error(ErrorCode::ZeroTimeSpan, "hot-pixel detection needs a stream spanning time");
    }
    const double span_s =
        static_cast<double>(events.back().t - events.front().t) / kMicrosPerSecond;
    std::unordered_map<std::uint32_t, std::size_t> counts;
    for (const Event& e : events) {
        if (geometry.contains(e.x, e.y)) ++counts[detail::pixel_key(e.x, e.y)];
    }

    std::vector<std::pair<std::uint16_t, std::uint16_t>> hot;
    for (const auto& [key, count] : counts) {
        if (static_cast<double>(count) / span_s > rate_threshold) {
            hot.emplace_back(static_cast<std::uint16_t>(key & 0xffff),
                             static_cast<std::uint16_t>(key >> 16));
        }
    }
    std::sort(hot.begin(), hot.end());
    return hot;
}

}  // namespace evk
