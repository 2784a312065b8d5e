// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary: events and polarities, sensor geometry, dense per-pixel
// maps, stream validation and the library's single exception type.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <span>
#include <vector>

namespace evk {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
    // streams
    EmptyStream,
    ZeroTimeSpan,
    // packet codec / files
    PacketTooLarge,
    BadMagic,
    Truncated,
    CountMismatch,
    NonMonotoneTimestamps,
    Malformed,
    Io,
    Parse,
    SeqGap,
    InvalidSpec,
    // latency model
    ZeroRate,
    OutOfProfileRange,
    StreamTooShort,
    // flow
    InsufficientSupport,
    DegeneratePlane,
    NoLocalFlows,
    // hots
    InsufficientData,
    EmptyWindow,
    NotEnoughTrainingData,
    // repr
    EmptyBatch,
    BackendFailure,
    // pipeline
    ProcessorFailure,
    // generic misuse of an interface
    InvalidArgument,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::ZeroTimeSpan: return "ZeroTimeSpan";
        case ErrorCode::PacketTooLarge: return "PacketTooLarge";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
        case ErrorCode::Malformed: return "Malformed";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Parse: return "Parse";
        case ErrorCode::SeqGap: return "SeqGap";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::ZeroRate: return "ZeroRate";
        case ErrorCode::OutOfProfileRange: return "OutOfProfileRange";
        case ErrorCode::StreamTooShort: return "StreamTooShort";
        case ErrorCode::InsufficientSupport: return "InsufficientSupport";
        case ErrorCode::DegeneratePlane: return "DegeneratePlane";
        case ErrorCode::NoLocalFlows: return "NoLocalFlows";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::EmptyWindow: return "EmptyWindow";
        case ErrorCode::NotEnoughTrainingData: return "NotEnoughTrainingData";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::BackendFailure: return "BackendFailure";
        case ErrorCode::ProcessorFailure: return "ProcessorFailure";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void throw_error(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Polarity : std::uint8_t {
    Off = 0,  ///< decrease in log illuminance
    On = 1,   ///< increase in log illuminance
};

/// One change-detection sample. Timestamps are absolute microseconds; within a
/// stream they are non-decreasing (ties keep their input order).
struct Event {
    std::uint64_t t = 0;  ///< microseconds
    std::uint16_t x = 0;  ///< column
    std::uint16_t y = 0;  ///< row
    Polarity polarity = Polarity::On;

    friend bool operator==(const Event&, const Event&) = default;
};

struct SensorGeometry {
    std::uint32_t width = 0;
    std::uint32_t height = 0;

    bool valid() const noexcept { return width >= 1 && height >= 1; }
    bool contains(std::uint32_t x, std::uint32_t y) const noexcept {
        return x < width && y < height;
    }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * height;
    }

    friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

inline constexpr SensorGeometry kDefaultGeometry{304, 240};

/// Events per second of a stream; a proxy for visual-scene activity.
struct EventRate {
    double events_per_second = 0.0;
};

inline constexpr double kMicrosPerSecond = 1e6;

// ---------------------------------------------------------------------------
// PixelMap: dense per-pixel storage addressed by (x, y)
// ---------------------------------------------------------------------------

template <typename T>
class PixelMap {
public:
    PixelMap() = default;
    PixelMap(SensorGeometry geometry, const T& init = T{})
        : geometry_(geometry), cells_(geometry.pixel_count(), init) {}

    const SensorGeometry& geometry() const noexcept { return geometry_; }

    T& at(std::uint32_t x, std::uint32_t y) {
        return cells_[static_cast<std::size_t>(y) * geometry_.width + x];
    }
    const T& at(std::uint32_t x, std::uint32_t y) const {
        return cells_[static_cast<std::size_t>(y) * geometry_.width + x];
    }

    void fill(const T& value) { std::fill(cells_.begin(), cells_.end(), value); }

    auto begin() { return cells_.begin(); }
    auto end() { return cells_.end(); }
    auto begin() const { return cells_.begin(); }
    auto end() const { return cells_.end(); }
    std::size_t size() const noexcept { return cells_.size(); }

private:
    SensorGeometry geometry_{};
    std::vector<T> cells_;
};

/// Sentinel for "pixel has never fired" in last-timestamp grids.
inline constexpr std::uint64_t kNeverFired = ~std::uint64_t{0};

// ---------------------------------------------------------------------------
// Stream statistics and validation
// ---------------------------------------------------------------------------

/// Mean event rate of a stream: count / (t_last - t_first).
/// A stream with fewer than two events or a zero time span has no finite rate.
inline EventRate compute_event_rate(std::span<const Event> events) {
    if (events.empty()) {
        throw_error(ErrorCode::EmptyStream, "cannot compute a rate without events");
    }
    const std::uint64_t span_us = events.back().t - events.front().t;
    if (span_us == 0) {
        throw_error(ErrorCode::ZeroTimeSpan,
                    "stream spans zero time (" + std::to_string(events.size()) + " events)");
    }
    const double span_s = static_cast<double>(span_us) / kMicrosPerSecond;
    return EventRate{static_cast<double>(events.size()) / span_s};
}

enum class ViolationKind {
    OutOfBounds,
    TimestampRegression,
};

struct StreamViolation {
    ViolationKind kind;
    std::size_t index;  ///< offending event's position in the stream
    Event event;
};

struct ValidationReport {
    std::vector<StreamViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Diagnostic scan: reports out-of-bounds coordinates and timestamp
/// regressions. An empty report means every downstream stage accepts the
/// stream.
inline ValidationReport validate_stream(std::span<const Event> events, SensorGeometry geometry) {
    ValidationReport report;
    std::uint64_t prev_t = 0;
    bool have_prev = false;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (!geometry.contains(e.x, e.y)) {
            report.violations.push_back({ViolationKind::OutOfBounds, i, e});
        }
        if (have_prev && e.t < prev_t) {
            report.violations.push_back({ViolationKind::TimestampRegression, i, e});
        }
        prev_t = e.t;
        have_prev = true;
    }
    return report;
}

/// Most recent event time per (pixel, polarity). The shared lookup structure
/// behind plane fitting and time surfaces: callers record events in stream
/// order and query the latest activity around a pixel.
class RecentEventIndex {
public:
    explicit RecentEventIndex(SensorGeometry geometry)
        : geometry_(geometry),
          last_{PixelMap<std::uint64_t>(geometry, kNeverFired),
                PixelMap<std::uint64_t>(geometry, kNeverFired)} {}

    SensorGeometry geometry() const { return geometry_; }

    void record(const Event& e) {
        last_[static_cast<std::size_t>(e.polarity)].at(e.x, e.y) = e.t;
    }

    std::uint64_t last_time(std::uint16_t x, std::uint16_t y, Polarity polarity) const {
        return last_[static_cast<std::size_t>(polarity)].at(x, y);
    }

    void clear() {
        last_[0].fill(kNeverFired);
        last_[1].fill(kNeverFired);
    }

private:
    SensorGeometry geometry_;
    std::array<PixelMap<std::uint64_t>, 2> last_;
};

namespace detail {

// Little-endian byte packing shared by every binary file format here.

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

}  // namespace evk
