// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Packet codec (.evp), event file readers/writers and synthetic stream
// generators with known ground truth.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evk/core.hpp"

namespace evk {

// ---------------------------------------------------------------------------
// EventPacket and its wire format
// ---------------------------------------------------------------------------
//
// Little-endian layout:
//   header: magic 0x45565031 ("1PVE" on disk) u32 | seq u32 | count u32 | reserved u32 = 0
//   then count 16-byte records:
//     t u64 (microseconds) | x u16 | y u16 | polarity u8 (0=OFF, 1=ON) | 3 reserved bytes = 0
//
// An encoded packet never exceeds 16384 bytes, which caps the payload at 1023
// events. Equal packets encode to equal bytes; the decoder accepts exactly the
// encoder's image and nothing else.

inline constexpr std::uint32_t kPacketMagic = 0x45565031u;
inline constexpr std::size_t kPacketHeaderBytes = 16;
inline constexpr std::size_t kPacketRecordBytes = 16;
inline constexpr std::size_t kPacketMaxBytes = 16384;
inline constexpr std::size_t kPacketMaxEvents =
    (kPacketMaxBytes - kPacketHeaderBytes) / kPacketRecordBytes;  // 1023

struct EventPacket {
    std::uint32_t seq = 0;
    std::vector<Event> events;

    friend bool operator==(const EventPacket&, const EventPacket&) = default;
};

inline std::vector<std::uint8_t> encode_packet(const EventPacket& packet) {
    const std::size_t encoded_size =
        kPacketHeaderBytes + packet.events.size() * kPacketRecordBytes;
    if (encoded_size > kPacketMaxBytes) {
        throw_error(ErrorCode::PacketTooLarge,
                    std::to_string(packet.events.size()) + " events encode to " +
                        std::to_string(encoded_size) + " bytes, cap is " +
                        std::to_string(kPacketMaxBytes));
    }
    std::uint64_t prev_t = 0;
    bool have_prev = false;
    for (const Event& e : packet.events) {
        if (have_prev && e.t < prev_t) {
            throw_error(ErrorCode::NonMonotoneTimestamps,
                        "packet events must have non-decreasing timestamps");
        }
        prev_t = e.t;
        have_prev = true;
    }

    std::vector<std::uint8_t> out;
    out.reserve(encoded_size);
    detail::put_u32(out, kPacketMagic);
    detail::put_u32(out, packet.seq);
    detail::put_u32(out, static_cast<std::uint32_t>(packet.events.size()));
    detail::put_u32(out, 0);  // reserved
    for (const Event& e : packet.events) {
        detail::put_u64(out, e.t);
        detail::put_u16(out, e.x);
        detail::put_u16(out, e.y);
        out.push_back(static_cast<std::uint8_t>(e.polarity));
        out.push_back(0);
        out.push_back(0);
        out.push_back(0);
    }
    return out;
}

inline EventPacket decode_packet(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPacketHeaderBytes) {
        throw_error(ErrorCode::Truncated, "need " + std::to_string(kPacketHeaderBytes) +
                                              " header bytes, got " +
                                              std::to_string(bytes.size()));
    }
    if (detail::get_u32(bytes.data()) != kPacketMagic) {
        throw_error(ErrorCode::BadMagic, "first four bytes are not the packet magic");
    }
    EventPacket packet;
    packet.seq = detail::get_u32(bytes.data() + 4);
    const std::uint32_t count = detail::get_u32(bytes.data() + 8);
    if (detail::get_u32(bytes.data() + 12) != 0) {
        throw_error(ErrorCode::Malformed, "reserved header word must be zero");
    }
    const std::size_t expected = kPacketHeaderBytes + std::size_t(count) * kPacketRecordBytes;
    if (bytes.size() < expected) {
        throw_error(ErrorCode::Truncated, "count " + std::to_string(count) + " needs " +
                                              std::to_string(expected) + " bytes, got " +
                                              std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        throw_error(ErrorCode::CountMismatch,
                    std::to_string(bytes.size() - expected) + " trailing bytes after " +
                        std::to_string(count) + " records");
    }

    packet.events.reserve(count);
    std::uint64_t prev_t = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t* rec = bytes.data() + kPacketHeaderBytes + i * kPacketRecordBytes;
        Event e;
        e.t = detail::get_u64(rec);
        e.x = detail::get_u16(rec + 8);
        e.y = detail::get_u16(rec + 10);
        const std::uint8_t pol = rec[12];
        if (pol > 1) {
            throw_error(ErrorCode::Malformed,
                        "polarity byte must be 0 or 1 in record " + std::to_string(i));
        }
        if (rec[13] != 0 || rec[14] != 0 || rec[15] != 0) {
            throw_error(ErrorCode::Malformed,
                        "reserved record bytes must be zero in record " + std::to_string(i));
        }
        e.polarity = static_cast<Polarity>(pol);
        if (i > 0 && e.t < prev_t) {
            throw_error(ErrorCode::NonMonotoneTimestamps,
                        "timestamp regression inside packet at record " + std::to_string(i));
        }
        prev_t = e.t;
        packet.events.push_back(e);
    }
    return packet;
}

// ---------------------------------------------------------------------------
// Stream files: .evp (concatenated packets) and .csv ("t_us,x,y,p")
// ---------------------------------------------------------------------------

enum class StreamFormat {
    PacketBinary,
    Csv,
};

/// Picks the format from the file extension; defaults to packet binary.
inline StreamFormat format_for_path(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot != std::string::npos && path.substr(dot) == ".csv") return StreamFormat::Csv;
    return StreamFormat::PacketBinary;
}

struct StreamData {
    std::vector<Event> events;
    /// Start index of each packet's payload within `events`. CSV files read as
    /// a single packet, so the list is [0] for any non-empty CSV.
    std::vector<std::size_t> packet_boundaries;
};

namespace detail {

inline StreamData read_packet_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCode::Io, "cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw_error(ErrorCode::Io, "read failure on '" + path + "'");

    StreamData data;
    std::size_t offset = 0;
    std::optional<std::uint32_t> prev_seq;
    while (offset < bytes.size()) {
        if (bytes.size() - offset < kPacketHeaderBytes) {
            throw_error(ErrorCode::Truncated,
                        "trailing " + std::to_string(bytes.size() - offset) +
                            " bytes at offset " + std::to_string(offset) + " of '" + path + "'");
        }
        const std::uint32_t count = detail::get_u32(bytes.data() + offset + 8);
        const std::size_t packet_size =
            kPacketHeaderBytes + std::size_t(count) * kPacketRecordBytes;
        if (bytes.size() - offset < packet_size) {
            throw_error(ErrorCode::Truncated, "packet at offset " + std::to_string(offset) +
                                                  " of '" + path + "' is cut short");
        }
        EventPacket packet;
        try {
            packet = decode_packet({bytes.data() + offset, packet_size});
        } catch (const Error& e) {
            if (e.code() == ErrorCode::BadMagic || e.code() == ErrorCode::Truncated ||
                e.code() == ErrorCode::CountMismatch) {
                throw;
            }
            throw_error(e.code(),
                        std::string(e.what()) + " (offset " + std::to_string(offset) + ")");
        }
        if (prev_seq && packet.seq != *prev_seq + 1) {
            throw_error(ErrorCode::SeqGap, "packet seq " + std::to_string(packet.seq) +
                                               " follows " + std::to_string(*prev_seq));
        }
        if (!data.events.empty() && !packet.events.empty() &&
            packet.events.front().t < data.events.back().t) {
            throw_error(ErrorCode::Parse,
                        "timestamp regression across packet boundary at seq " +
                            std::to_string(packet.seq));
        }
        prev_seq = packet.seq;
        data.packet_boundaries.push_back(data.events.size());
        data.events.insert(data.events.end(), packet.events.begin(), packet.events.end());
        offset += packet_size;
    }
    return data;
}

inline StreamData read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCode::Io, "cannot open '" + path + "' for reading");

    StreamData data;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw_error(ErrorCode::Parse, "'" + path + "' is empty, expected a header row");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t_us,x,y,p") {
        throw_error(ErrorCode::Parse, "'" + path + "' line 1: header must be 't_us,x,y,p'");
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        unsigned long long t = 0;
        std::uint32_t x, y, p;
        char trailing;
        const int matched = std::sscanf(line.c_str(), "%llu,%u,%u,%u%c", &t, &x, &y, &p,
                                        &trailing);
        if (matched != 4 || x > 0xffff || y > 0xffff || p > 1) {
            throw_error(ErrorCode::Parse,
                        "'" + path + "' line " + std::to_string(line_no) + ": bad row '" +
                            line + "'");
        }
        Event e{t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                static_cast<Polarity>(p)};
        if (!data.events.empty() && e.t < data.events.back().t) {
            throw_error(ErrorCode::Parse, "'" + path + "' line " + std::to_string(line_no) +
                                              ": timestamp regression");
        }
        data.events.push_back(e);
    }
    if (in.bad()) throw_error(ErrorCode::Io, "read failure on '" + path + "'");
    if (!data.events.empty()) data.packet_boundaries.push_back(0);
    return data;
}

}  // namespace detail

inline StreamData read_stream(const std::string& path, StreamFormat format) {
    return format == StreamFormat::Csv ? detail::read_csv(path)
                                       : detail::read_packet_binary(path);
}

inline StreamData read_stream(const std::string& path) {
    return read_stream(path, format_for_path(path));
}

/// Splits `events` into packets of at most `packet_events` events, seq starting
/// at zero, and writes the concatenated encoding.
inline void write_stream(const std::string& path, std::span<const Event> events,
                         StreamFormat format, std::size_t packet_events = kPacketMaxEvents) {
    if (packet_events == 0 || packet_events > kPacketMaxEvents) {
        throw_error(ErrorCode::InvalidArgument,
                    "packet_events must be in [1, " + std::to_string(kPacketMaxEvents) + "]");
    }
    std::ofstream out(path, format == StreamFormat::Csv ? std::ios::out
                                                        : std::ios::out | std::ios::binary);
    if (!out) throw_error(ErrorCode::Io, "cannot open '" + path + "' for writing");

    if (format == StreamFormat::Csv) {
        out << "t_us,x,y,p\n";
        for (const Event& e : events) {
            out << e.t << ',' << e.x << ',' << e.y << ','
                << static_cast<unsigned>(e.polarity) << '\n';
        }
    } else {
        std::uint32_t seq = 0;
        for (std::size_t start = 0; start < events.size() || seq == 0;
             start += packet_events) {
            EventPacket packet;
            packet.seq = seq++;
            const std::size_t n = std::min(packet_events, events.size() - start);
            packet.events.assign(events.begin() + start, events.begin() + start + n);
            const auto bytes = encode_packet(packet);
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
            if (events.empty()) break;  // wrote one empty packet
        }
    }
    out.flush();
    if (!out) throw_error(ErrorCode::Io, "write failure on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic streams with ground truth
// ---------------------------------------------------------------------------

enum class SyntheticKind {
    TranslatingBar,
    MovingBlob,
    PoissonNoise,
};

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::PoissonNoise;
    SensorGeometry geometry = kDefaultGeometry;
    double vx = 0.0;  ///< px/s, bar and blob
    double vy = 0.0;
    double rate = 0.0;      ///< target ev/s, noise only
    double duration_s = 1.0;
    std::uint64_t seed = 0;

    // bar
    double bar_length = 60.0;     ///< px along the bar axis
    double bar_width = 4.0;       ///< px across
    double bar_angle_deg = 90.0;  ///< bar axis; 90 = vertical
    // blob
    double blob_radius = 8.0;  ///< px
    // shared: start position of the shape center (defaults to frame center)
    double start_x = -1.0;
    double start_y = -1.0;
    // each pixel crossing emits this many events, spaced burst_spacing_us apart
    std::uint32_t burst_count = 1;
    std::uint64_t burst_spacing_us = 300;
};

struct GroundTruth {
    /// True per-event velocity in px/s, aligned with the event stream.
    std::vector<std::pair<double, double>> velocities;
    /// Dominant motion direction, for gesture-style synthesis: one of
    /// "left", "right", "up", "down" (empty for noise).
    std::string label;
};

struct SyntheticStream {
    std::vector<Event> events;
    GroundTruth truth;
};

namespace detail {

/// Solves |A - B*t| <= h for t, intersected with [0, limit].
/// Returns false when the constraint can never hold.
inline bool axis_interval(double a, double b, double h, double limit, double& lo, double& hi) {
    if (std::abs(b) < 1e-300) {
        if (std::abs(a) > h) return false;
        lo = 0.0;
        hi = limit;
        return true;
    }
    double t0 = (a - h) / b;
    double t1 = (a + h) / b;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(0.0, t0);
    hi = std::min(limit, t1);
    return lo < hi;
}

struct TimedSample {
    double t_s;
    std::uint16_t x;
    std::uint16_t y;
    Polarity polarity;
};

inline void emit_crossing(std::vector<TimedSample>& out, const SyntheticSpec& spec,
                          std::uint32_t x, std::uint32_t y, double t_enter, double t_exit,
                          bool emit_off) {
    const double spacing_s = static_cast<double>(spec.burst_spacing_us) / 1e6;
    for (std::uint32_t k = 0; k < spec.burst_count; ++k) {
        const double t_on = t_enter + k * spacing_s;
        if (t_on < t_exit && t_on < spec.duration_s) {
            out.push_back({t_on, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                           Polarity::On});
        }
        const double t_off = t_exit + k * spacing_s;
        if (emit_off && t_exit > 0.0 && t_exit < spec.duration_s && t_off < spec.duration_s) {
            out.push_back({t_off, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                           Polarity::Off});
        }
    }
}

inline SyntheticStream finish_shape_stream(const SyntheticSpec& spec,
                                           std::vector<TimedSample>& samples) {
    std::sort(samples.begin(), samples.end(), [](const TimedSample& a, const TimedSample& b) {
        return std::tie(a.t_s, a.y, a.x, a.polarity) < std::tie(b.t_s, b.y, b.x, b.polarity);
    });
    SyntheticStream out;
    out.events.reserve(samples.size());
    out.truth.velocities.reserve(samples.size());
    for (const TimedSample& s : samples) {
        out.events.push_back(
            {static_cast<std::uint64_t>(std::llround(s.t_s * 1e6)), s.x, s.y, s.polarity});
        out.truth.velocities.emplace_back(spec.vx, spec.vy);
    }
    // rounding to integer microseconds can swap exact ties; restore order
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    if (spec.vx != 0.0 || spec.vy != 0.0) {
        if (std::abs(spec.vx) >= std::abs(spec.vy)) {
            out.truth.label = spec.vx > 0.0 ? "right" : "left";
        } else {
            out.truth.label = spec.vy > 0.0 ? "down" : "up";
        }
    }
    return out;
}

}  // namespace detail

/// Deterministic synthetic streams. Shapes emit ON when their leading boundary
/// crosses a pixel and OFF when the trailing boundary leaves it, which makes
/// the true velocity known for every event.
inline SyntheticStream synthesize(const SyntheticSpec& spec) {
    if (!spec.geometry.valid()) {
        throw_error(ErrorCode::InvalidSpec, "geometry must be at least 1x1");
    }
    if (!(spec.duration_s > 0.0)) {
        throw_error(ErrorCode::InvalidSpec, "duration must be positive");
    }
    if (spec.rate < 0.0) {
        throw_error(ErrorCode::InvalidSpec, "rate must be non-negative");
    }
    if (spec.burst_count < 1) {
        throw_error(ErrorCode::InvalidSpec, "burst_count must be at least 1");
    }

    const double cx0 = spec.start_x >= 0.0 ? spec.start_x : spec.geometry.width / 2.0;
    const double cy0 = spec.start_y >= 0.0 ? spec.start_y : spec.geometry.height / 2.0;

    switch (spec.kind) {
        case SyntheticKind::PoissonNoise: {
            SyntheticStream out;
            out.truth.label.clear();
            if (spec.rate == 0.0) return out;
            std::mt19937_64 rng(spec.seed);
            std::exponential_distribution<double> gap(spec.rate);
            std::uniform_int_distribution<std::uint32_t> px(0, spec.geometry.width - 1);
            std::uniform_int_distribution<std::uint32_t> py(0, spec.geometry.height - 1);
            std::bernoulli_distribution pol(0.5);
            double t = gap(rng);
            while (t < spec.duration_s) {
                out.events.push_back({static_cast<std::uint64_t>(std::llround(t * 1e6)),
                                      static_cast<std::uint16_t>(px(rng)),
                                      static_cast<std::uint16_t>(py(rng)),
                                      pol(rng) ? Polarity::On : Polarity::Off});
                out.truth.velocities.emplace_back(0.0, 0.0);
                t += gap(rng);
            }
            // exact microsecond ties can land out of order after rounding
            std::stable_sort(out.events.begin(), out.events.end(),
                             [](const Event& a, const Event& b) { return a.t < b.t; });
            return out;
        }

        case SyntheticKind::TranslatingBar: {
            if (!(spec.bar_length > 0.0) || !(spec.bar_width > 0.0)) {
                throw_error(ErrorCode::InvalidSpec, "bar dimensions must be positive");
            }
            const double theta = spec.bar_angle_deg * std::acos(-1.0) / 180.0;
            const double ux = std::cos(theta), uy = std::sin(theta);   // bar axis
            const double nx = -std::sin(theta), ny = std::cos(theta);  // across
            std::vector<detail::TimedSample> samples;
            for (std::uint32_t y = 0; y < spec.geometry.height; ++y) {
                for (std::uint32_t x = 0; x < spec.geometry.width; ++x) {
                    const double qx = x - cx0, qy = y - cy0;
                    // pixel is inside the moving bar at time t iff both axis
                    // projections of (q - v t) stay within the half extents
                    const double a_u = qx * ux + qy * uy;
                    const double b_u = spec.vx * ux + spec.vy * uy;
                    const double a_n = qx * nx + qy * ny;
                    const double b_n = spec.vx * nx + spec.vy * ny;
                    double lo_u, hi_u, lo_n, hi_n;
                    if (!detail::axis_interval(a_u, b_u, spec.bar_length / 2.0,
                                               spec.duration_s, lo_u, hi_u) ||
                        !detail::axis_interval(a_n, b_n, spec.bar_width / 2.0,
                                               spec.duration_s, lo_n, hi_n)) {
                        continue;
                    }
                    const double t_enter = std::max(lo_u, lo_n);
                    const double t_exit = std::min(hi_u, hi_n);
                    if (t_enter >= t_exit) continue;
                    // swept pixels light up when the bar arrives
                    detail::emit_crossing(samples, spec, x, y, t_enter, t_exit,
                                          /*emit_off=*/false);
                }
            }
            return detail::finish_shape_stream(spec, samples);
        }

        case SyntheticKind::MovingBlob: {
            if (!(spec.blob_radius > 0.0)) {
                throw_error(ErrorCode::InvalidSpec, "blob_radius must be positive");
            }
            const double speed2 = spec.vx * spec.vx + spec.vy * spec.vy;
            std::vector<detail::TimedSample> samples;
            for (std::uint32_t y = 0; y < spec.geometry.height; ++y) {
                for (std::uint32_t x = 0; x < spec.geometry.width; ++x) {
                    const double qx = x - cx0, qy = y - cy0;
                    double t_enter, t_exit;
                    if (speed2 < 1e-300) {
                        // static disc: pixels inside are lit for the whole run
                        if (qx * qx + qy * qy > spec.blob_radius * spec.blob_radius) continue;
                        t_enter = 0.0;
                        t_exit = spec.duration_s;
                    } else {
                        // |q - v t| = radius
                        const double b = qx * spec.vx + qy * spec.vy;
                        const double c =
                            qx * qx + qy * qy - spec.blob_radius * spec.blob_radius;
                        const double disc = b * b - speed2 * c;
                        if (disc <= 0.0) continue;
                        const double root = std::sqrt(disc);
                        t_enter = std::max(0.0, (b - root) / speed2);
                        t_exit = std::min(spec.duration_s, (b + root) / speed2);
                        if (t_enter >= t_exit) continue;
                    }
                    // leading edge brightens the pixel, trailing edge dims it
                    detail::emit_crossing(samples, spec, x, y, t_enter, t_exit,
                                          /*emit_off=*/true);
                }
            }
            return detail::finish_shape_stream(spec, samples);
        }
    }
    throw_error(ErrorCode::InvalidSpec, "unknown synthetic kind");
}

/// Time-ordered merge of two streams (stable: ties keep a's events first).
inline std::vector<Event> merge_streams(std::span<const Event> a, std::span<const Event> b) {
    std::vector<Event> out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (b[j].t < a[i].t) {
            out.push_back(b[j++]);
        } else {
            out.push_back(a[i++]);
        }
    }
    out.insert(out.end(), a.begin() + i, a.end());
    out.insert(out.end(), b.begin() + j, b.end());
    return out;
}

}  // namespace evk
