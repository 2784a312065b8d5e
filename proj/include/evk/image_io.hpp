// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal binary image export: PGM (P5) for grayscale frames and live-view
// bitmaps, PPM (P6) for flow fields colored by direction.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evk/core.hpp"
#include "evk/flow.hpp"

namespace evk {

namespace detail {
inline std::string pnm_header(std::string_view magic, SensorGeometry geometry) {
    return std::string(magic) + "\n" + std::to_string(geometry.width) + " " +
           std::to_string(geometry.height) + "\n255\n";
}
}  // namespace detail

/// Grayscale frame in [0,1] to binary PGM, maxval 255, rounding half-up.
inline std::string pgm_from_frame(const PixelMap<double>& frame) {
    std::string out = detail::pnm_header("P5", frame.geometry());
    out.reserve(out.size() + frame.geometry().pixel_count());
    for (double v : frame) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        out.push_back(static_cast<char>(
            static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5))));
    }
    return out;
}

/// Binary bitmap to PGM: set pixels become 255, clear pixels 0.
inline std::string pgm_from_mask(const PixelMap<std::uint8_t>& mask) {
    std::string out = detail::pnm_header("P5", mask.geometry());
    out.reserve(out.size() + mask.geometry().pixel_count());
    for (std::uint8_t v : mask) out.push_back(static_cast<char>(v ? 255 : 0));
    return out;
}

/// HSV with hue in degrees (0° = red), s and v in [0,1], to 8-bit RGB.
inline std::array<std::uint8_t, 3> hsv_to_rgb(double h_deg, double s, double v) {
    h_deg = std::fmod(h_deg, 360.0);
    if (h_deg < 0.0) h_deg += 360.0;
    s = std::clamp(s, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double c = v * s;
    const double hp = h_deg / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0.0, g = 0.0, b = 0.0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    const auto to_byte = [m](double channel) {
        return static_cast<std::uint8_t>(std::floor((channel + m) * 255.0 + 0.5));
    };
    return {to_byte(r), to_byte(g), to_byte(b)};
}

/// One flow frame per batch as binary PPM: each event with a usable vector
/// paints its pixel with direction as hue (0° = motion along +x = red) and
/// speed as value, normalized by the batch's 95th-percentile speed. Prefers
/// the aperture-corrected vector, falling back to plain normal flow. Later
/// events overwrite earlier ones at the same pixel.
inline std::string ppm_from_flow(std::span<const Event> batch,
                                 std::span<const FlowRecord> records,
                                 SensorGeometry geometry) {
    if (batch.size() != records.size()) {
        throw_error(ErrorCode::InvalidArgument, "one flow record per event required");
    }
    const auto pick = [](const FlowRecord& r) -> const FlowVector* {
        if (r.arms) return &*r.arms;
        if (r.local && !r.local_outlier) return &*r.local;
        return nullptr;
    };

    std::vector<double> speeds;
    speeds.reserve(records.size());
    for (const FlowRecord& r : records) {
        if (const FlowVector* v = pick(r); v && v->speed > 0.0) speeds.push_back(v->speed);
    }
    double norm = 0.0;
    if (!speeds.empty()) {
        const std::size_t rank = (speeds.size() * 95 + 99) / 100;  // ceil, nearest-rank
        auto nth = speeds.begin() + static_cast<std::ptrdiff_t>(rank - 1);
        std::nth_element(speeds.begin(), nth, speeds.end());
        norm = *nth;
    }

    std::vector<std::array<std::uint8_t, 3>> pixels(geometry.pixel_count(), {0, 0, 0});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const FlowVector* v = pick(records[i]);
        if (!v || v->speed <= 0.0 || norm <= 0.0) continue;
        const double hue = std::atan2(v->vy, v->vx) * 180.0 / 3.14159265358979323846;
        const double value = std::min(1.0, v->speed / norm);
        pixels[std::size_t(batch[i].y) * geometry.width + batch[i].x] =
            hsv_to_rgb(hue, 1.0, value);
    }

    std::string out = detail::pnm_header("P6", geometry);
    out.reserve(out.size() + pixels.size() * 3);
    for (const auto& rgb : pixels) {
        out.push_back(static_cast<char>(rgb[0]));
        out.push_back(static_cast<char>(rgb[1]));
        out.push_back(static_cast<char>(rgb[2]));
    }
    return out;
}

inline void write_binary_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorCode::Io, "cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_error(ErrorCode::Io, "failed writing " + path);
}

}  // namespace evk
