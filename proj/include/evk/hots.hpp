// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Time-surface features and gesture classification: per-event descriptors of
// linearly decayed neighborhood activity, online-clustered prototype banks,
// histogram signatures over a capture window, and k-nearest-neighbor voting.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evk/core.hpp"
#include "evk/filtering.hpp"

namespace evk {

/// Per-(pixel, polarity) most recent timestamps driving surface values.
using TimeSurfaceState = RecentEventIndex;

struct HotsConfig {
    std::uint32_t rho = 4;           ///< neighborhood radius, px
    std::uint64_t tau = 20000;       ///< linear decay constant, µs
    std::uint32_t prototype_count = 32;
    std::uint32_t k_nn = 3;          ///< vote size, odd
    double learning_rate = 1.0;      ///< α₀ of the 1/(1+n) clustering schedule
    std::uint64_t window_us = 2'000'000;  ///< capture window for one gesture

    void validate() const {
        if (rho < 1) throw_error(ErrorCode::InvalidArgument, "rho must be at least 1");
        if (tau == 0) throw_error(ErrorCode::InvalidArgument, "tau must be positive");
        if (prototype_count < 2) {
            throw_error(ErrorCode::InvalidArgument, "need at least 2 prototypes");
        }
        if (k_nn == 0 || k_nn % 2 == 0) {
            throw_error(ErrorCode::InvalidArgument, "k_nn must be odd");
        }
        if (learning_rate <= 0.0) {
            throw_error(ErrorCode::InvalidArgument, "learning rate must be positive");
        }
    }

    std::uint32_t side() const { return 2 * rho + 1; }
    std::size_t surface_cells() const { return std::size_t(side()) * side() * 2; }
};

// ---------------------------------------------------------------------------
// Time surfaces
// ---------------------------------------------------------------------------

/// Snapshot of decayed activity around one event: a (2ρ+1)×(2ρ+1) patch per
/// polarity channel, values in [0,1]. Layout is channel-major (OFF then ON),
/// row-major inside a channel.
struct TimeSurface {
    std::uint16_t center_x = 0;
    std::uint16_t center_y = 0;
    std::uint64_t t_ref = 0;
    std::uint32_t rho = 0;
    std::vector<double> values;

    static std::size_t cell_index(std::uint32_t rho, Polarity channel, std::uint32_t row,
                                  std::uint32_t col) {
        const std::size_t side = 2 * std::size_t(rho) + 1;
        return (static_cast<std::size_t>(channel) * side + row) * side + col;
    }

    double at(Polarity channel, std::int32_t dx, std::int32_t dy) const {
        return values[cell_index(rho, channel, std::uint32_t(dy + std::int32_t(rho)),
                                 std::uint32_t(dx + std::int32_t(rho)))];
    }
};

/// Builds the time surface of `e`, applying `e` to the state first so its own
/// cell reads exactly 1. Cells whose pixel never fired, fired τ or more ago,
/// or lies outside the frame read 0.
inline TimeSurface time_surface(TimeSurfaceState& state, const Event& e, std::uint32_t rho,
                                std::uint64_t tau) {
    state.record(e);
    const SensorGeometry geo = state.geometry();
    const std::int32_t r = static_cast<std::int32_t>(rho);

    TimeSurface surface;
    surface.center_x = e.x;
    surface.center_y = e.y;
    surface.t_ref = e.t;
    surface.rho = rho;
    surface.values.assign(std::size_t(2 * r + 1) * std::size_t(2 * r + 1) * 2, 0.0);

    std::size_t cell = 0;
    for (Polarity channel : {Polarity::Off, Polarity::On}) {
        for (std::int32_t dy = -r; dy <= r; ++dy) {
            const std::int32_t y = std::int32_t(e.y) + dy;
            for (std::int32_t dx = -r; dx <= r; ++dx, ++cell) {
                const std::int32_t x = std::int32_t(e.x) + dx;
                if (x < 0 || y < 0 || x >= std::int32_t(geo.width) ||
                    y >= std::int32_t(geo.height)) {
                    continue;
                }
                const std::uint64_t t_last = state.last_time(
                    static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), channel);
                if (t_last == kNeverFired || t_last > e.t) continue;
                const std::uint64_t age = e.t - t_last;
                if (age >= tau) continue;
                surface.values[cell] =
                    1.0 - static_cast<double>(age) / static_cast<double>(tau);
            }
        }
    }
    return surface;
}

inline TimeSurface time_surface(TimeSurfaceState& state, const Event& e,
                                const HotsConfig& config) {
    return time_surface(state, e, config.rho, config.tau);
}

// ---------------------------------------------------------------------------
// Prototype bank
// ---------------------------------------------------------------------------

struct PrototypeBank {
    std::uint32_t rho = 0;
    std::uint64_t tau = 0;
    std::vector<std::vector<double>> prototypes;
    std::vector<std::uint64_t> activation_counts;  ///< matches served
    std::vector<std::uint64_t> update_counts;      ///< training updates (n_j)

    std::size_t size() const { return prototypes.size(); }
    std::size_t cells() const {
        const std::size_t side = 2 * std::size_t(rho) + 1;
        return side * side * 2;
    }
};

struct MatchResult {
    std::size_t index = 0;
    double distance = 0.0;
};

namespace detail {

inline double surface_distance(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

inline MatchResult nearest_prototype(std::span<const double> values, const PrototypeBank& bank) {
    MatchResult best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < bank.prototypes.size(); ++j) {
        const double d = surface_distance(values, bank.prototypes[j]);
        if (d < best.distance) best = {j, d};  // ties keep the lowest index
    }
    return best;
}

}  // namespace detail

/// Nearest prototype by Euclidean distance (ties → lowest index); records the
/// activation on the bank.
inline MatchResult match_prototype(const TimeSurface& surface, PrototypeBank& bank) {
    if (bank.prototypes.empty() || surface.values.size() != bank.cells()) {
        throw_error(ErrorCode::InvalidArgument, "surface shape does not match bank");
    }
    const MatchResult match = detail::nearest_prototype(surface.values, bank);
    ++bank.activation_counts[match.index];
    return match;
}

/// Online clustering of time surfaces drawn from the training streams, in
/// stream order. The bank is seeded with the first K distinct surfaces; every
/// other surface pulls its nearest prototype toward it by α₀/(1 + n), n being
/// that prototype's update count. With α₀ = 1 a prototype is exactly the
/// running mean of the surfaces assigned to it. The seed parameter is
/// reserved for randomized initialization variants; this schedule is fully
/// deterministic and ignores it.
inline PrototypeBank learn_prototypes(std::span<const std::vector<Event>> training_streams,
                                      SensorGeometry geometry, const HotsConfig& config,
                                      std::uint64_t seed = 0) {
    config.validate();
    (void)seed;
    PrototypeBank bank;
    bank.rho = config.rho;
    bank.tau = config.tau;

    const std::uint32_t k = config.prototype_count;
    for (const std::vector<Event>& stream : training_streams) {
        TimeSurfaceState state(geometry);
        for (const Event& e : stream) {
            const TimeSurface surface = time_surface(state, e, config);
            if (bank.prototypes.size() < k) {
                const bool duplicate =
                    std::any_of(bank.prototypes.begin(), bank.prototypes.end(),
                                [&](const std::vector<double>& p) {
                                    return p == surface.values;
                                });
                if (!duplicate) {
                    bank.prototypes.push_back(surface.values);
                    bank.update_counts.push_back(1);
                    continue;
                }
            }
            const MatchResult match = detail::nearest_prototype(surface.values, bank);
            std::vector<double>& proto = bank.prototypes[match.index];
            const double alpha =
                config.learning_rate /
                (1.0 + static_cast<double>(bank.update_counts[match.index]));
            for (std::size_t i = 0; i < proto.size(); ++i) {
                proto[i] += alpha * (surface.values[i] - proto[i]);
            }
            ++bank.update_counts[match.index];
        }
    }
    if (bank.prototypes.size() < k) {
        throw_error(ErrorCode::InsufficientData,
                    "training yielded " + std::to_string(bank.prototypes.size()) +
                        " distinct surfaces, need " + std::to_string(k));
    }
    bank.activation_counts.assign(bank.prototypes.size(), 0);
    return bank;
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

struct GestureSignature {
    std::vector<std::uint64_t> histogram;

    std::uint64_t total() const {
        std::uint64_t sum = 0;
        for (std::uint64_t c : histogram) sum += c;
        return sum;
    }

    /// Histogram scaled to sum 1; all zeros when the histogram is empty.
    std::vector<double> normalized() const {
        std::vector<double> out(histogram.size(), 0.0);
        const std::uint64_t sum = total();
        if (sum == 0) return out;
        for (std::size_t i = 0; i < histogram.size(); ++i) {
            out[i] = static_cast<double>(histogram[i]) / static_cast<double>(sum);
        }
        return out;
    }

    friend bool operator==(const GestureSignature&, const GestureSignature&) = default;
};

/// Streaming histogram builder. Surface state and filter state persist across
/// added windows, so feeding one long window or the same events in pieces
/// produces the same histogram.
class SignatureAccumulator {
public:
    SignatureAccumulator(SensorGeometry geometry, PrototypeBank& bank, const HotsConfig& config,
                         const FilterConfig& filter = FilterConfig::none())
        : bank_(&bank), config_(config), state_(geometry), chain_(filter) {
        config.validate();
        histogram_.assign(bank.size(), 0);
    }

    void add(std::span<const Event> window) {
        for (const Event& e : window) {
            if (!chain_.keep(e)) continue;
            const TimeSurface surface = time_surface(state_, e, config_);
            ++histogram_[match_prototype(surface, *bank_).index];
            ++matched_;
        }
    }

    std::size_t matched_events() const { return matched_; }

    GestureSignature signature() const { return GestureSignature{histogram_}; }

private:
    PrototypeBank* bank_;
    HotsConfig config_;
    TimeSurfaceState state_;
    FilterChain chain_;
    std::vector<std::uint64_t> histogram_;
    std::size_t matched_ = 0;
};

struct SignatureResult {
    GestureSignature signature;
    double feature_seconds = 0.0;  ///< wall-clock spent filtering + matching
};

/// One-shot signature of a capture window: filter, build surfaces, match,
/// count. Fails with EmptyWindow when filtering leaves nothing to match.
inline SignatureResult signature(std::span<const Event> window, SensorGeometry geometry,
                                 PrototypeBank& bank, const HotsConfig& config,
                                 const FilterConfig& filter = FilterConfig::none()) {
    const auto begin = std::chrono::steady_clock::now();
    SignatureAccumulator acc(geometry, bank, config, filter);
    acc.add(window);
    const auto end = std::chrono::steady_clock::now();
    if (acc.matched_events() == 0) {
        throw_error(ErrorCode::EmptyWindow, "no events to match after filtering");
    }
    return {acc.signature(), std::chrono::duration<double>(end - begin).count()};
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct LabeledSignature {
    GestureSignature signature;
    std::string label;
};

struct Classification {
    std::string label;
    std::vector<double> neighbor_distances;  ///< ascending, k_nn entries
};

/// k-nearest-neighbor vote on normalized histograms (Euclidean distance).
/// A vote tie goes to the class of the nearest neighbor among tied classes.
inline Classification knn_classify(const GestureSignature& query,
                                   std::span<const LabeledSignature> training,
                                   std::uint32_t k_nn) {
    if (training.size() < k_nn || k_nn == 0) {
        throw_error(ErrorCode::NotEnoughTrainingData,
                    "need at least " + std::to_string(k_nn) + " training signatures");
    }
    const std::vector<double> q = query.normalized();

    struct Neighbor {
        double distance;
        std::size_t index;
    };
    std::vector<Neighbor> neighbors;
    neighbors.reserve(training.size());
    for (std::size_t i = 0; i < training.size(); ++i) {
        const std::vector<double> t = training[i].signature.normalized();
        if (t.size() != q.size()) {
            throw_error(ErrorCode::InvalidArgument, "signature lengths differ");
        }
        neighbors.push_back({detail::surface_distance(q, t), i});
    }
    std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    neighbors.resize(k_nn);

    std::map<std::string, std::uint32_t> votes;
    for (const Neighbor& n : neighbors) ++votes[training[n.index].label];
    std::uint32_t best_count = 0;
    for (const auto& [label, count] : votes) best_count = std::max(best_count, count);

    Classification out;
    for (const Neighbor& n : neighbors) {  // nearest tied class wins
        if (votes[training[n.index].label] == best_count) {
            out.label = training[n.index].label;
            break;
        }
    }
    for (const Neighbor& n : neighbors) out.neighbor_distances.push_back(n.distance);
    return out;
}

// ---------------------------------------------------------------------------
// Filtering-vs-accuracy study
// ---------------------------------------------------------------------------

struct LabeledStream {
    std::vector<Event> events;
    std::string label;
};

struct FilterAccuracyRow {
    FilterConfig filter;
    double kept_fraction = 0.0;
    double accuracy = 0.0;
};

/// For each filter level: filter the whole dataset, train a fresh bank on the
/// filtered training streams, classify the filtered test streams, and report
/// the fraction of events kept alongside the resulting accuracy.
inline std::vector<FilterAccuracyRow> accuracy_vs_filtering(
    std::span<const LabeledStream> train, std::span<const LabeledStream> test,
    SensorGeometry geometry, std::span<const FilterConfig> filter_levels,
    const HotsConfig& config, std::uint64_t seed = 0) {
    config.validate();
    std::vector<FilterAccuracyRow> table;
    table.reserve(filter_levels.size());
    for (const FilterConfig& level : filter_levels) {
        std::size_t raw = 0;
        std::size_t kept = 0;
        std::vector<std::vector<Event>> train_filtered;
        train_filtered.reserve(train.size());
        for (const LabeledStream& s : train) {
            FilteredStream f = apply_chain(s.events, level);
            raw += f.stats.input_count;
            kept += f.stats.output_count;
            train_filtered.push_back(std::move(f.events));
        }
        PrototypeBank bank = learn_prototypes(train_filtered, geometry, config, seed);

        std::vector<LabeledSignature> references;
        references.reserve(train.size());
        for (std::size_t i = 0; i < train_filtered.size(); ++i) {
            references.push_back(
                {signature(train_filtered[i], geometry, bank, config).signature,
                 train[i].label});
        }

        std::size_t correct = 0;
        for (const LabeledStream& s : test) {
            FilteredStream f = apply_chain(s.events, level);
            raw += f.stats.input_count;
            kept += f.stats.output_count;
            const SignatureResult sig = signature(f.events, geometry, bank, config);
            if (knn_classify(sig.signature, references, config.k_nn).label == s.label) {
                ++correct;
            }
        }
        FilterAccuracyRow row;
        row.filter = level;
        row.kept_fraction = raw > 0 ? static_cast<double>(kept) / static_cast<double>(raw) : 1.0;
        row.accuracy =
            test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
        table.push_back(std::move(row));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr std::array<std::uint8_t, 4> kBankMagic = {'H', 'O', 'T', 'S'};

/// Bank file layout, little-endian: "HOTS", K (u32), ρ (u32), τ (u64), then
/// K·(2ρ+1)²·2 IEEE-754 doubles in prototype order, channel-major cells.
inline std::vector<std::uint8_t> encode_prototype_bank(const PrototypeBank& bank) {
    if (bank.prototypes.empty()) {
        throw_error(ErrorCode::InvalidArgument, "refusing to encode an empty bank");
    }
    std::vector<std::uint8_t> out;
    out.reserve(20 + bank.size() * bank.cells() * 8);
    for (std::uint8_t byte : kBankMagic) out.push_back(byte);
    detail::put_u32(out, static_cast<std::uint32_t>(bank.size()));
    detail::put_u32(out, bank.rho);
    detail::put_u64(out, bank.tau);
    for (const std::vector<double>& proto : bank.prototypes) {
        if (proto.size() != bank.cells()) {
            throw_error(ErrorCode::InvalidArgument, "prototype shape does not match rho");
        }
        for (double v : proto) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline PrototypeBank decode_prototype_bank(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kHeaderBytes = 20;  // magic + K + ρ + τ
    if (bytes.size() < kHeaderBytes) {
        throw_error(ErrorCode::Truncated, "bank file shorter than its header");
    }
    if (!std::equal(kBankMagic.begin(), kBankMagic.end(), bytes.begin())) {
        throw_error(ErrorCode::BadMagic, "not a prototype bank file");
    }
    PrototypeBank bank;
    const std::uint32_t k = detail::get_u32(bytes.data() + 4);
    bank.rho = detail::get_u32(bytes.data() + 8);
    bank.tau = detail::get_u64(bytes.data() + 12);
    if (k == 0 || bank.rho == 0 || bank.tau == 0) {
        throw_error(ErrorCode::Malformed, "bank header values out of range");
    }
    const std::size_t cells = bank.cells();
    const std::size_t expected = kHeaderBytes + std::size_t(k) * cells * 8;
    if (bytes.size() < expected) {
        throw_error(ErrorCode::Truncated, "bank file ends mid-prototype");
    }
    if (bytes.size() > expected) {
        throw_error(ErrorCode::CountMismatch, "bank file has trailing bytes");
    }
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    bank.prototypes.assign(k, std::vector<double>(cells));
    for (std::uint32_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < cells; ++i, p += 8) {
            const double v = std::bit_cast<double>(detail::get_u64(p));
            if (!std::isfinite(v)) {
                throw_error(ErrorCode::Malformed, "bank contains non-finite values");
            }
            bank.prototypes[j][i] = v;
        }
    }
    bank.activation_counts.assign(k, 0);
    bank.update_counts.assign(k, 0);
    return bank;
}

inline void save_prototype_bank(const std::string& path, const PrototypeBank& bank) {
    const std::vector<std::uint8_t> bytes = encode_prototype_bank(bank);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorCode::Io, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_error(ErrorCode::Io, "failed writing " + path);
}

inline PrototypeBank load_prototype_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCode::Io, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw_error(ErrorCode::Io, "failed reading " + path);
    return decode_prototype_bank(bytes);
}

inline std::vector<LabeledSignature> signatures_from_csv(const std::string& text) {
    std::vector<LabeledSignature> out;
    std::size_t pos = 0;
    bool header = true;
    std::size_t expected_cells = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("label", 0) != 0) {
                throw_error(ErrorCode::Parse, "signature CSV must start with a label header");
            }
            expected_cells = static_cast<std::size_t>(
                std::count(line.begin(), line.end(), ','));
            continue;
        }
        LabeledSignature sig;
        std::size_t field_start = 0;
        std::size_t field = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i != line.size() && line[i] != ',') continue;
            const std::string token = line.substr(field_start, i - field_start);
            if (field == 0) {
                if (token.empty()) throw_error(ErrorCode::Parse, "empty label in signature CSV");
                sig.label = token;
            } else {
                try {
                    sig.signature.histogram.push_back(std::stoull(token));
                } catch (const std::exception&) {
                    throw_error(ErrorCode::Parse, "bad histogram count '" + token + "'");
                }
            }
            field_start = i + 1;
            ++field;
        }
        if (sig.signature.histogram.size() != expected_cells) {
            throw_error(ErrorCode::Parse, "signature row width does not match header");
        }
        out.push_back(std::move(sig));
    }
    return out;
}

/// One CSV row per signature: label, then raw histogram counts.
inline std::string signatures_to_csv(std::span<const LabeledSignature> signatures) {
    std::string out = "label";
    const std::size_t k = signatures.empty() ? 0 : signatures.front().signature.histogram.size();
    for (std::size_t i = 0; i < k; ++i) out += ",h" + std::to_string(i);
    out += '\n';
    for (const LabeledSignature& s : signatures) {
        out += s.label;
        for (std::uint64_t c : s.signature.histogram) out += ',' + std::to_string(c);
        out += '\n';
    }
    return out;
}

}  // namespace evk
