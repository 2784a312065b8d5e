// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// evk — command-line front end: synthesis, inspection, filtering, optical
// flow, gesture training/classification, voxel grids, reconstruction and the
// latency benchmark, over the shared event-file formats.

#include <algorithm>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evk/evkit.hpp"

namespace {

struct GlobalOptions {
    std::string geometry = "304x240";
    std::uint64_t seed = 1;
    std::size_t buffer_size = 5000;
    bool single_thread = false;
    std::string buffer_model = "paper";

    evk::SensorGeometry parse_geometry() const {
        unsigned w = 0, h = 0;
        char tail = 0;
        if (std::sscanf(geometry.c_str(), "%ux%u%c", &w, &h, &tail) != 2 || w == 0 || h == 0 ||
            w > 0xffff || h > 0xffff) {
            evk::throw_error(evk::ErrorCode::InvalidArgument,
                             "geometry must be WxH, got '" + geometry + "'");
        }
        return {static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h)};
    }
};

std::string g_sidecar_path;  // effective-config echo target, set by subcommands

void add_global_options(CLI::App& app, GlobalOptions& global) {
    app.add_option("--geometry", global.geometry, "Sensor size as WxH")->capture_default_str();
    app.add_option("--seed", global.seed, "Seed for every random choice")
        ->capture_default_str();
    app.add_option("--buffer-size", global.buffer_size, "Events per processing batch (N)")
        ->capture_default_str();
    app.add_flag("--single-thread", global.single_thread,
                 "Run pipelines on one thread, stages round-robin");
    app.add_option("--buffer-model", global.buffer_model,
                   "Buffer latency accounting: N/R (paper) or N/2R (mean-wait)")
        ->check(CLI::IsMember({"paper", "mean-wait"}))
        ->capture_default_str();
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

double safe_rate(std::span<const evk::Event> events) {
    if (events.size() < 2 || events.back().t == events.front().t) return 0.0;
    return evk::compute_event_rate(events).events_per_second;
}

double stream_duration_s(std::span<const evk::Event> events) {
    if (events.empty()) return 0.0;
    return static_cast<double>(events.back().t - events.front().t) / evk::kMicrosPerSecond;
}

std::string label_from_path(const std::string& path) {
    const std::string stem = std::filesystem::path(path).stem().string();
    const std::size_t cut = stem.find('_');
    return cut == std::string::npos ? stem : stem.substr(0, cut);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) evk::throw_error(evk::ErrorCode::Io, "cannot open " + path + " for writing");
    out << text;
    if (!out) evk::throw_error(evk::ErrorCode::Io, "failed writing " + path);
}

/// Filter flags shared by the commands that run the pre-processing chain.
struct FilterFlags {
    std::uint64_t refractory_us = 0;
    std::uint32_t st_radius = 0;
    std::uint64_t st_window_us = 0;
    std::vector<std::string> hot_pixels;

    void add_to(CLI::App& cmd, std::uint64_t default_refractory = 0,
                std::uint32_t default_radius = 0, std::uint64_t default_window = 0) {
        refractory_us = default_refractory;
        st_radius = default_radius;
        st_window_us = default_window;
        cmd.add_option("--refractory-us", refractory_us,
                       "Per-pixel dead time in µs (0 = off)")
            ->capture_default_str();
        cmd.add_option("--st-radius", st_radius,
                       "Neighborhood radius of the support filter (0 = off)")
            ->capture_default_str();
        cmd.add_option("--st-window-us", st_window_us,
                       "Support window in µs (0 = off)")
            ->capture_default_str();
        cmd.add_option("--hot", hot_pixels, "Hot pixel to mask, as x,y (repeatable)");
    }

    evk::FilterConfig config() const {
        evk::FilterConfig cfg;
        cfg.refractory_us = refractory_us;
        cfg.st_radius = st_radius;
        cfg.st_window_us = st_window_us;
        for (const std::string& spec : hot_pixels) {
            unsigned x = 0, y = 0;
            char tail = 0;
            if (std::sscanf(spec.c_str(), "%u,%u%c", &x, &y, &tail) != 2 || x > 0xffff ||
                y > 0xffff) {
                evk::throw_error(evk::ErrorCode::InvalidArgument,
                                 "hot pixel must be x,y, got '" + spec + "'");
            }
            cfg.hot_pixels.emplace_back(static_cast<std::uint16_t>(x),
                                        static_cast<std::uint16_t>(y));
        }
        return cfg;
    }
};

struct FlowFlags {
    std::uint32_t fit_radius = 3;
    std::uint64_t fit_window_us = 20000;
    std::size_t min_support = 5;
    std::vector<std::uint32_t> scales = {3, 5, 7, 9, 11};
    double max_speed = 1e6;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--fit-radius", fit_radius, "Plane-fit neighborhood radius, px")
            ->capture_default_str();
        cmd.add_option("--fit-window-us", fit_window_us, "Plane-fit time window, µs")
            ->capture_default_str();
        cmd.add_option("--min-support", min_support, "Minimum pixels per fit")
            ->capture_default_str();
        cmd.add_option("--scales", scales, "Correction scale set, ascending px radii")
            ->delimiter(',')
            ->capture_default_str();
        cmd.add_option("--max-speed", max_speed, "Outlier speed cap, px/s")
            ->capture_default_str();
    }

    evk::FlowConfig config() const {
        evk::FlowConfig cfg;
        cfg.fit_radius = fit_radius;
        cfg.fit_window_us = fit_window_us;
        cfg.min_support = min_support;
        cfg.scale_set = scales;
        cfg.max_speed = max_speed;
        cfg.validate();
        return cfg;
    }
};

struct HotsFlags {
    std::uint32_t rho = 4;
    std::uint64_t tau_us = 20000;
    std::uint32_t prototypes = 32;
    std::uint32_t k_nn = 3;
    double learning_rate = 1.0;
    std::uint64_t window_us = 2'000'000;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--rho", rho, "Time-surface radius, px")->capture_default_str();
        cmd.add_option("--tau-us", tau_us, "Time-surface decay constant, µs")
            ->capture_default_str();
        cmd.add_option("--prototypes", prototypes, "Prototype count (K)")
            ->capture_default_str();
        cmd.add_option("--knn", k_nn, "Vote size for classification (odd)")
            ->capture_default_str();
        cmd.add_option("--learning-rate", learning_rate, "Clustering rate α₀")
            ->capture_default_str();
        cmd.add_option("--window-us", window_us, "Capture window per gesture, µs (0 = all)")
            ->capture_default_str();
    }

    evk::HotsConfig config() const {
        evk::HotsConfig cfg;
        cfg.rho = rho;
        cfg.tau = tau_us;
        cfg.prototype_count = prototypes;
        cfg.k_nn = k_nn;
        cfg.learning_rate = learning_rate;
        cfg.window_us = window_us;
        cfg.validate();
        return cfg;
    }
};

/// Runs the staged pipeline over an event file with the chosen processor,
/// honoring --single-thread and --buffer-size; exports the live view if asked.
evk::PipelineRun run_file_pipeline(const std::string& input, const GlobalOptions& global,
                                   const evk::FilterConfig& filter,
                                   evk::BatchAlgorithm& processor,
                                   const std::string& liveview_path) {
    evk::PipelineOptions options;
    options.filter = filter;
    options.batch_size = global.buffer_size;
    options.single_thread = global.single_thread;
    options.geometry = global.parse_geometry();

    std::unique_ptr<evk::PacketSource> source;
    if (evk::format_for_path(input) == evk::StreamFormat::PacketBinary) {
        source = std::make_unique<evk::FilePacketSource>(input);
    } else {
        source = std::make_unique<evk::MemoryPacketSource>(evk::read_stream(input).events);
    }
    evk::LiveView view(options.geometry, options.liveview_decay_us);
    const evk::PipelineRun run = evk::run_pipeline(*source, processor, options, &view);
    if (!liveview_path.empty()) {
        // Snapshot at the newest event time so the final activity is visible.
        evk::write_binary_file(liveview_path,
                               evk::pgm_from_mask(view.snapshot(view.newest_time())));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string kind;
    double vx = 0.0, vy = 0.0;
    double rate = 100000.0;
    double duration = 1.0;
    std::uint32_t bar_length = 60, bar_width = 4;
    double bar_angle = 90.0;
    std::uint32_t blob_radius = 8;
    std::int32_t start_x = -1, start_y = -1;
    std::uint32_t burst_count = 1;
    std::uint64_t burst_spacing_us = 300;
    std::string output;
};

void cmd_synth(const GlobalOptions& global, const SynthArgs& args) {
    evk::SyntheticSpec spec;
    if (args.kind == "bar") {
        spec.kind = evk::SyntheticKind::TranslatingBar;
    } else if (args.kind == "blob") {
        spec.kind = evk::SyntheticKind::MovingBlob;
    } else if (args.kind == "noise") {
        spec.kind = evk::SyntheticKind::PoissonNoise;
    } else {
        evk::throw_error(evk::ErrorCode::InvalidArgument,
                         "kind must be bar, blob or noise, got '" + args.kind + "'");
    }
    spec.geometry = global.parse_geometry();
    spec.vx = args.vx;
    spec.vy = args.vy;
    spec.rate = args.rate;
    spec.duration_s = args.duration;
    spec.seed = global.seed;
    spec.bar_length = args.bar_length;
    spec.bar_width = args.bar_width;
    spec.bar_angle_deg = args.bar_angle;
    spec.blob_radius = args.blob_radius;
    spec.start_x = args.start_x;
    spec.start_y = args.start_y;
    spec.burst_count = args.burst_count;
    spec.burst_spacing_us = args.burst_spacing_us;

    const evk::SyntheticStream stream = evk::synthesize(spec);
    evk::write_stream(args.output, stream.events, evk::format_for_path(args.output));
    std::printf("synth kind=%s events=%zu rate=%.6g ev/s duration=%.6g s file=%s\n",
                args.kind.c_str(), stream.events.size(), safe_rate(stream.events),
                stream_duration_s(stream.events), args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

void cmd_info(const GlobalOptions& global, const std::string& input) {
    const evk::StreamData data = evk::read_stream(input);
    const evk::SensorGeometry geometry = global.parse_geometry();
    const evk::ValidationReport report = evk::validate_stream(data.events, geometry);
    std::printf(
        "info file=%s geometry=%ux%u events=%zu packets=%zu duration=%.6g s rate=%.6g ev/s "
        "violations=%zu\n",
        input.c_str(), geometry.width, geometry.height, data.events.size(),
        data.packet_boundaries.size(), stream_duration_s(data.events), safe_rate(data.events),
        report.violations.size());
}

struct FilterArgs {
    std::string input;
    std::string output;
    FilterFlags flags;
    double auto_hot_rate = 0.0;
};

void cmd_filter(const GlobalOptions& global, const FilterArgs& args) {
    evk::StreamData data = evk::read_stream(args.input);
    evk::FilterConfig config = args.flags.config();
    if (args.auto_hot_rate > 0.0) {
        const auto detected =
            evk::detect_hot_pixels(data.events, global.parse_geometry(), args.auto_hot_rate);
        config.hot_pixels.insert(config.hot_pixels.end(), detected.begin(), detected.end());
    }
    const evk::FilteredStream filtered = evk::apply_chain(data.events, config);
    evk::write_stream(args.output, filtered.events, evk::format_for_path(args.output));
    std::printf(
        "filter in=%zu out=%zu removed_hot=%zu removed_refractory=%zu removed_support=%zu "
        "kept=%.4f file=%s\n",
        filtered.stats.input_count, filtered.stats.output_count,
        filtered.stats.removed_hot_pixel, filtered.stats.removed_refractory,
        filtered.stats.removed_spatiotemporal,
        filtered.stats.input_count
            ? double(filtered.stats.output_count) / double(filtered.stats.input_count)
            : 1.0,
        args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

struct FlowArgs {
    std::string input;
    std::string output;
    std::string ppm_dir;
    std::string liveview;
    FilterFlags filter;
    FlowFlags flow;
};

/// Streams per-event flow rows to CSV and (optionally) one PPM per batch.
class FlowCollector final : public evk::BatchAlgorithm {
public:
    FlowCollector(evk::SensorGeometry geometry, evk::FlowConfig config, std::ostream& csv,
                  std::string ppm_dir)
        : config_(std::move(config)),
          state_(geometry),
          csv_(csv),
          ppm_dir_(std::move(ppm_dir)) {
        csv_ << "t_us,x,y,local_vx,local_vy,local_speed,arms_vx,arms_vy,arms_speed,arms_scale\n";
    }

    std::string_view name() const override { return "flow"; }
    void reset() override { state_.clear(); }

    void process(std::span<const evk::Event> batch) override {
        const evk::FlowBatchResult result = evk::flow_batch(batch, state_, config_);
        stats_accumulate(result.stats);
        char line[256];
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const evk::Event& e = batch[i];
            const evk::FlowRecord& r = result.records[i];
            csv_ << e.t << ',' << e.x << ',' << e.y;
            if (r.local) {
                std::snprintf(line, sizeof line, ",%.9g,%.9g,%.9g", r.local->vx, r.local->vy,
                              r.local->speed);
                csv_ << line;
            } else {
                csv_ << ",,,";
            }
            if (r.arms) {
                std::snprintf(line, sizeof line, ",%.9g,%.9g,%.9g,%u", r.arms->vx, r.arms->vy,
                              r.arms->speed, r.arms->scale);
                csv_ << line;
            } else {
                csv_ << ",,,,";
            }
            csv_ << '\n';
        }
        if (!ppm_dir_.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "flow_%06zu.ppm", batch_index_);
            evk::write_binary_file(
                (std::filesystem::path(ppm_dir_) / name).string(),
                evk::ppm_from_flow(batch, result.records, state_.geometry()));
        }
        ++batch_index_;
    }

    const evk::FlowBatchStats& stats() const { return stats_; }

private:
    void stats_accumulate(const evk::FlowBatchStats& s) {
        stats_.events += s.events;
        stats_.local_ok += s.local_ok;
        stats_.local_insufficient += s.local_insufficient;
        stats_.local_degenerate += s.local_degenerate;
        stats_.local_outliers += s.local_outliers;
        stats_.arms_ok += s.arms_ok;
        stats_.arms_no_flows += s.arms_no_flows;
    }

    evk::FlowConfig config_;
    evk::FlowState state_;
    std::ostream& csv_;
    std::string ppm_dir_;
    std::size_t batch_index_ = 0;
    evk::FlowBatchStats stats_;
};

void cmd_flow(const GlobalOptions& global, const FlowArgs& args) {
    if (!args.ppm_dir.empty()) std::filesystem::create_directories(args.ppm_dir);
    std::ofstream csv(args.output, std::ios::binary);
    if (!csv) evk::throw_error(evk::ErrorCode::Io, "cannot open " + args.output);

    FlowCollector collector(global.parse_geometry(), args.flow.config(), csv, args.ppm_dir);
    const evk::PipelineRun run = run_file_pipeline(args.input, global, args.filter.config(),
                                                   collector, args.liveview);
    csv.flush();
    if (!csv) evk::throw_error(evk::ErrorCode::Io, "failed writing " + args.output);
    std::printf(
        "flow events=%zu batches=%zu local_ok=%zu arms_ok=%zu outliers=%zu "
        "process_s=%.4f file=%s\n",
        collector.stats().events, run.batches_emitted + (run.partial_batch_delivered ? 1 : 0),
        collector.stats().local_ok, collector.stats().arms_ok,
        collector.stats().local_outliers, run.process_seconds, args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

struct TrainArgs {
    std::vector<std::string> inputs;
    std::string output;
    FilterFlags filter;
    HotsFlags hots;
};

void cmd_gesture_train(const GlobalOptions& global, const TrainArgs& args) {
    const evk::SensorGeometry geometry = global.parse_geometry();
    const evk::HotsConfig config = args.hots.config();
    const evk::FilterConfig filter = args.filter.config();

    std::vector<std::vector<evk::Event>> streams;
    std::vector<std::string> labels;
    streams.reserve(args.inputs.size());
    for (const std::string& path : args.inputs) {
        streams.push_back(evk::apply_chain(evk::read_stream(path).events, filter).events);
        labels.push_back(label_from_path(path));
    }
    evk::PrototypeBank bank = evk::learn_prototypes(streams, geometry, config, global.seed);

    std::vector<evk::LabeledSignature> signatures;
    signatures.reserve(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) {
        signatures.push_back(
            {evk::signature(streams[i], geometry, bank, config).signature, labels[i]});
    }
    evk::save_prototype_bank(args.output, bank);
    write_text_file(args.output + ".signatures.csv", evk::signatures_to_csv(signatures));

    std::map<std::string, std::size_t> per_label;
    for (const std::string& l : labels) ++per_label[l];
    std::string label_list;
    for (const auto& [l, n] : per_label) {
        label_list += (label_list.empty() ? "" : " ") + l + ":" + std::to_string(n);
    }
    std::printf("gesture-train streams=%zu prototypes=%zu labels=[%s] bank=%s\n",
                streams.size(), bank.size(), label_list.c_str(), args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

struct ClassifyArgs {
    std::string input;
    std::string bank;
    std::string signatures;
    FilterFlags filter;
    HotsFlags hots;
};

void cmd_gesture_classify(const GlobalOptions& global, const ClassifyArgs& args) {
    const evk::SensorGeometry geometry = global.parse_geometry();
    evk::PrototypeBank bank = evk::load_prototype_bank(args.bank);
    evk::HotsConfig config = args.hots.config();
    config.rho = bank.rho;  // the bank pins the surface shape it was built with
    config.tau = bank.tau;

    const std::string sig_path =
        args.signatures.empty() ? args.bank + ".signatures.csv" : args.signatures;
    std::ifstream sig_in(sig_path, std::ios::binary);
    if (!sig_in) evk::throw_error(evk::ErrorCode::Io, "cannot open " + sig_path);
    const std::string sig_text((std::istreambuf_iterator<char>(sig_in)),
                               std::istreambuf_iterator<char>());
    const std::vector<evk::LabeledSignature> training = evk::signatures_from_csv(sig_text);

    std::vector<evk::Event> events = evk::read_stream(args.input).events;
    if (config.window_us > 0 && !events.empty()) {
        const std::uint64_t cutoff = events.front().t + config.window_us;
        events.erase(std::find_if(events.begin(), events.end(),
                                  [cutoff](const evk::Event& e) { return e.t > cutoff; }),
                     events.end());
    }
    const evk::SignatureResult sig =
        evk::signature(events, geometry, bank, config, args.filter.config());
    const evk::Classification result = evk::knn_classify(sig.signature, training, config.k_nn);

    std::map<std::string, double> per_class;
    const std::vector<double> query = sig.signature.normalized();
    for (const evk::LabeledSignature& t : training) {
        const double d = [&] {
            const std::vector<double> tn = t.signature.normalized();
            double sq = 0.0;
            for (std::size_t i = 0; i < tn.size(); ++i) {
                sq += (query[i] - tn[i]) * (query[i] - tn[i]);
            }
            return std::sqrt(sq);
        }();
        const auto it = per_class.find(t.label);
        if (it == per_class.end() || d < it->second) per_class[t.label] = d;
    }
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [label, d] : per_class) ranked.emplace_back(d, label);
    std::sort(ranked.begin(), ranked.end());

    std::printf("label=%s matched_events=%" PRIu64 " feature_s=%.4f\n", result.label.c_str(),
                sig.signature.total(), sig.feature_seconds);
    for (const auto& [d, label] : ranked) {
        std::printf("distance[%s]=%.6f\n", label.c_str(), d);
    }
}

struct VoxelArgs {
    std::string input;
    std::string output;
    std::string csv;
    std::uint32_t bins = 5;
};

void cmd_voxel(const GlobalOptions& global, const VoxelArgs& args) {
    const evk::StreamData data = evk::read_stream(args.input);
    const evk::VoxelGrid grid =
        evk::voxel_grid(data.events, args.bins, global.parse_geometry());

    const evk::PixelMap<double> mass = grid.collapsed();
    double peak = 0.0;
    for (double v : mass) peak = std::max(peak, std::abs(v));
    evk::PixelMap<double> frame(mass.geometry(), 0.5);
    if (peak > 0.0) {
        for (std::uint16_t y = 0; y < mass.geometry().height; ++y) {
            for (std::uint16_t x = 0; x < mass.geometry().width; ++x) {
                frame.at(x, y) = 0.5 + 0.5 * mass.at(x, y) / peak;
            }
        }
    }
    evk::write_binary_file(args.output, evk::pgm_from_frame(frame));

    if (!args.csv.empty()) {
        std::ofstream out(args.csv, std::ios::binary);
        if (!out) evk::throw_error(evk::ErrorCode::Io, "cannot open " + args.csv);
        out << "bin,y,x,value\n";
        char line[128];
        for (std::uint32_t b = 0; b < grid.bins; ++b) {
            for (std::uint16_t y = 0; y < grid.geometry.height; ++y) {
                for (std::uint16_t x = 0; x < grid.geometry.width; ++x) {
                    const double v = grid.at(b, x, y);
                    if (v == 0.0) continue;
                    std::snprintf(line, sizeof line, "%u,%u,%u,%.9g\n", b, y, x, v);
                    out << line;
                }
            }
        }
        if (!out) evk::throw_error(evk::ErrorCode::Io, "failed writing " + args.csv);
    }
    std::printf("voxel bins=%u events=%zu signed_mass=%.6g span_us=%" PRIu64 " file=%s\n",
                grid.bins, data.events.size(), grid.signed_mass(), grid.t_end - grid.t_start,
                args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

struct RenderArgs {
    std::string input;
    std::string out_dir;
    std::string liveview;
    FilterFlags filter;
    std::uint32_t bins = 5;
    double decay = 0.8;
    double gain = 0.1;
};

/// Reconstructs one grayscale frame per batch into out_dir.
class RenderCollector final : public evk::BatchAlgorithm {
public:
    RenderCollector(evk::SensorGeometry geometry, std::uint32_t bins, double decay, double gain,
                    std::string out_dir)
        : geometry_(geometry),
          bins_(bins),
          decay_(decay),
          gain_(gain),
          backend_(decay, gain),
          out_dir_(std::move(out_dir)) {}

    std::string_view name() const override { return "reconstruct"; }
    void reset() override { backend_ = evk::LeakyIntegratorBackend(decay_, gain_); }

    void process(std::span<const evk::Event> batch) override {
        if (batch.empty()) return;
        const evk::VoxelGrid grid = evk::voxel_grid(batch, bins_, geometry_);
        const evk::PixelMap<double> frame = evk::reconstruct(backend_, grid);
        char name[64];
        std::snprintf(name, sizeof name, "frame_%06zu.pgm", frames_);
        evk::write_binary_file((std::filesystem::path(out_dir_) / name).string(),
                               evk::pgm_from_frame(frame));
        ++frames_;
    }

    std::size_t frames() const { return frames_; }

private:
    evk::SensorGeometry geometry_;
    std::uint32_t bins_;
    double decay_;
    double gain_;
    evk::LeakyIntegratorBackend backend_;
    std::string out_dir_;
    std::size_t frames_ = 0;
};

void cmd_render(const GlobalOptions& global, const RenderArgs& args) {
    std::filesystem::create_directories(args.out_dir);
    RenderCollector collector(global.parse_geometry(), args.bins, args.decay, args.gain,
                              args.out_dir);
    const evk::PipelineRun run = run_file_pipeline(args.input, global, args.filter.config(),
                                                   collector, args.liveview);
    std::printf("render frames=%zu events=%zu batches=%zu dir=%s\n", collector.frames(),
                run.events_filtered, run.batches_emitted, args.out_dir.c_str());
    g_sidecar_path = (std::filesystem::path(args.out_dir) / "render.effective.ini").string();
}

struct BenchArgs {
    std::string input;
    std::string output;
    std::string algorithm = "flow";
    std::vector<double> rates = {365600.0};
    std::vector<std::size_t> batch_sizes = {100, 500, 1000, 5000, 20000, 100000};
    std::size_t repetitions = 7;
    std::size_t warmup = 3;
    double t_transfer_us = 910.0;
    double t_decode_us = 500.0;
    double t_filter_us = 230.0;
    double n_packet = 1024.0;
    FlowFlags flow;
    HotsFlags hots;
    std::uint32_t bins = 5;
};

void cmd_bench(const GlobalOptions& global, const BenchArgs& args) {
    const evk::StreamData data = evk::read_stream(args.input);
    const std::unique_ptr<evk::BatchAlgorithm> algorithm =
        evk::make_algorithm(args.algorithm, global.parse_geometry(), args.flow.config(),
                            args.hots.config(), args.bins, global.seed);
    evk::CameraCost cost;
    cost.t_transfer = args.t_transfer_us * 1e-6;
    cost.t_decode = args.t_decode_us * 1e-6;
    cost.t_filter = args.t_filter_us * 1e-6;
    cost.n_packet = args.n_packet;
    const evk::BufferModel model = evk::parse_buffer_model(global.buffer_model);

    const evk::ExecProfile profile = evk::measure_exec_profile(
        *algorithm, data.events, args.batch_sizes, args.repetitions, args.warmup);
    const std::vector<evk::LatencyBreakdown> table =
        evk::sweep_profile(profile, args.rates, cost, model);
    write_text_file(args.output, evk::latency_table_csv(table));

    for (double rate : args.rates) {
        const evk::LatencyBreakdown* best = nullptr;
        for (const evk::LatencyBreakdown& row : table) {
            if (row.rate != rate) continue;
            if (!best || row.l_total < best->l_total) best = &row;
        }
        if (!best) continue;
        std::printf("bench algo=%s R=%.6g argmin_N=%zu L_total=%.6g real_time=%s\n",
                    args.algorithm.c_str(), rate, best->batch, best->l_total,
                    best->real_time ? "yes" : "no");
    }
    std::printf("bench rows=%zu file=%s\n", table.size(), args.output.c_str());
    g_sidecar_path = args.output + ".effective.ini";
}

int exit_code_for(const evk::Error& e) {
    switch (e.code()) {
        case evk::ErrorCode::Io:
        case evk::ErrorCode::Parse:
        case evk::ErrorCode::BadMagic:
        case evk::ErrorCode::Truncated:
        case evk::ErrorCode::CountMismatch:
        case evk::ErrorCode::SeqGap:
        case evk::ErrorCode::Malformed:
        case evk::ErrorCode::NonMonotoneTimestamps:
            return 1;
        case evk::ErrorCode::InvalidArgument:
        case evk::ErrorCode::InvalidSpec:
            return 2;
        default:
            return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evkit — event-camera stream toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; command-line flags win");

    GlobalOptions global;
    add_global_options(app, global);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic event stream");
    synth->fallthrough();
    synth->add_option("--kind", synth_args.kind, "bar, blob or noise")->required();
    synth->add_option("--vx", synth_args.vx, "Horizontal velocity, px/s")
        ->capture_default_str();
    synth->add_option("--vy", synth_args.vy, "Vertical velocity, px/s")->capture_default_str();
    synth->add_option("--rate", synth_args.rate, "Noise rate, events/s")->capture_default_str();
    synth->add_option("--duration", synth_args.duration, "Stream length, seconds")
        ->capture_default_str();
    synth->add_option("--bar-length", synth_args.bar_length, "Bar length, px")
        ->capture_default_str();
    synth->add_option("--bar-width", synth_args.bar_width, "Bar thickness, px")
        ->capture_default_str();
    synth->add_option("--bar-angle", synth_args.bar_angle,
                      "Bar orientation, degrees from +x axis")
        ->capture_default_str();
    synth->add_option("--blob-radius", synth_args.blob_radius, "Blob radius, px")
        ->capture_default_str();
    synth->add_option("--start-x", synth_args.start_x, "Start center x (-1 = auto)")
        ->capture_default_str();
    synth->add_option("--start-y", synth_args.start_y, "Start center y (-1 = auto)")
        ->capture_default_str();
    synth->add_option("--burst-count", synth_args.burst_count,
                      "Events emitted per pixel crossing")
        ->capture_default_str();
    synth->add_option("--burst-spacing-us", synth_args.burst_spacing_us,
                      "Spacing inside a burst, µs")
        ->capture_default_str();
    synth->add_option("-o,--output", synth_args.output, "Output .evp or .csv file")->required();
    synth->callback([&] { cmd_synth(global, synth_args); });

    std::string info_input;
    CLI::App* info = app.add_subcommand("info", "Describe an event file");
    info->fallthrough();
    info->add_option("input", info_input, "Event file (.evp or .csv)")->required();
    info->callback([&] { cmd_info(global, info_input); });

    FilterArgs filter_args;
    CLI::App* filter = app.add_subcommand("filter", "Run the pre-processing chain on a file");
    filter->fallthrough();
    filter->add_option("input", filter_args.input, "Event file")->required();
    filter->add_option("-o,--output", filter_args.output, "Filtered event file")->required();
    filter_args.flags.add_to(*filter, 1000, 1, 1000);
    filter->add_option("--auto-hot-rate", filter_args.auto_hot_rate,
                       "Mask pixels above this rate (ev/s, 0 = off)")
        ->capture_default_str();
    filter->callback([&] { cmd_filter(global, filter_args); });

    FlowArgs flow_args;
    CLI::App* flow = app.add_subcommand("flow", "Per-event optical flow over batches");
    flow->fallthrough();
    flow->add_option("input", flow_args.input, "Event file")->required();
    flow->add_option("-o,--output", flow_args.output, "Per-event flow CSV")->required();
    flow->add_option("--ppm-dir", flow_args.ppm_dir, "Write one flow PPM per batch here");
    flow->add_option("--liveview", flow_args.liveview, "Write final live-view PGM here");
    flow_args.filter.add_to(*flow);
    flow_args.flow.add_to(*flow);
    flow->callback([&] { cmd_flow(global, flow_args); });

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand(
        "gesture-train", "Learn a prototype bank from labeled streams (label_*.ext files)");
    train->fallthrough();
    train->add_option("inputs", train_args.inputs, "Training event files")
        ->required()
        ->expected(-1);
    train->add_option("-o,--output", train_args.output, "Prototype bank file")->required();
    train_args.filter.add_to(*train);
    train_args.hots.add_to(*train);
    train->callback([&] { cmd_gesture_train(global, train_args); });

    ClassifyArgs classify_args;
    CLI::App* classify =
        app.add_subcommand("gesture-classify", "Classify a capture against a trained bank");
    classify->fallthrough();
    classify->add_option("input", classify_args.input, "Event file to classify")->required();
    classify->add_option("--bank", classify_args.bank, "Prototype bank file")->required();
    classify->add_option("--signatures", classify_args.signatures,
                         "Training signatures CSV (default: <bank>.signatures.csv)");
    classify_args.filter.add_to(*classify);
    classify_args.hots.add_to(*classify);
    classify->callback([&] { cmd_gesture_classify(global, classify_args); });

    VoxelArgs voxel_args;
    CLI::App* voxel = app.add_subcommand("voxel", "Build a voxel grid from a stream");
    voxel->fallthrough();
    voxel->add_option("input", voxel_args.input, "Event file")->required();
    voxel->add_option("-o,--output", voxel_args.output, "Collapsed-mass PGM")->required();
    voxel->add_option("--csv", voxel_args.csv, "Also dump non-zero cells as CSV");
    voxel->add_option("--bins", voxel_args.bins, "Temporal bins (B)")->capture_default_str();
    voxel->callback([&] { cmd_voxel(global, voxel_args); });

    RenderArgs render_args;
    CLI::App* render =
        app.add_subcommand("render", "Reconstruct grayscale frames, one per batch");
    render->fallthrough();
    render->add_option("input", render_args.input, "Event file")->required();
    render->add_option("--out-dir", render_args.out_dir, "Frame output directory")->required();
    render->add_option("--liveview", render_args.liveview, "Write final live-view PGM here");
    render_args.filter.add_to(*render);
    render->add_option("--bins", render_args.bins, "Temporal bins (B)")->capture_default_str();
    render->add_option("--decay", render_args.decay, "Integrator decay per frame [0,1]")
        ->capture_default_str();
    render->add_option("--gain", render_args.gain, "Integrator gain per unit mass")
        ->capture_default_str();
    render->callback([&] { cmd_render(global, render_args); });

    BenchArgs bench_args;
    CLI::App* bench =
        app.add_subcommand("bench", "Profile an algorithm and sweep the latency model");
    bench->fallthrough();
    bench->add_option("input", bench_args.input, "Event file supplying batch content")
        ->required();
    bench->add_option("-o,--output", bench_args.output, "Latency table CSV")->required();
    bench->add_option("--algo", bench_args.algorithm,
                      "flow, gesture-features, voxel, reconstruct, dummy-const, dummy-linear")
        ->capture_default_str();
    bench->add_option("--rates", bench_args.rates, "Event rates to model, ev/s")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--batch-sizes", bench_args.batch_sizes, "Batch sizes to measure")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--repetitions", bench_args.repetitions, "Timed batches per size")
        ->capture_default_str();
    bench->add_option("--warmup", bench_args.warmup, "Untimed batches per size")
        ->capture_default_str();
    bench->add_option("--t-transfer-us", bench_args.t_transfer_us, "Packet transfer cost, µs")
        ->capture_default_str();
    bench->add_option("--t-decode-us", bench_args.t_decode_us, "Packet decode cost, µs")
        ->capture_default_str();
    bench->add_option("--t-filter-us", bench_args.t_filter_us, "Packet filter cost, µs")
        ->capture_default_str();
    bench->add_option("--n-packet", bench_args.n_packet, "Events per packet")
        ->capture_default_str();
    bench->add_option("--bins", bench_args.bins, "Voxel bins for grid algorithms")
        ->capture_default_str();
    bench_args.flow.add_to(*bench);
    bench_args.hots.add_to(*bench);
    bench->callback([&] { cmd_bench(global, bench_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const evk::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }

    if (!g_sidecar_path.empty()) {
        try {
            write_text_file(g_sidecar_path, app.config_to_str(true, false));
        } catch (const evk::Error& e) {
            std::fprintf(stderr, "warning: could not write %s: %s\n", g_sidecar_path.c_str(),
                         e.what());
        }
    }
    return 0;
}
