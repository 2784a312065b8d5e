// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Staged stream pipeline: a packet source, a decode/filter stage that keeps a
// live view current, an N-event buffer gate, and a batch processor. Stages
// run on their own threads connected by bounded blocking queues, or strictly
// sequentially for deterministic tests; results are identical either way.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "evk/core.hpp"
#include "evk/filtering.hpp"
#include "evk/ingest.hpp"
#include "evk/latency.hpp"

namespace evk {

// ---------------------------------------------------------------------------
// Buffer gate
// ---------------------------------------------------------------------------

/// Fixed-capacity accumulator that releases its contents as one batch exactly
/// when the N-th event arrives.
class EventBuffer {
public:
    explicit EventBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ < 1) {
            throw_error(ErrorCode::InvalidArgument, "buffer capacity must be at least 1");
        }
        contents_.reserve(capacity_);
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return contents_.size(); }

    /// Appends one event; returns the full batch when the buffer just filled.
    std::optional<std::vector<Event>> push(const Event& e) {
        contents_.push_back(e);
        if (contents_.size() < capacity_) return std::nullopt;
        std::vector<Event> batch = std::move(contents_);
        contents_ = {};
        contents_.reserve(capacity_);
        return batch;
    }

    /// Hands out whatever is pending (nothing when empty) and empties the
    /// buffer. Callers decide whether their processor takes partial batches.
    std::optional<std::vector<Event>> flush() {
        if (contents_.empty()) return std::nullopt;
        std::vector<Event> batch = std::move(contents_);
        contents_ = {};
        contents_.reserve(capacity_);
        return batch;
    }

private:
    std::size_t capacity_;
    std::vector<Event> contents_;
};

// ---------------------------------------------------------------------------
// Live view
// ---------------------------------------------------------------------------

/// Binary activity bitmap: a pixel is set in a snapshot iff it fired within
/// decay_window_us before the snapshot time. Updates and snapshots may come
/// from different threads; a snapshot never shows a torn frame.
class LiveView {
public:
    explicit LiveView(SensorGeometry geometry, std::uint64_t decay_window_us = 30000,
                      std::uint32_t frame_rate_hz = 60)
        : decay_window_us_(decay_window_us),
          frame_rate_hz_(frame_rate_hz),
          last_(geometry, kNeverFired) {}

    SensorGeometry geometry() const { return last_.geometry(); }
    std::uint64_t decay_window_us() const { return decay_window_us_; }
    std::uint32_t frame_rate_hz() const { return frame_rate_hz_; }

    void update(const Event& e) {
        std::lock_guard lock(mutex_);
        last_.at(e.x, e.y) = e.t;
        newest_ = std::max(newest_, e.t);
    }

    void update(std::span<const Event> events) {
        std::lock_guard lock(mutex_);
        for (const Event& e : events) last_.at(e.x, e.y) = e.t;
        if (!events.empty()) newest_ = std::max(newest_, events.back().t);
    }

    /// Timestamp of the newest event seen, or 0 before any update.
    std::uint64_t newest_time() const {
        std::lock_guard lock(mutex_);
        return newest_;
    }

    /// Pure read; 1 = active pixel at `now_us`.
    PixelMap<std::uint8_t> snapshot(std::uint64_t now_us) const {
        std::lock_guard lock(mutex_);
        PixelMap<std::uint8_t> frame(last_.geometry(), 0);
        const SensorGeometry geo = last_.geometry();
        for (std::uint16_t y = 0; y < geo.height; ++y) {
            for (std::uint16_t x = 0; x < geo.width; ++x) {
                const std::uint64_t t = last_.at(x, y);
                if (t != kNeverFired && t <= now_us && now_us - t <= decay_window_us_) {
                    frame.at(x, y) = 1;
                }
            }
        }
        return frame;
    }

private:
    std::uint64_t decay_window_us_;
    std::uint32_t frame_rate_hz_;
    mutable std::mutex mutex_;
    PixelMap<std::uint64_t> last_;
    std::uint64_t newest_ = 0;
};

// ---------------------------------------------------------------------------
// Bounded queue
// ---------------------------------------------------------------------------

/// Blocking MPMC queue with a hard capacity: a full queue stalls producers
/// instead of dropping work. close() wakes everyone; pops drain what is left.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity = 64) : capacity_(capacity) {
        if (capacity_ < 1) {
            throw_error(ErrorCode::InvalidArgument, "queue capacity must be at least 1");
        }
    }

    /// Blocks while full. Returns false iff the queue was closed.
    bool push(T value) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return false;
        items_.push_back(std::move(value));
        not_empty_.notify_one();
        return true;
    }

    /// Blocks while empty. Empty optional iff closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T value = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return value;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_full_.notify_all();
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> items_;
    bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Packet sources
// ---------------------------------------------------------------------------

/// Produces encoded packets; the pipeline's first stage. Returning an empty
/// optional is normal end of stream.
class PacketSource {
public:
    virtual ~PacketSource() = default;
    virtual std::optional<std::vector<std::uint8_t>> next() = 0;
};

/// Serves an in-memory stream as consecutively numbered packets, encoding
/// them on demand so the source stage pays a realistic per-packet cost.
class MemoryPacketSource final : public PacketSource {
public:
    explicit MemoryPacketSource(std::vector<Event> events,
                                std::size_t packet_events = kPacketMaxEvents)
        : events_(std::move(events)), packet_events_(packet_events) {
        if (packet_events_ < 1 || packet_events_ > kPacketMaxEvents) {
            throw_error(ErrorCode::InvalidArgument, "events per packet out of range");
        }
    }

    std::optional<std::vector<std::uint8_t>> next() override {
        if (offset_ >= events_.size()) return std::nullopt;
        const std::size_t count = std::min(packet_events_, events_.size() - offset_);
        EventPacket packet;
        packet.seq = seq_++;
        packet.events.assign(events_.begin() + static_cast<std::ptrdiff_t>(offset_),
                             events_.begin() + static_cast<std::ptrdiff_t>(offset_ + count));
        offset_ += count;
        return encode_packet(packet);
    }

private:
    std::vector<Event> events_;
    std::size_t packet_events_;
    std::size_t offset_ = 0;
    std::uint32_t seq_ = 0;
};

/// Replays a packet stream file one packet at a time.
class FilePacketSource final : public PacketSource {
public:
    explicit FilePacketSource(const std::string& path) : bytes_(read_file_bytes(path)) {}

    std::optional<std::vector<std::uint8_t>> next() override {
        if (offset_ >= bytes_.size()) return std::nullopt;
        if (bytes_.size() - offset_ < kPacketHeaderBytes) {
            throw_error(ErrorCode::Truncated, "trailing bytes shorter than a packet header");
        }
        const std::uint32_t count = detail::get_u32(bytes_.data() + offset_ + 8);
        const std::size_t size = kPacketHeaderBytes + std::size_t(count) * kPacketRecordBytes;
        if (bytes_.size() - offset_ < size) {
            throw_error(ErrorCode::Truncated, "packet extends past end of file");
        }
        std::vector<std::uint8_t> packet(bytes_.begin() + static_cast<std::ptrdiff_t>(offset_),
                                         bytes_.begin() +
                                             static_cast<std::ptrdiff_t>(offset_ + size));
        offset_ += size;
        return packet;
    }

private:
    static std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw_error(ErrorCode::Io, "cannot open " + path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        if (in.bad()) throw_error(ErrorCode::Io, "failed reading " + path);
        return bytes;
    }

    std::vector<std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

// ---------------------------------------------------------------------------
// Pipeline run
// ---------------------------------------------------------------------------

enum class ReplayMode {
    AsFastAsPossible,
    TimestampPaced,  ///< packets released on their first event's timestamp
};

struct PipelineOptions {
    FilterConfig filter;
    std::size_t batch_size = 5000;
    ReplayMode replay = ReplayMode::AsFastAsPossible;
    double pace_scale = 1.0;  ///< stream seconds consumed per wall second
    bool single_thread = false;
    std::size_t queue_capacity = 64;
    SensorGeometry geometry = kDefaultGeometry;
    std::uint64_t liveview_decay_us = 30000;
};

struct PipelineRun {
    std::size_t packets = 0;
    std::size_t events_decoded = 0;
    std::size_t events_filtered = 0;  ///< survivors of the filter chain
    std::size_t batches_emitted = 0;
    std::size_t residual_events = 0;  ///< events left in the gate at stream end
    bool partial_batch_delivered = false;
    std::size_t partial_batches_discarded = 0;
    FilterStats filter_stats;
    double source_seconds = 0.0;   ///< time inside source.next()
    double pace_seconds = 0.0;     ///< time spent sleeping for replay pacing
    double filter_seconds = 0.0;   ///< decode + filter + live view + gate
    double process_seconds = 0.0;  ///< sum of per-batch processor time
    std::vector<double> batch_seconds;
};

namespace detail {

using PipelineClock = std::chrono::steady_clock;

inline double elapsed_seconds(PipelineClock::time_point begin) {
    return std::chrono::duration<double>(PipelineClock::now() - begin).count();
}

/// Decode/filter stage state shared by both schedules.
struct FilterStage {
    FilterStage(const PipelineOptions& options, LiveView& view)
        : chain(options.filter), gate(options.batch_size), liveview(&view) {}

    FilterChain chain;
    EventBuffer gate;
    LiveView* liveview;
    std::optional<std::uint32_t> expected_seq;
    std::optional<std::uint64_t> last_t;
    std::vector<Event> kept;  // scratch, reused across packets

    /// Decodes one packet, filters it, updates the live view, and feeds the
    /// gate; full batches land in `batches`.
    void consume(std::span<const std::uint8_t> bytes, PipelineRun& run,
                 std::vector<std::vector<Event>>& batches) {
        const EventPacket packet = decode_packet(bytes);
        if (expected_seq && packet.seq != *expected_seq) {
            throw_error(ErrorCode::SeqGap,
                        "expected packet " + std::to_string(*expected_seq) + ", got " +
                            std::to_string(packet.seq));
        }
        expected_seq = packet.seq + 1;
        if (!packet.events.empty()) {
            if (last_t && packet.events.front().t < *last_t) {
                throw_error(ErrorCode::Parse, "timestamps regress across packets");
            }
            last_t = packet.events.back().t;
        }
        run.packets += 1;
        run.events_decoded += packet.events.size();

        kept.clear();
        chain.process(packet.events, kept);
        run.events_filtered += kept.size();
        liveview->update(kept);
        for (const Event& e : kept) {
            if (auto batch = gate.push(e)) batches.push_back(std::move(*batch));
        }
    }
};

inline void dispatch_batch(BatchAlgorithm& processor, std::vector<Event> batch,
                           PipelineRun& run) {
    const auto begin = PipelineClock::now();
    try {
        processor.process(batch);
    } catch (const std::exception& e) {
        throw_error(ErrorCode::ProcessorFailure,
                    "batch " + std::to_string(run.batches_emitted) + ": " + e.what());
    }
    const double seconds = elapsed_seconds(begin);
    run.batches_emitted += 1;
    run.process_seconds += seconds;
    run.batch_seconds.push_back(seconds);
}

/// First event timestamp of an encoded packet without a full decode; empty
/// for event-less packets.
inline std::optional<std::uint64_t> peek_first_timestamp(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPacketHeaderBytes + kPacketRecordBytes) return std::nullopt;
    if (get_u32(bytes.data() + 8) == 0) return std::nullopt;
    return get_u64(bytes.data() + kPacketHeaderBytes);
}

/// Sleeps until a packet's first event is due, per the pacing options.
struct Pacer {
    explicit Pacer(const PipelineOptions& options) : options_(&options) {}

    double wait_for(std::span<const std::uint8_t> bytes) {
        if (options_->replay != ReplayMode::TimestampPaced) return 0.0;
        const std::optional<std::uint64_t> first = peek_first_timestamp(bytes);
        if (!first) return 0.0;
        const std::uint64_t t = *first;
        if (!t0_) {
            t0_ = t;
            start_ = PipelineClock::now();
            return 0.0;
        }
        const double due_s =
            static_cast<double>(t - *t0_) / kMicrosPerSecond / options_->pace_scale;
        const auto due = *start_ + std::chrono::duration_cast<PipelineClock::duration>(
                                       std::chrono::duration<double>(due_s));
        const auto begin = PipelineClock::now();
        if (due > begin) std::this_thread::sleep_until(due);
        return elapsed_seconds(begin);
    }

    const PipelineOptions* options_;
    std::optional<std::uint64_t> t0_;
    std::optional<PipelineClock::time_point> start_;
};

}  // namespace detail

/// Drives packets from `source` through decode/filter/live-view, gates the
/// survivors into N-event batches, and hands each batch to `processor`.
/// Runs three stages on separate threads joined by bounded queues, or as one
/// strictly sequential loop when options.single_thread is set; both schedules
/// produce identical batches and counters. The trailing partial batch is
/// delivered only to processors that accept partial batches; otherwise it is
/// counted as discarded. Processor exceptions abort the run as
/// ProcessorFailure tagged with the batch index. Source exhaustion is normal
/// termination.
inline PipelineRun run_pipeline(PacketSource& source, BatchAlgorithm& processor,
                                const PipelineOptions& options, LiveView* liveview = nullptr) {
    if (options.pace_scale <= 0.0) {
        throw_error(ErrorCode::InvalidArgument, "pace_scale must be positive");
    }
    LiveView local_view(options.geometry, options.liveview_decay_us);
    LiveView& view = liveview ? *liveview : local_view;

    PipelineRun run;
    detail::FilterStage stage(options, view);
    detail::Pacer pacer(options);

    const auto finish = [&](PipelineRun& r) {
        if (auto partial = stage.gate.flush()) {
            r.residual_events = partial->size();
            if (processor.accepts_partial_batches()) {
                detail::dispatch_batch(processor, std::move(*partial), r);
                r.batches_emitted -= 1;  // partial batches do not count toward the gate total
                r.partial_batch_delivered = true;
            } else {
                r.partial_batches_discarded += 1;
            }
        }
        r.filter_stats = stage.chain.stats();
    };

    if (options.single_thread) {
        std::vector<std::vector<Event>> batches;
        while (true) {
            auto begin = detail::PipelineClock::now();
            auto bytes = source.next();
            run.source_seconds += detail::elapsed_seconds(begin);
            if (!bytes) break;

            run.pace_seconds += pacer.wait_for(*bytes);
            begin = detail::PipelineClock::now();
            batches.clear();
            stage.consume(*bytes, run, batches);
            run.filter_seconds += detail::elapsed_seconds(begin);
            for (auto& batch : batches) {
                detail::dispatch_batch(processor, std::move(batch), run);
            }
        }
        finish(run);
        return run;
    }

    BoundedQueue<std::vector<std::uint8_t>> packet_queue(options.queue_capacity);
    BoundedQueue<std::vector<Event>> batch_queue(options.queue_capacity);
    std::exception_ptr source_error, filter_error, process_error;
    PipelineRun source_run, filter_run, process_run;

    std::thread source_thread([&] {
        try {
            while (true) {
                const auto begin = detail::PipelineClock::now();
                auto bytes = source.next();
                source_run.source_seconds += detail::elapsed_seconds(begin);
                if (!bytes) break;
                source_run.pace_seconds += pacer.wait_for(*bytes);
                if (!packet_queue.push(std::move(*bytes))) break;  // downstream aborted
            }
        } catch (...) {
            source_error = std::current_exception();
        }
        packet_queue.close();
    });

    std::thread filter_thread([&] {
        try {
            std::vector<std::vector<Event>> batches;
            while (auto bytes = packet_queue.pop()) {
                const auto begin = detail::PipelineClock::now();
                batches.clear();
                stage.consume(*bytes, filter_run, batches);
                filter_run.filter_seconds += detail::elapsed_seconds(begin);
                for (auto& batch : batches) {
                    if (!batch_queue.push(std::move(batch))) return;  // downstream aborted
                }
            }
        } catch (...) {
            filter_error = std::current_exception();
            packet_queue.close();  // stop the producer
        }
        batch_queue.close();
    });

    std::thread process_thread([&] {
        try {
            while (auto batch = batch_queue.pop()) {
                detail::dispatch_batch(processor, std::move(*batch), process_run);
            }
        } catch (...) {
            process_error = std::current_exception();
            packet_queue.close();
            batch_queue.close();
        }
    });

    source_thread.join();
    filter_thread.join();
    process_thread.join();

    if (process_error) std::rethrow_exception(process_error);
    if (filter_error) std::rethrow_exception(filter_error);
    if (source_error) std::rethrow_exception(source_error);

    run = filter_run;
    run.source_seconds = source_run.source_seconds;
    run.pace_seconds = source_run.pace_seconds;
    run.batches_emitted = process_run.batches_emitted;
    run.process_seconds = process_run.process_seconds;
    run.batch_seconds = std::move(process_run.batch_seconds);
    finish(run);
    return run;
}

}  // namespace evk
