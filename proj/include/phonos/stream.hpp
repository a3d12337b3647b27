#pragma once

#include "phonos/codec.hpp"
#include "phonos/dsp.hpp"
#include "phonos/rng.hpp"
#include "phonos/translator.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace phonos::stream {

struct ChunkConfig {
    int chunk_ms = 80; // CPU profile 160
    int sample_rate = 16000;
    dsp::FrameSpec frame;

    int chunk_samples() const { return chunk_ms * sample_rate / 1000; }
    double hop_ms() const { return frame.hop * 1000.0 / sample_rate; }
    void validate() const;
};

struct LookaheadBudget {
    int encoder_ms = 40;
    int translator_ms = 40;
    int decoder_ms = 40;

    int total_ms() const { return encoder_ms + translator_ms + decoder_ms; }
};

struct SamplerConfig {
    int k = 10;
    double temperature = 0.7;
    uint64_t seed = 0;
    bool greedy = false;

    void validate() const;
};

struct LatencyReport {
    double algorithmic_ms = 0.0; // chunk_ms + total lookahead
    double mean_compute_ms = 0.0;
    double max_compute_ms = 0.0;
    double end_to_end_ms = 0.0; // algorithmic + max compute
    double rtf = 0.0;           // total compute time / audio duration
    bool zero_audio = false;
    int64_t chunks = 0;
    double audio_ms = 0.0;

    std::string to_text() const;
    static LatencyReport from_text(const std::string& text);
    void write_file(const std::string& path) const;
    static LatencyReport read_file(const std::string& path);
};

// Keep the top k logits (ties to the lower id), temperature-softmax, sample.
// The blank class is masked out before selection so every frame emits a
// content token; greedy bypasses sampling with a pure argmax.
int32_t sample_topk(const double* logits, int classes, int blank_id,
                    const SamplerConfig& cfg, Rng& rng);

struct Emitted {
    codec::TokenSequence tokens;     // translated content tokens
    dsp::FeatureSequence features;   // decoder output (centroid rows)
};

// Chunked runtime: audio -> features per completed hop window -> quantize
// (encoder) -> translator -> decode (decoder). Each stage releases a frame
// once its 40 ms future context exists, so frame t is emitted exactly when
// frame t+6 has been ingested; flush finalizes the tail with end-clipped
// context, which keeps streamed output bit-identical to the offline forward.
class Session {
  public:
    Session(const translator::Translator& model, const codec::Codebook& codebook,
            ChunkConfig chunk, LookaheadBudget budget, SamplerConfig sampler);

    // Audio must be exactly one chunk long; partial tails go through flush.
    Emitted push_chunk(std::span<const double> samples);

    struct FlushResult {
        Emitted emitted;
        LatencyReport report;
    };
    FlushResult flush(std::span<const double> tail = {});

    int64_t frames_ingested() const { return frames_extracted_; }
    int64_t frames_emitted() const { return frames_emitted_; }
    int64_t frames_pending() const { return frames_extracted_ - frames_emitted_; }

  private:
    void extract_ready_frames();
    void finalize_translated(int64_t upto, bool end_of_stream);
    Emitted emit_ready(bool end_of_stream);

    const translator::Translator& model_;
    const codec::Codebook& codebook_;
    ChunkConfig chunk_;
    LookaheadBudget budget_;
    SamplerConfig sampler_;
    Rng rng_;

    int enc_delay_ = 2;
    int tr_delay_ = 2;
    int dec_delay_ = 2;
    int receptive_ = 0;   // translator past receptive field, frames
    int64_t keep_tokens_ = 0; // bounded history (>= 100-frame look-back)

    std::vector<double> samples_;  // pending samples, offset by sample_base_
    int64_t sample_base_ = 0;
    int64_t samples_total_ = 0;

    std::vector<int32_t> l2_tokens_; // quantized input tokens, offset token_base_
    int64_t token_base_ = 0;
    int64_t frames_extracted_ = 0;

    std::vector<int32_t> out_tokens_; // translated, not yet emitted
    int64_t frames_translated_ = 0;
    int64_t frames_emitted_ = 0;

    bool flushed_ = false;
    std::vector<double> chunk_times_ms_;
    double total_compute_ms_ = 0.0;
};

} // namespace phonos::stream
