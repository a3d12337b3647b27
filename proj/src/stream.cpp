#include "phonos/stream.hpp"

#include "phonos/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace phonos::stream {

void ChunkConfig::validate() const {
    if (chunk_ms <= 0 || sample_rate <= 0)
        raise(Errc::config, "chunk size and sample rate must be positive");
    if ((static_cast<int64_t>(chunk_ms) * sample_rate) % 1000 != 0)
        raise(Errc::config, "chunk duration must be a whole number of samples");
    if (chunk_samples() % frame.hop != 0)
        raise(Errc::config, "chunk duration must be a multiple of the hop duration");
    if (frame.frame_len < 1 || frame.hop < 1 || frame.n_mels < 1)
        raise(Errc::config, "frame spec must be positive");
}

void SamplerConfig::validate() const {
    if (k < 1)
        raise(Errc::config, "sampler k must be >= 1");
    if (!(temperature > 0))
        raise(Errc::config, "sampler temperature must be positive");
}

std::string LatencyReport::to_text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "algorithmic_ms=%.17g\n"
                  "mean_compute_ms=%.17g\n"
                  "max_compute_ms=%.17g\n"
                  "end_to_end_ms=%.17g\n"
                  "rtf=%.17g\n"
                  "zero_audio=%d\n"
                  "chunks=%lld\n"
                  "audio_ms=%.17g\n",
                  algorithmic_ms, mean_compute_ms, max_compute_ms, end_to_end_ms, rtf,
                  zero_audio ? 1 : 0, static_cast<long long>(chunks), audio_ms);
    return buf;
}

LatencyReport LatencyReport::from_text(const std::string& text) {
    LatencyReport r;
    std::istringstream in(text);
    std::string line;
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(Errc::data, "bad latency report line: " + line);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        try {
            if (key == "algorithmic_ms")
                r.algorithmic_ms = std::stod(val);
            else if (key == "mean_compute_ms")
                r.mean_compute_ms = std::stod(val);
            else if (key == "max_compute_ms")
                r.max_compute_ms = std::stod(val);
            else if (key == "end_to_end_ms")
                r.end_to_end_ms = std::stod(val);
            else if (key == "rtf")
                r.rtf = std::stod(val);
            else if (key == "zero_audio")
                r.zero_audio = std::stoi(val) != 0;
            else if (key == "chunks")
                r.chunks = std::stoll(val);
            else if (key == "audio_ms")
                r.audio_ms = std::stod(val);
            else
                raise(Errc::data, "unknown latency report key: " + key);
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            raise(Errc::data, "bad latency report value: " + line);
        }
        ++seen;
    }
    if (seen < 8)
        raise(Errc::data, "latency report is missing fields");
    return r;
}

void LatencyReport::write_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f)
        raise(Errc::data, "cannot open latency report for writing: " + path);
    f << to_text();
    if (!f)
        raise(Errc::data, "write failed for latency report: " + path);
}

LatencyReport LatencyReport::read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::data, "cannot open latency report: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
}

int32_t sample_topk(const double* logits, int classes, int blank_id,
                    const SamplerConfig& cfg, Rng& rng) {
    if (classes < 2)
        raise(Errc::config, "sampler needs at least one content class");
    if (cfg.greedy || cfg.k == 1) {
        int32_t best = -1;
        double best_v = 0.0;
        for (int c = 0; c < classes; ++c) {
            if (c == blank_id)
                continue;
            if (best < 0 || logits[c] > best_v) {
                best = c;
                best_v = logits[c];
            }
        }
        return best;
    }
    std::vector<int> ids;
    ids.reserve(classes - 1);
    for (int c = 0; c < classes; ++c) {
        if (c != blank_id)
            ids.push_back(c);
    }
    int k = std::min<int>(cfg.k, static_cast<int>(ids.size()));
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
        if (logits[a] != logits[b])
            return logits[a] > logits[b];
        return a < b;
    });
    ids.resize(k);
    double best = logits[ids[0]];
    std::vector<double> p(k);
    double z = 0.0;
    for (int i = 0; i < k; ++i) {
        p[i] = std::exp((logits[ids[i]] - best) / cfg.temperature);
        z += p[i];
    }
    double u = rng.uniform() * z;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        acc += p[i];
        if (u < acc)
            return ids[i];
    }
    return ids[k - 1];
}

Session::Session(const translator::Translator& model, const codec::Codebook& codebook,
                 ChunkConfig chunk, LookaheadBudget budget, SamplerConfig sampler)
    : model_(model), codebook_(codebook), chunk_(chunk), budget_(budget),
      sampler_(sampler), rng_(derive_seed(sampler.seed, /*stream=*/7)) {
    chunk_.validate();
    sampler_.validate();
    codebook_.validate();
    if (codebook_.dim != chunk_.frame.n_mels)
        raise(Errc::config, "codebook dim does not match the feature spec");
    if (codebook_.k != model_.config().vocab)
        raise(Errc::config, "codebook size does not match the model vocab");
    // Greedy decoding bypasses top-k entirely, so k only has to fit the
    // class count when sampling is actually in play.
    if (!sampler_.greedy && sampler_.k > model_.config().classes())
        raise(Errc::config, "sampler k exceeds the class count");

    double hop_ms = chunk_.hop_ms();
    auto stage_frames = [hop_ms](int ms) {
        double f = ms / hop_ms;
        int fi = static_cast<int>(std::lround(f));
        if (std::abs(f - fi) > 1e-9 || fi < 0)
            raise(Errc::config, "stage lookahead must be a whole frame count");
        return fi;
    };
    enc_delay_ = stage_frames(budget_.encoder_ms);
    tr_delay_ = stage_frames(budget_.translator_ms);
    dec_delay_ = stage_frames(budget_.decoder_ms);
    if (tr_delay_ != model_.config().future_frames())
        raise(Errc::config, "translator lookahead budget does not match the model");

    receptive_ = model_.config().past_receptive_frames();
    int chunk_frames = chunk_.chunk_samples() / chunk_.frame.hop;
    // At least the 2 s (100-frame) encoder look-back, and always enough for a
    // bit-exact windowed recompute of every not-yet-final frame.
    keep_tokens_ = std::max<int64_t>(100, receptive_ + enc_delay_ + tr_delay_ +
                                              chunk_frames + 2);
}

void Session::extract_ready_frames() {
    const auto& fs = chunk_.frame;
    while (sample_base_ + static_cast<int64_t>(samples_.size()) >=
           frames_extracted_ * fs.hop + fs.frame_len) {
        int64_t start = frames_extracted_ * fs.hop - sample_base_;
        dsp::AudioBuffer window;
        window.sample_rate = chunk_.sample_rate;
        window.samples.assign(samples_.begin() + start,
                              samples_.begin() + start + fs.frame_len);
        dsp::FeatureSequence feat = dsp::extract_features(window, fs);
        codec::TokenSequence tok = codec::quantize(feat, codebook_);
        l2_tokens_.push_back(tok.tokens[0]);
        ++frames_extracted_;
    }
    // Drop fully consumed samples.
    int64_t needed_from = frames_extracted_ * fs.hop;
    if (needed_from > sample_base_) {
        int64_t drop = needed_from - sample_base_;
        drop = std::min<int64_t>(drop, static_cast<int64_t>(samples_.size()));
        samples_.erase(samples_.begin(), samples_.begin() + drop);
        sample_base_ += drop;
    }
}

void Session::finalize_translated(int64_t upto, bool end_of_stream) {
    if (upto <= frames_translated_)
        return;
    int64_t a = frames_translated_;
    int64_t b = upto - 1;
    int64_t win_start = std::max<int64_t>(token_base_, std::max<int64_t>(0, a - receptive_));
    int64_t win_end = end_of_stream
                          ? frames_extracted_
                          : std::min<int64_t>(frames_extracted_, b + 1 + tr_delay_);
    // Offline equality: [win_start, win_end) covers the full receptive cone of
    // every frame in [a, b], so their logits match the whole-utterance forward.
    std::vector<int32_t> window(l2_tokens_.begin() + (win_start - token_base_),
                                l2_tokens_.begin() + (win_end - token_base_));
    auto logits = model_.forward(window);
    int classes = model_.config().classes();
    int blank = model_.config().blank_id();
    for (int64_t t = a; t <= b; ++t) {
        const double* row =
            logits->values.data() + static_cast<size_t>(t - win_start) * classes;
        out_tokens_.push_back(sample_topk(row, classes, blank, sampler_, rng_));
    }
    frames_translated_ = upto;
    // Trim input-token history, keeping the bounded look-back.
    int64_t min_keep = std::max<int64_t>(0, frames_extracted_ - keep_tokens_);
    if (min_keep > token_base_) {
        l2_tokens_.erase(l2_tokens_.begin(),
                         l2_tokens_.begin() + (min_keep - token_base_));
        token_base_ = min_keep;
    }
}

Emitted Session::emit_ready(bool end_of_stream) {
    int64_t target = end_of_stream
                         ? frames_translated_
                         : std::max<int64_t>(0, frames_translated_ - dec_delay_);
    Emitted out;
    out.tokens.frame_rate = chunk_.frame.frame_rate_hz(chunk_.sample_rate);
    out.features.dim = codebook_.dim;
    out.features.frame_rate = out.tokens.frame_rate;
    if (target <= frames_emitted_)
        return out;
    int64_t n = target - frames_emitted_;
    out.tokens.tokens.assign(out_tokens_.begin(), out_tokens_.begin() + n);
    out_tokens_.erase(out_tokens_.begin(), out_tokens_.begin() + n);
    for (int32_t id : out.tokens.tokens) {
        auto c = codebook_.centroid(id);
        out.features.data.insert(out.features.data.end(), c.begin(), c.end());
    }
    frames_emitted_ = target;
    return out;
}

Emitted Session::push_chunk(std::span<const double> samples) {
    if (flushed_)
        raise(Errc::data, "push_chunk after flush");
    if (static_cast<int>(samples.size()) != chunk_.chunk_samples())
        raise(Errc::data, "chunk must be exactly " +
                              std::to_string(chunk_.chunk_samples()) + " samples");
    auto t0 = std::chrono::steady_clock::now();
    samples_.insert(samples_.end(), samples.begin(), samples.end());
    samples_total_ += static_cast<int64_t>(samples.size());
    extract_ready_frames();
    int64_t released = std::max<int64_t>(0, frames_extracted_ - enc_delay_);
    finalize_translated(std::max<int64_t>(0, released - tr_delay_), false);
    Emitted out = emit_ready(false);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    chunk_times_ms_.push_back(ms);
    total_compute_ms_ += ms;
    return out;
}

Session::FlushResult Session::flush(std::span<const double> tail) {
    if (flushed_)
        raise(Errc::data, "double flush");
    if (static_cast<int>(tail.size()) >= chunk_.chunk_samples())
        raise(Errc::data, "flush tail must be shorter than one chunk");
    auto t0 = std::chrono::steady_clock::now();
    if (!tail.empty()) {
        samples_.insert(samples_.end(), tail.begin(), tail.end());
        samples_total_ += static_cast<int64_t>(tail.size());
        extract_ready_frames();
    }
    finalize_translated(frames_extracted_, true);
    FlushResult result;
    result.emitted = emit_ready(true);
    flushed_ = true;
    auto t1 = std::chrono::steady_clock::now();
    total_compute_ms_ += std::chrono::duration<double, std::milli>(t1 - t0).count();

    LatencyReport& r = result.report;
    r.algorithmic_ms = chunk_.chunk_ms + budget_.total_ms();
    r.chunks = static_cast<int64_t>(chunk_times_ms_.size());
    if (!chunk_times_ms_.empty()) {
        r.max_compute_ms =
            *std::max_element(chunk_times_ms_.begin(), chunk_times_ms_.end());
        r.mean_compute_ms =
            std::accumulate(chunk_times_ms_.begin(), chunk_times_ms_.end(), 0.0) /
            static_cast<double>(chunk_times_ms_.size());
    }
    r.end_to_end_ms = r.algorithmic_ms + r.max_compute_ms;
    r.audio_ms = samples_total_ * 1000.0 / chunk_.sample_rate;
    r.zero_audio = samples_total_ == 0;
    r.rtf = r.zero_audio ? 0.0 : total_compute_ms_ / r.audio_ms;
    return result;
}

} // namespace phonos::stream
