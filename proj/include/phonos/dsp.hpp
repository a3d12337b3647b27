#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace phonos::dsp {

inline constexpr double kLogEps = 1e-10; // floor before log, keeps digital silence finite

// Mono audio, samples in [-1, 1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 16000;
};

// Framing and mel settings. Defaults give 50 Hz frames on 16 kHz audio.
struct FrameSpec {
    int frame_len = 400; // 25 ms
    int hop = 320;       // 20 ms
    int n_mels = 40;

    double frame_rate_hz(int sample_rate) const {
        return static_cast<double>(sample_rate) / hop;
    }
};

// Time-major feature matrix, frames() x dim.
struct FeatureSequence {
    int dim = 0;
    double frame_rate = 50.0;
    std::vector<double> data; // frames * dim, row-major

    int frames() const {
        return dim == 0 ? 0 : static_cast<int>(data.size() / static_cast<size_t>(dim));
    }
    std::span<const double> row(size_t t) const {
        return {data.data() + t * dim, static_cast<size_t>(dim)};
    }
    std::span<double> row(size_t t) {
        return {data.data() + t * dim, static_cast<size_t>(dim)};
    }
};

struct VadMask {
    std::vector<uint8_t> voiced;
    double threshold_db = 30.0;
    int hangover_frames = 2;

    size_t size() const { return voiced.size(); }
    bool is_voiced(size_t t) const { return voiced[t] != 0; }
};

// Reads a RIFF/WAVE file: PCM16 little-endian, mono, sample rate equal to
// expected_rate. Samples are scaled by 1/32768.
AudioBuffer load_wav(const std::string& path, int expected_rate = 16000);

// PCM16 mono writer; the inverse of load_wav up to one LSB.
void write_wav(const std::string& path, const AudioBuffer& audio);

// Log-mel features: Hann window (periodic), zero-padded power spectrum,
// triangular mel filterbank, log(energy + kLogEps). T = 1 + (len-frame_len)/hop.
FeatureSequence extract_features(const AudioBuffer& audio, const FrameSpec& spec);

// Relative-energy VAD. A frame is voiced when its mean log-energy exceeds
// the utterance maximum minus threshold_db (converted to nat units), then
// voiced runs are widened by hangover_frames on both sides. A frame whose
// every value sits at the digital-silence floor log(kLogEps) is never
// voiced, so an all-silent utterance yields an all-false mask.
VadMask energy_vad(const FeatureSequence& features, double threshold_db = 30.0,
                   int hangover_frames = 2);

// All-kLogEps feature row, the canonical digital-silence frame.
std::vector<double> silence_row(int dim);

// Feature dump: "PHN-FEAT v1 T D frame_rate" header then one row per line.
void write_features(const std::string& path, const FeatureSequence& f);
FeatureSequence read_features(const std::string& path);

} // namespace phonos::dsp
