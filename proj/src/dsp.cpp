#include "phonos/dsp.hpp"

#include "phonos/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace phonos::dsp {

namespace {

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 2);
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over FFT bin center frequencies, HTK-style
// mel scale, unnormalized unit-height triangles from 0 Hz to Nyquist.
std::vector<double> mel_filterbank(int n_mels, int n_bins, int n_fft, int sample_rate) {
    std::vector<double> fb(static_cast<size_t>(n_mels) * n_bins, 0.0);
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            double w = 0.0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
            fb[static_cast<size_t>(m) * n_bins + k] = w;
        }
    }
    return fb;
}

// FFTW plans are cached per size; creation is serialized, execution on
// caller-owned buffers is thread-safe.
class FftCache {
public:
    void rfft(const double* in, int n, double* re, double* im) {
        fftw_plan plan = nullptr;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = plans_.find(n);
            if (it == plans_.end()) {
                auto* buf_in = fftw_alloc_real(n);
                auto* buf_out = fftw_alloc_complex(n / 2 + 1);
                plan = fftw_plan_dft_r2c_1d(n, buf_in, buf_out, FFTW_ESTIMATE);
                plans_[n] = plan;
                fftw_free(buf_in);
                fftw_free(buf_out);
            } else {
                plan = it->second;
            }
        }
        std::vector<double> tmp_in(in, in + n);
        std::vector<fftw_complex> tmp_out(n / 2 + 1);
        fftw_execute_dft_r2c(plan, tmp_in.data(), tmp_out.data());
        for (int k = 0; k <= n / 2; ++k) {
            re[k] = tmp_out[k][0];
            im[k] = tmp_out[k][1];
        }
    }

private:
    std::mutex mu_;
    std::map<int, fftw_plan> plans_;
};

FftCache& fft_cache() {
    static FftCache cache;
    return cache;
}

} // namespace

AudioBuffer load_wav(const std::string& path, int expected_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::data, "cannot open wav file: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RIFF", 4) != 0)
        raise(Errc::data, "malformed wav header (no RIFF): " + path);
    read_u32(in); // riff size
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "WAVE", 4) != 0)
        raise(Errc::data, "malformed wav header (no WAVE): " + path);

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    std::vector<int16_t> pcm;
    bool have_data = false;

    while (in) {
        char id[4];
        in.read(id, 4);
        if (!in) break;
        const uint32_t size = read_u32(in);
        if (!in) raise(Errc::data, "truncated wav chunk: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) raise(Errc::data, "malformed fmt chunk: " + path);
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in); // byte rate
            read_u16(in); // block align
            bits = read_u16(in);
            in.ignore(size - 16);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm.resize(size / 2);
            in.read(reinterpret_cast<char*>(pcm.data()), size & ~1u);
            if (!in) raise(Errc::data, "truncated data chunk: " + path);
            have_data = true;
        } else {
            in.ignore(size + (size & 1));
        }
    }
    if (!have_fmt || !have_data)
        raise(Errc::data, "malformed wav (missing fmt or data): " + path);
    if (format != 1 || bits != 16)
        raise(Errc::data, "wav is not PCM16: " + path);
    if (channels != 1)
        raise(Errc::data, "wav is not mono: " + path);
    if (expected_rate > 0 && static_cast<int>(rate) != expected_rate)
        raise(Errc::data, "wav sample rate " + std::to_string(rate) +
                              " != expected " + std::to_string(expected_rate) +
                              ": " + path);

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(pcm.size());
    for (size_t i = 0; i < pcm.size(); ++i)
        out.samples[i] = static_cast<double>(pcm[i]) / 32768.0;
    return out;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::data, "cannot write wav file: " + path);
    const uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1); // PCM
    write_u16(out, 1); // mono
    write_u32(out, static_cast<uint32_t>(audio.sample_rate));
    write_u32(out, static_cast<uint32_t>(audio.sample_rate * 2));
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (double s : audio.samples) {
        const double scaled = std::round(s * 32768.0);
        const int16_t v = static_cast<int16_t>(
            std::clamp(scaled, -32768.0, 32767.0));
        write_u16(out, static_cast<uint16_t>(v));
    }
}

FeatureSequence extract_features(const AudioBuffer& audio, const FrameSpec& spec) {
    const int len = static_cast<int>(audio.samples.size());
    if (len < spec.frame_len)
        raise(Errc::data, "audio shorter than one frame (" +
                              std::to_string(len) + " < " +
                              std::to_string(spec.frame_len) + " samples)");
    const int frames = 1 + (len - spec.frame_len) / spec.hop;
    const int n_fft = next_pow2(spec.frame_len);
    const int n_bins = n_fft / 2 + 1;
    const auto fb = mel_filterbank(spec.n_mels, n_bins, n_fft, audio.sample_rate);

    std::vector<double> window(spec.frame_len);
    for (int i = 0; i < spec.frame_len; ++i)
        window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / spec.frame_len));

    FeatureSequence out;
    out.dim = spec.n_mels;
    out.frame_rate = spec.frame_rate_hz(audio.sample_rate);
    out.data.resize(static_cast<size_t>(frames) * spec.n_mels);

#pragma omp parallel for schedule(static)
    for (int t = 0; t < frames; ++t) {
        std::vector<double> frame(n_fft, 0.0);
        const double* src = audio.samples.data() + static_cast<size_t>(t) * spec.hop;
        for (int i = 0; i < spec.frame_len; ++i) frame[i] = src[i] * window[i];
        std::vector<double> re(n_bins), im(n_bins);
        fft_cache().rfft(frame.data(), n_fft, re.data(), im.data());
        double* row = out.data.data() + static_cast<size_t>(t) * spec.n_mels;
        for (int m = 0; m < spec.n_mels; ++m) {
            const double* w = fb.data() + static_cast<size_t>(m) * n_bins;
            double e = 0.0;
            for (int k = 0; k < n_bins; ++k)
                e += w[k] * (re[k] * re[k] + im[k] * im[k]);
            row[m] = std::log(e + kLogEps);
        }
    }
    return out;
}

VadMask energy_vad(const FeatureSequence& features, double threshold_db,
                   int hangover_frames) {
    VadMask mask;
    mask.threshold_db = threshold_db;
    mask.hangover_frames = hangover_frames;
    const size_t frames = features.frames();
    mask.voiced.assign(frames, 0);
    if (frames == 0) return mask;

    // A frame whose every value sits at the digital-silence floor is never
    // voiced, even when the whole utterance is silent and the frame equals
    // the utterance maximum. The flag avoids comparing the rounded mean
    // against the floor.
    const double floor_energy = std::log(kLogEps);
    std::vector<double> mean_energy(frames);
    std::vector<uint8_t> at_floor(frames, 0);
    double vmax = -std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < frames; ++t) {
        auto row = features.row(t);
        double s = 0.0;
        bool silent = true;
        for (double v : row) {
            s += v;
            silent = silent && v <= floor_energy;
        }
        mean_energy[t] = s / features.dim;
        at_floor[t] = silent ? 1 : 0;
        vmax = std::max(vmax, mean_energy[t]);
    }
    const double threshold = vmax - threshold_db * std::log(10.0) / 10.0;
    for (size_t t = 0; t < frames; ++t)
        mask.voiced[t] = (!at_floor[t] && mean_energy[t] > threshold) ? 1 : 0;

    if (hangover_frames > 0) {
        std::vector<uint8_t> widened = mask.voiced;
        for (size_t t = 0; t < frames; ++t) {
            if (!mask.voiced[t]) continue;
            const size_t lo = t >= static_cast<size_t>(hangover_frames)
                                  ? t - hangover_frames : 0;
            const size_t hi = std::min(frames - 1, t + hangover_frames);
            for (size_t u = lo; u <= hi; ++u) widened[u] = 1;
        }
        mask.voiced = std::move(widened);
    }
    return mask;
}

std::vector<double> silence_row(int dim) {
    return std::vector<double>(dim, std::log(kLogEps));
}

void write_features(const std::string& path, const FeatureSequence& f) {
    std::ofstream out(path);
    if (!out) raise(Errc::data, "cannot write feature file: " + path);
    char buf[64];
    out << "PHN-FEAT v1 " << f.frames() << ' ' << f.dim << ' ';
    std::snprintf(buf, sizeof buf, "%.17g", f.frame_rate);
    out << buf << '\n';
    for (size_t t = 0; t < f.frames(); ++t) {
        auto row = f.row(t);
        for (int d = 0; d < f.dim; ++d) {
            std::snprintf(buf, sizeof buf, "%.17g", row[d]);
            out << (d ? " " : "") << buf;
        }
        out << '\n';
    }
}

FeatureSequence read_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::data, "cannot open feature file: " + path);
    std::string magic, version;
    size_t frames = 0;
    FeatureSequence f;
    in >> magic >> version >> frames >> f.dim >> f.frame_rate;
    if (magic != "PHN-FEAT" || version != "v1" || !in)
        raise(Errc::data, "bad feature file header: " + path);
    f.data.resize(frames * f.dim);
    for (double& v : f.data)
        if (!(in >> v)) raise(Errc::data, "truncated feature file: " + path);
    return f;
}

} // namespace phonos::dsp
