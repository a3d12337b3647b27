// phonos: desk-scale streaming accent-neutralization pipeline driver.
//
// Subcommands: codebook, golden, train, stream, eval, bench. A key = value
// config file (--config) carries every hyperparameter; --seed overrides all
// sub-seeds at once; --out picks the artifact directory. Each command echoes
// its effective config next to its outputs. Exit codes: 0 ok, 2 config,
// 3 data, 4 numeric, 5 partial failure.

#include "CLI11.hpp"

#include "phonos/align.hpp"
#include "phonos/codec.hpp"
#include "phonos/config.hpp"
#include "phonos/dsp.hpp"
#include "phonos/error.hpp"
#include "phonos/eval.hpp"
#include "phonos/rng.hpp"
#include "phonos/stream.hpp"
#include "phonos/train.hpp"
#include "phonos/translator.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace phonos;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
};

config::PipelineConfig effective_config(const GlobalArgs& g) {
    config::PipelineConfig cfg;
    if (!g.config_path.empty())
        cfg = config::PipelineConfig::load(g.config_path);
    if (g.seed)
        cfg.set_seed(*g.seed);
    if (!g.out_dir.empty())
        cfg.out_dir = g.out_dir;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string out_path(const config::PipelineConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void write_echo(const config::PipelineConfig& cfg, const std::string& cmd) {
    cfg.save(out_path(cfg, "config_echo_" + cmd + ".txt"));
}

std::vector<std::string> read_path_list(const std::string& manifest) {
    std::ifstream f(manifest);
    if (!f)
        raise(Errc::data, "cannot open manifest: " + manifest);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line[0] != '#')
            out.push_back(line);
    }
    return out;
}

int cmd_codebook(const GlobalArgs& g, const std::string& manifest, int k, int iters) {
    config::PipelineConfig cfg = effective_config(g);
    std::vector<std::string> wavs = read_path_list(manifest);
    if (wavs.empty())
        raise(Errc::data, "codebook manifest lists no audio files");
    std::vector<double> rows;
    int n_rows = 0;
    for (const std::string& path : wavs) {
        try {
            dsp::AudioBuffer audio = dsp::load_wav(path, cfg.sample_rate);
            dsp::FeatureSequence feat = dsp::extract_features(audio, cfg.frame);
            rows.insert(rows.end(), feat.data.begin(), feat.data.end());
            n_rows += feat.frames();
        } catch (const Error& e) {
            raise(Errc::data, std::string("codebook input failed: ") + path + ": " +
                                  e.what());
        }
    }
    codec::KmeansStats stats;
    codec::Codebook cb =
        codec::kmeans_train(rows, n_rows, cfg.frame.n_mels, k, iters, cfg.seed, &stats);
    std::string out = cfg.codebook_path.empty() ? out_path(cfg, "codebook.cb")
                                                : cfg.codebook_path;
    codec::write_codebook(out, cb);
    write_echo(cfg, "codebook");
    std::fprintf(stderr, "codebook: %d rows, k=%d, %d iterations, wrote %s\n", n_rows,
                 k, stats.iterations, out.c_str());
    return 0;
}

int cmd_golden(const GlobalArgs& g, const std::string& pairs_path,
               const std::string& codebook_path) {
    config::PipelineConfig cfg = effective_config(g);
    codec::Codebook cb = codec::read_codebook(codebook_path);
    std::vector<align::PairEntry> pairs = align::read_pair_manifest(pairs_path);
    std::vector<align::GoldenTarget> targets;
    int skipped = 0;
    for (const auto& pair : pairs) {
        try {
            dsp::AudioBuffer l1 = dsp::load_wav(pair.l1_wav, cfg.sample_rate);
            dsp::AudioBuffer l2 = dsp::load_wav(pair.l2_wav, cfg.sample_rate);
            dsp::FeatureSequence f1 = dsp::extract_features(l1, cfg.frame);
            dsp::FeatureSequence f2 = dsp::extract_features(l2, cfg.frame);
            dsp::VadMask v1 = dsp::energy_vad(f1, cfg.vad_threshold_db, cfg.vad_hangover);
            dsp::VadMask v2 = dsp::energy_vad(f2, cfg.vad_threshold_db, cfg.vad_hangover);
            dsp::FeatureSequence aligned = align::silence_aware_align(f1, f2, v1, v2);
            targets.push_back(align::build_golden_target(aligned, v2, cb, pair.pair_id));
        } catch (const Error& e) {
            std::fprintf(stderr, "golden: skipping pair %s: %s\n", pair.pair_id.c_str(),
                         e.what());
            ++skipped;
        }
    }
    std::string out = out_path(cfg, "golden.tsv");
    align::write_golden_manifest(out, targets);
    write_echo(cfg, "golden");
    std::fprintf(stderr, "golden: wrote %zu targets to %s (%d skipped)\n",
                 targets.size(), out.c_str(), skipped);
    if (skipped > 0)
        raise(Errc::partial, std::to_string(skipped) + " pairs skipped");
    return 0;
}

int cmd_train(const GlobalArgs& g, bool resume, std::optional<int> steps_override) {
    config::PipelineConfig cfg = effective_config(g);
    if (steps_override)
        cfg.opt.max_steps = *steps_override;
    if (cfg.model.vocab != cfg.task.vocab)
        raise(Errc::config, "model vocab and task vocab differ");
    translator::Translator model;
    model.build(cfg.model, cfg.seed);
    train::TrainPaths paths;
    paths.checkpoint = cfg.checkpoint_path.empty() ? out_path(cfg, "checkpoint.ckpt")
                                                   : cfg.checkpoint_path;
    paths.train_state = out_path(cfg, "train_state.trst");
    paths.loss_log = out_path(cfg, "loss_log.txt");
    write_echo(cfg, "train");
    train::TrainResult res = train::train_loop(model, cfg.task, cfg.opt, paths, resume);
    train::AccuracyReport acc = train::evaluate_accuracy(model, cfg.task, 25);
    std::fprintf(stderr,
                 "train: %lld steps, joint %.4f, held-out frame acc %.4f "
                 "(copy-through %.4f), wrote %s\n",
                 static_cast<long long>(res.steps_done), res.final_joint,
                 acc.model_acc, acc.copy_acc, paths.checkpoint.c_str());
    return 0;
}

std::vector<double> pcm16_to_doubles(const char* bytes, size_t n_bytes) {
    std::vector<double> out(n_bytes / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        uint16_t lo = static_cast<uint8_t>(bytes[2 * i]);
        uint16_t hi = static_cast<uint8_t>(bytes[2 * i + 1]);
        int16_t s = static_cast<int16_t>(lo | (hi << 8));
        out[i] = s / 32768.0;
    }
    return out;
}

int cmd_stream(const GlobalArgs& g, const std::string& checkpoint_path,
               const std::string& codebook_path, std::optional<int> chunk_ms,
               bool greedy, const std::string& wav_path) {
    config::PipelineConfig cfg = effective_config(g);
    if (chunk_ms)
        cfg.chunk_ms = *chunk_ms;
    if (greedy)
        cfg.sampler.greedy = true;
    translator::Translator model = translator::Translator::load(checkpoint_path);
    codec::Codebook cb = codec::read_codebook(codebook_path);
    stream::Session session(model, cb, cfg.chunk_config(), cfg.budget, cfg.sampler);

    auto emit = [](const stream::Emitted& e) {
        for (int32_t id : e.tokens.tokens)
            std::printf("%d\n", id);
    };

    stream::Session::FlushResult fin;
    int chunk_samples = cfg.chunk_config().chunk_samples();
    if (!wav_path.empty()) {
        dsp::AudioBuffer audio = dsp::load_wav(wav_path, cfg.sample_rate);
        size_t pos = 0;
        while (pos + static_cast<size_t>(chunk_samples) <= audio.samples.size()) {
            emit(session.push_chunk(
                std::span<const double>(audio.samples).subspan(pos, chunk_samples)));
            pos += static_cast<size_t>(chunk_samples);
        }
        fin = session.flush(std::span<const double>(audio.samples).subspan(pos));
    } else {
        std::vector<char> buf(static_cast<size_t>(chunk_samples) * 2);
        while (true) {
            std::cin.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            std::streamsize got = std::cin.gcount();
            if (got == static_cast<std::streamsize>(buf.size())) {
                std::vector<double> samples = pcm16_to_doubles(buf.data(), buf.size());
                emit(session.push_chunk(samples));
            } else {
                if (got % 2 != 0)
                    raise(Errc::data, "stdin ended mid-sample (odd byte count)");
                std::vector<double> tail =
                    pcm16_to_doubles(buf.data(), static_cast<size_t>(got));
                fin = session.flush(tail);
                break;
            }
        }
    }
    emit(fin.emitted);
    std::string report_line = fin.report.to_text();
    for (char& c : report_line) {
        if (c == '\n')
            c = ' ';
    }
    std::printf("# %s\n", report_line.c_str());
    fin.report.write_file(out_path(cfg, "stream_report.txt"));
    write_echo(cfg, "stream");
    return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& originals_path,
             const std::string& converted_path, const std::string& codebook_path) {
    config::PipelineConfig cfg = effective_config(g);
    codec::Codebook cb = codec::read_codebook(codebook_path);
    auto originals = codec::read_token_file(originals_path);
    auto converted = codec::read_token_file(converted_path);
    if (originals.empty() || originals.size() != converted.size())
        raise(Errc::data, "original and converted token files must pair up");

    eval::ProbeSpec spec = eval::synthetic_probe_spec();
    std::vector<eval::ProbePosterior> post_orig, post_conv;
    eval::MetricsReport report;
    for (size_t i = 0; i < originals.size(); ++i) {
        post_orig.push_back(eval::synthetic_probe(originals[i], cfg.task));
        post_conv.push_back(eval::synthetic_probe(converted[i], cfg.task));
        dsp::FeatureSequence src = codec::decode_tokens(originals[i], cb);
        dsp::FeatureSequence conv = codec::decode_tokens(converted[i], cb);
        eval::UtteranceRow row;
        row.id = "u" + std::to_string(i);
        row.p_na_orig = eval::native_mass(post_orig.back(), spec);
        row.p_na_conv = eval::native_mass(post_conv.back(), spec);
        row.spk_sim = eval::cosine(eval::speaker_embedding(src),
                                   eval::speaker_embedding(conv));
        report.rows.push_back(row);
    }
    report.accent = eval::accent_metrics(post_orig, post_conv, spec);
    double mean = 0.0;
    for (const auto& r : report.rows)
        mean += r.spk_sim;
    mean /= static_cast<double>(report.rows.size());
    double var = 0.0;
    for (const auto& r : report.rows)
        var += (r.spk_sim - mean) * (r.spk_sim - mean);
    report.spk_sim_mean = mean;
    report.spk_sim_std = std::sqrt(var / static_cast<double>(report.rows.size()));
    report.write_files(out_path(cfg, "metrics.txt"), out_path(cfg, "metrics.csv"));
    write_echo(cfg, "eval");
    std::printf("%s", report.to_text().c_str());
    return 0;
}

int cmd_bench(const GlobalArgs& g, double duration_s,
              const std::string& checkpoint_path, const std::string& codebook_path) {
    config::PipelineConfig cfg = effective_config(g);
    if (duration_s <= 0)
        raise(Errc::config, "bench duration must be positive");

    // Deterministic noise input; bench measures compute, not semantics.
    int n_samples = static_cast<int>(duration_s * cfg.sample_rate);
    Rng rng(derive_seed(cfg.seed, /*stream=*/8));
    dsp::AudioBuffer audio;
    audio.sample_rate = cfg.sample_rate;
    audio.samples.resize(n_samples);
    for (double& s : audio.samples)
        s = rng.uniform(-0.5, 0.5);

    translator::Translator model;
    if (!checkpoint_path.empty()) {
        model = translator::Translator::load(checkpoint_path);
    } else {
        model.build(cfg.model, cfg.seed);
    }
    codec::Codebook cb;
    if (!codebook_path.empty()) {
        cb = codec::read_codebook(codebook_path);
    } else {
        dsp::FeatureSequence feat = dsp::extract_features(audio, cfg.frame);
        cb = codec::kmeans_train(feat.data, feat.frames(), cfg.frame.n_mels,
                                 model.config().vocab, 10, cfg.seed);
    }

    std::printf("chunk_ms algorithmic_ms mean_compute_ms max_compute_ms "
                "end_to_end_ms rtf\n");
    for (int chunk_ms : {80, 160}) {
        config::PipelineConfig run_cfg = cfg;
        run_cfg.chunk_ms = chunk_ms;
        run_cfg.sampler.greedy = true;
        stream::Session session(model, cb, run_cfg.chunk_config(), run_cfg.budget,
                                run_cfg.sampler);
        int chunk_samples = run_cfg.chunk_config().chunk_samples();
        size_t pos = 0;
        while (pos + static_cast<size_t>(chunk_samples) <= audio.samples.size()) {
            session.push_chunk(
                std::span<const double>(audio.samples).subspan(pos, chunk_samples));
            pos += static_cast<size_t>(chunk_samples);
        }
        auto fin = session.flush(std::span<const double>(audio.samples).subspan(pos));
        const stream::LatencyReport& r = fin.report;
        std::printf("%d %.0f %.3f %.3f %.3f %.4f\n", chunk_ms, r.algorithmic_ms,
                    r.mean_compute_ms, r.max_compute_ms, r.end_to_end_ms, r.rtf);
        r.write_file(out_path(cfg, "bench_report_" + std::to_string(chunk_ms) + ".txt"));
    }
    write_echo(cfg, "bench");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming accent-neutralization pipeline"};
    app.require_subcommand(1);
    // Global flags (--config, --seed, --out) are accepted on either side of
    // the subcommand name.
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key = value config file");
    uint64_t seed_value = 0;
    auto* seed_opt =
        app.add_option("--seed", seed_value, "override every seeded component");
    app.add_option("--out", g.out_dir, "output directory (default .)");

    auto* sc_codebook = app.add_subcommand("codebook", "train a k-means codebook");
    std::string cb_manifest;
    int cb_k = 16, cb_iters = 50;
    sc_codebook->add_option("--manifest", cb_manifest, "text file of WAV paths")
        ->required();
    sc_codebook->add_option("--k", cb_k, "codebook size");
    sc_codebook->add_option("--iters", cb_iters, "max Lloyd iterations");

    auto* sc_golden = app.add_subcommand("golden", "build golden-target manifest");
    std::string gd_pairs, gd_codebook;
    sc_golden->add_option("--pairs", gd_pairs, "pair manifest (id, l1, l2)")->required();
    sc_golden->add_option("--codebook", gd_codebook, "PHN-CB codebook file")->required();

    auto* sc_train = app.add_subcommand("train", "train the accent translator");
    bool tr_resume = false;
    std::optional<int> tr_steps;
    sc_train->add_flag("--resume", tr_resume, "resume from the training-state sidecar");
    int tr_steps_value = 0;
    auto* tr_steps_opt = sc_train->add_option("--steps", tr_steps_value,
                                              "override opt.max_steps");

    auto* sc_stream = app.add_subcommand("stream", "stream PCM16 audio to tokens");
    std::string st_ckpt, st_cb, st_wav;
    std::optional<int> st_chunk;
    int st_chunk_value = 0;
    bool st_greedy = false;
    sc_stream->add_option("--checkpoint", st_ckpt, "PHN-CKPT file")->required();
    sc_stream->add_option("--codebook", st_cb, "PHN-CB file")->required();
    auto* st_chunk_opt = sc_stream->add_option("--chunk-ms", st_chunk_value,
                                               "chunk size in ms");
    sc_stream->add_flag("--greedy", st_greedy, "argmax decoding instead of sampling");
    sc_stream->add_option("--wav", st_wav, "read this WAV instead of stdin");

    auto* sc_eval = app.add_subcommand("eval", "accent and speaker metrics");
    std::string ev_orig, ev_conv, ev_cb;
    sc_eval->add_option("--originals", ev_orig, "token file of source utterances")
        ->required();
    sc_eval->add_option("--converted", ev_conv, "token file of converted utterances")
        ->required();
    sc_eval->add_option("--codebook", ev_cb, "PHN-CB file")->required();

    auto* sc_bench = app.add_subcommand("bench", "latency/RTF over chunk sizes");
    double bn_duration = 4.0;
    std::string bn_ckpt, bn_cb;
    sc_bench->add_option("--duration-s", bn_duration, "synthetic audio length");
    sc_bench->add_option("--checkpoint", bn_ckpt, "optional PHN-CKPT file");
    sc_bench->add_option("--codebook", bn_cb, "optional PHN-CB file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(Errc::config);
    }

    if (*seed_opt)
        g.seed = seed_value;
    if (*tr_steps_opt)
        tr_steps = tr_steps_value;
    if (*st_chunk_opt)
        st_chunk = st_chunk_value;

    try {
        if (sc_codebook->parsed())
            return cmd_codebook(g, cb_manifest, cb_k, cb_iters);
        if (sc_golden->parsed())
            return cmd_golden(g, gd_pairs, gd_codebook);
        if (sc_train->parsed())
            return cmd_train(g, tr_resume, tr_steps);
        if (sc_stream->parsed())
            return cmd_stream(g, st_ckpt, st_cb, st_chunk, st_greedy, st_wav);
        if (sc_eval->parsed())
            return cmd_eval(g, ev_orig, ev_conv, ev_cb);
        if (sc_bench->parsed())
            return cmd_bench(g, bn_duration, bn_ckpt, bn_cb);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(Errc::data);
    }
    return static_cast<int>(Errc::config);
}
