// Acceptance gate: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Oracles are computed in-file (path enumeration, finite
// differences, closed forms); every tolerance is pinned as a constant below.

#include "phonos/align.hpp"
#include "phonos/codec.hpp"
#include "phonos/dsp.hpp"
#include "phonos/error.hpp"
#include "phonos/eval.hpp"
#include "phonos/nn.hpp"
#include "phonos/rng.hpp"
#include "phonos/stream.hpp"
#include "phonos/train.hpp"
#include "phonos/translator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

using namespace phonos;
namespace fs = std::filesystem;

namespace {

constexpr double kCtcTol = 1e-6;   // criterion 2, log domain
constexpr double kFdTol = 1e-4;    // criterion 3, max relative error
constexpr double kFdStep = 1e-4;   // criterion 3, central difference step
constexpr double kLrTol = 1e-9;    // criterion 10
constexpr double kAccMin = 0.95;   // criterion 7, held-out frame accuracy
constexpr double kDpMin = 0.5;     // criterion 7, probe delta_p
constexpr double kCnaMin = 90.0;   // criterion 7, probe C_NA percent

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: DTW against exhaustive monotonic-path enumeration.

void enumerate_paths(const align::CostMatrix& c, int i, int j, double acc,
                     double& best) {
    acc += c.at(i, j);
    if (i == c.n - 1 && j == c.m - 1) {
        best = std::min(best, acc);
        return;
    }
    if (i + 1 < c.n && j + 1 < c.m)
        enumerate_paths(c, i + 1, j + 1, acc, best);
    if (i + 1 < c.n)
        enumerate_paths(c, i + 1, j, acc, best);
    if (j + 1 < c.m)
        enumerate_paths(c, i, j + 1, acc, best);
}

bool criterion_dtw(std::string& detail) {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        align::CostMatrix c;
        c.n = 1 + static_cast<int>(rng.uniform_int(6));
        c.m = 1 + static_cast<int>(rng.uniform_int(7));
        c.costs.resize(static_cast<size_t>(c.n) * c.m);
        // Dyadic costs (k/16) make every path sum exact, so equality is ==.
        for (double& v : c.costs)
            v = static_cast<double>(rng.uniform_int(0, 20)) / 16.0;

        auto [path, cost] = align::dtw(c);
        double best = std::numeric_limits<double>::infinity();
        enumerate_paths(c, 0, 0, 0.0, best);
        if (cost != best) {
            detail = fmt("trial %d (%dx%d): dtw %.17g vs enumeration %.17g", trial,
                         c.n, c.m, cost, best);
            return false;
        }
        double path_sum = 0.0;
        for (auto [i, j] : path.steps)
            path_sum += c.at(i, j);
        if (path_sum != cost || path.steps.front() != std::pair<int, int>{0, 0} ||
            path.steps.back() != std::pair<int, int>{c.n - 1, c.m - 1}) {
            detail = fmt("trial %d: returned path inconsistent with its cost", trial);
            return false;
        }
    }
    detail = "200 matrices up to 6x7, exact equality";
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 2: CTC against brute-force alignment enumeration.

std::vector<int32_t> collapse(const std::vector<int32_t>& path, int blank) {
    std::vector<int32_t> out;
    int32_t prev = -1;
    for (int32_t s : path) {
        if (s != prev && s != blank)
            out.push_back(s);
        prev = s;
    }
    return out;
}

double enumerate_ctc(const std::vector<double>& logits, int T, int C,
                     const std::vector<int32_t>& target, int blank) {
    std::vector<double> lsm(logits.size());
    for (int t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c)
            mx = std::max(mx, logits[static_cast<size_t>(t) * C + c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c)
            z += std::exp(logits[static_cast<size_t>(t) * C + c] - mx);
        for (int c = 0; c < C; ++c)
            lsm[static_cast<size_t>(t) * C + c] =
                logits[static_cast<size_t>(t) * C + c] - mx - std::log(z);
    }
    double total = 0.0;
    std::vector<int32_t> path(static_cast<size_t>(T));
    std::function<void(int, double)> rec = [&](int t, double lp) {
        if (t == T) {
            if (collapse(path, blank) == target)
                total += std::exp(lp);
            return;
        }
        for (int c = 0; c < C; ++c) {
            path[static_cast<size_t>(t)] = c;
            rec(t + 1, lp + lsm[static_cast<size_t>(t) * C + c]);
        }
    };
    rec(0, 0.0);
    return -std::log(total);
}

bool ctc_feasible(const std::vector<int32_t>& target, int T) {
    int repeats = 0;
    for (size_t i = 1; i < target.size(); ++i)
        repeats += target[i] == target[i - 1];
    return T >= static_cast<int>(target.size()) + repeats;
}

bool criterion_ctc(std::string& detail) {
    Rng rng(202);
    int done = 0;
    double worst = 0.0;
    while (done < 200) {
        int C = 2 + static_cast<int>(rng.uniform_int(3)); // classes incl blank
        int blank = static_cast<int>(rng.uniform_int(C));
        int T = 1 + static_cast<int>(rng.uniform_int(6));
        int L = 1 + static_cast<int>(rng.uniform_int(3));
        std::vector<int32_t> target;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            target.clear();
            for (int i = 0; i < L; ++i) {
                int32_t id = static_cast<int32_t>(rng.uniform_int(C));
                while (id == blank)
                    id = static_cast<int32_t>(rng.uniform_int(C));
                target.push_back(id);
            }
            ok = ctc_feasible(target, T);
        }
        if (!ok)
            continue;

        nn::TensorPtr logits = nn::make_tensor({T, C}, true);
        for (double& v : logits->values)
            v = 1.5 * rng.normal();
        double got = nn::ctc_loss(logits, target, blank)->values[0];
        double want = enumerate_ctc(logits->values, T, C, target, blank);
        worst = std::max(worst, std::abs(got - want));
        if (std::abs(got - want) > kCtcTol) {
            detail = fmt("instance %d (T=%d L=%zu C=%d): |%.12g - %.12g| > %g", done,
                         T, target.size(), C, got, want, kCtcTol);
            return false;
        }
        ++done;
    }
    detail = fmt("200 instances, max |diff| %.3g (tol %g)", worst, kCtcTol);
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 3: central finite differences on every block and the full tiny
// translator.

void roughen(nn::ParameterSet& ps, uint64_t seed) {
    Rng rng(seed);
    for (const auto& [name, t] : ps.entries())
        for (double& v : t->values)
            v += rng.uniform(-0.3, 0.3);
}

double fd_max_rel_err(nn::ParameterSet& ps,
                      const std::function<nn::TensorPtr()>& build) {
    ps.zero_grad();
    nn::TensorPtr loss = build();
    nn::backward(loss);
    std::vector<std::vector<double>> grads;
    for (const auto& [name, t] : ps.entries())
        grads.push_back(t->grad.empty() ? std::vector<double>(t->values.size(), 0.0)
                                        : t->grad);
    double worst = 0.0;
    size_t e = 0;
    for (const auto& [name, t] : ps.entries()) {
        for (size_t i = 0; i < t->values.size(); ++i) {
            double orig = t->values[i];
            t->values[i] = orig + kFdStep;
            double fp = build()->values[0];
            t->values[i] = orig - kFdStep;
            double fm = build()->values[0];
            t->values[i] = orig;
            double fd = (fp - fm) / (2.0 * kFdStep);
            double an = grads[e][i];
            double rel = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
            worst = std::max(worst, rel);
        }
        ++e;
    }
    return worst;
}

nn::TensorPtr fixed_tensor(std::vector<int> shape, uint64_t seed) {
    nn::TensorPtr t = nn::make_tensor(std::move(shape));
    Rng rng(seed);
    for (double& v : t->values)
        v = rng.uniform(-1.0, 1.0);
    return t;
}

bool criterion_grad(std::string& detail) {
    double worst_cx, worst_att, worst_gate, worst_full;
    {
        nn::ParameterSet ps;
        ps.set_seed(301);
        ps.add_weight("cx.dw_w", {4, 3}, 3);
        ps.add_zeros("cx.dw_b", {4});
        ps.add_ones("cx.ln_g", {4});
        ps.add_zeros("cx.ln_b", {4});
        ps.add_weight("cx.p1_w", {4, 16}, 4);
        ps.add_zeros("cx.p1_b", {16});
        ps.add_weight("cx.p2_w", {16, 4}, 16);
        ps.add_zeros("cx.p2_b", {4});
        roughen(ps, 311);
        nn::TensorPtr x = fixed_tensor({5, 4}, 312);
        nn::TensorPtr w = fixed_tensor({5, 4}, 313);
        worst_cx = fd_max_rel_err(
            ps, [&] { return nn::sum(nn::mul(nn::convnext_block(x, ps, "cx", 3), w)); });
    }
    {
        nn::ParameterSet ps;
        ps.set_seed(302);
        ps.add_ones("att.ln1_g", {4});
        ps.add_zeros("att.ln1_b", {4});
        for (const char* n : {"wq", "wk", "wv", "wo"})
            ps.add_weight(std::string("att.") + n, {4, 4}, 4);
        for (const char* n : {"bq", "bk", "bv", "bo"})
            ps.add_zeros(std::string("att.") + n, {4});
        ps.add_ones("att.ln2_g", {4});
        ps.add_zeros("att.ln2_b", {4});
        ps.add_weight("att.w1", {4, 16}, 4);
        ps.add_zeros("att.b1", {16});
        ps.add_weight("att.w2", {16, 4}, 16);
        ps.add_zeros("att.b2", {4});
        roughen(ps, 321);
        nn::TensorPtr x = fixed_tensor({6, 4}, 322);
        nn::TensorPtr w = fixed_tensor({6, 4}, 323);
        worst_att = fd_max_rel_err(ps, [&] {
            return nn::sum(
                nn::mul(nn::windowed_attention(x, ps, "att", 2, {2, 1}), w));
        });
    }
    {
        nn::ParameterSet ps;
        ps.set_seed(303);
        ps.add_weight("gate.w", {6, 3}, 6);
        ps.add_zeros("gate.b", {3});
        roughen(ps, 331);
        nn::TensorPtr deep = fixed_tensor({4, 3}, 332);
        nn::TensorPtr skip = fixed_tensor({4, 3}, 333);
        nn::TensorPtr w = fixed_tensor({4, 3}, 334);
        worst_gate = fd_max_rel_err(
            ps, [&] { return nn::sum(nn::mul(nn::gated_skip(deep, skip, ps, "gate"), w)); });
    }
    {
        translator::TranslatorConfig cfg;
        cfg.vocab = 4;
        cfg.width = 8;
        cfg.heads = 2;
        cfg.tf_layers = 1;
        cfg.front_layers = 1;
        cfg.rear_layers = 1;
        cfg.kernel = 3;
        cfg.past_ms = 100;
        cfg.future_ms = 40;
        translator::Translator model;
        model.build(cfg, 341);
        roughen(model.params(), 342);
        std::vector<int32_t> tokens = {0, 2, 1, 3, 2, 0};
        std::vector<int32_t> frame_targets = {1, 1, 3, 0, 2, 2};
        std::vector<int32_t> ctc_target = {1, 2};
        worst_full = fd_max_rel_err(model.params(), [&] {
            return translator::joint_loss(model.forward(tokens), frame_targets,
                                          ctc_target, cfg, {0.7, 1.3})
                .total;
        });
    }
    detail = fmt("max rel err: convnext %.2e, attention %.2e, gate %.2e, "
                 "tiny translator %.2e (tol %g)",
                 worst_cx, worst_att, worst_gate, worst_full, kFdTol);
    return worst_cx <= kFdTol && worst_att <= kFdTol && worst_gate <= kFdTol &&
           worst_full <= kFdTol;
}

// ---------------------------------------------------------------------------
// Criterion 4: lookahead contract on the desk config.

bool criterion_lookahead(std::string& detail) {
    translator::TranslatorConfig cfg; // desk defaults: 40 ms = 2 frames future
    translator::Translator model;
    model.build(cfg, 404);
    const int T = 30;
    const int look = cfg.future_frames();
    Rng rng(405);
    std::vector<int32_t> tokens(T);
    for (auto& t : tokens)
        t = static_cast<int32_t>(rng.uniform_int(cfg.vocab));
    nn::TensorPtr base = model.forward(tokens);
    int cols = cfg.classes();

    for (int p = 0; p < T; ++p) {
        std::vector<int32_t> perturbed = tokens;
        perturbed[static_cast<size_t>(p)] =
            (tokens[static_cast<size_t>(p)] + 7) % cfg.vocab;
        nn::TensorPtr out = model.forward(perturbed);
        for (int r = 0; r + look < p; ++r) {
            for (int c = 0; c < cols; ++c) {
                size_t idx = static_cast<size_t>(r) * cols + c;
                if (out->values[idx] != base->values[idx]) {
                    detail = fmt("perturbing frame %d changed logit at frame %d "
                                 "(beyond the %d-frame lookahead)",
                                 p, r, look);
                    return false;
                }
            }
        }
    }
    detail = fmt("T=30 sweep, frames beyond t+%d bit-identical", look);
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 10: scheduler factor after 250000 steps.

bool criterion_scheduler(std::string& detail) {
    train::OptimizerConfig opt;
    double factor = opt.lr_at(250000) / opt.lr0;
    double direct = std::pow(0.999996, 250000.0);
    double diff = std::abs(factor - direct);
    detail = fmt("factor %.12g vs direct %.12g (|diff| %.3g, tol %g; e^-1 off by %.2e)",
                 factor, direct, diff, kLrTol, std::abs(direct - std::exp(-1.0)));
    return diff <= kLrTol;
}

// ---------------------------------------------------------------------------
// Shared fixtures for the streaming and task-level criteria.

translator::TranslatorConfig tiny_model_config() {
    translator::TranslatorConfig cfg;
    cfg.vocab = 16;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.tf_layers = 1;
    cfg.front_layers = 1;
    cfg.rear_layers = 1;
    cfg.kernel = 3;
    cfg.past_ms = 200;
    cfg.future_ms = 40;
    return cfg;
}

std::vector<int32_t> argmax_content(const nn::TensorPtr& logits, int blank) {
    int T = logits->shape[0], C = logits->shape[1];
    std::vector<int32_t> out(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        int best = -1;
        for (int c = 0; c < C; ++c) {
            if (c == blank)
                continue;
            if (best < 0 ||
                logits->values[static_cast<size_t>(t) * C + c] >
                    logits->values[static_cast<size_t>(t) * C + best])
                best = c;
        }
        out[static_cast<size_t>(t)] = best;
    }
    return out;
}

std::vector<int32_t> offline_greedy(const dsp::AudioBuffer& audio,
                                    const dsp::FrameSpec& spec,
                                    const codec::Codebook& cb,
                                    const translator::Translator& model) {
    dsp::FeatureSequence feat = dsp::extract_features(audio, spec);
    codec::TokenSequence tokens = codec::quantize(feat, cb);
    if (tokens.tokens.empty())
        return {};
    nn::TensorPtr logits = model.forward(tokens.tokens);
    return argmax_content(logits, model.config().blank_id());
}

struct StreamRun {
    std::vector<int32_t> tokens;
    stream::LatencyReport report;
};

StreamRun run_stream(const translator::Translator& model, const codec::Codebook& cb,
                     const dsp::FrameSpec& spec, int chunk_ms,
                     std::span<const double> samples) {
    stream::ChunkConfig cc;
    cc.chunk_ms = chunk_ms;
    cc.sample_rate = 16000;
    cc.frame = spec;
    stream::SamplerConfig sc;
    sc.greedy = true;
    stream::Session session(model, cb, cc, stream::LookaheadBudget{}, sc);

    StreamRun run;
    auto take = [&run](const stream::Emitted& e) {
        run.tokens.insert(run.tokens.end(), e.tokens.tokens.begin(),
                          e.tokens.tokens.end());
    };
    size_t cs = static_cast<size_t>(cc.chunk_samples());
    size_t pos = 0;
    while (pos + cs <= samples.size()) {
        take(session.push_chunk(samples.subspan(pos, cs)));
        pos += cs;
    }
    auto fin = session.flush(samples.subspan(pos));
    take(fin.emitted);
    run.report = fin.report;
    return run;
}

// ---------------------------------------------------------------------------
// Criterion 6: algorithmic latency accounting.

bool criterion_latency(std::string& detail) {
    translator::Translator model;
    model.build(tiny_model_config(), 606);
    codec::Codebook cb;
    cb.k = 16;
    cb.dim = 40;
    cb.centroids.resize(16 * 40);
    for (int i = 0; i < 16; ++i)
        for (int d = 0; d < 40; ++d)
            cb.centroids[static_cast<size_t>(i) * 40 + d] = i + 0.1 * d;

    Rng rng(607);
    std::vector<double> audio(16000);
    for (double& s : audio)
        s = rng.uniform(-0.5, 0.5);

    dsp::FrameSpec spec; // default 400/320/40
    StreamRun r80 = run_stream(model, cb, spec, 80, audio);
    StreamRun r160 = run_stream(model, cb, spec, 160, audio);
    if (r80.report.algorithmic_ms != 200.0 || r160.report.algorithmic_ms != 280.0) {
        detail = fmt("algorithmic %.17g/%.17g ms, expected exactly 200/280",
                     r80.report.algorithmic_ms, r160.report.algorithmic_ms);
        return false;
    }
    detail = fmt("80 ms -> 200 ms, 160 ms -> 280 ms exactly; measured RTF "
                 "%.3f/%.3f (reported, no target)",
                 r80.report.rtf, r160.report.rtf);
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 5: streamed greedy tokens equal the offline forward, invariant to
// chunk size.

bool criterion_stream_offline(std::string& detail) {
    translator::TranslatorConfig cfg; // desk defaults, untrained weights
    translator::Translator model;
    model.build(cfg, 505);
    codec::Codebook cb;
    cb.k = cfg.vocab;
    cb.dim = 40;
    cb.centroids.resize(static_cast<size_t>(cb.k) * cb.dim);
    Rng crng(506);
    for (double& v : cb.centroids)
        v = crng.normal();

    dsp::FrameSpec spec; // default 400/320/40
    for (int u = 0; u < 20; ++u) {
        Rng rng(derive_seed(507, /*stream=*/0, static_cast<uint64_t>(u)));
        int n = static_cast<int>(rng.uniform_int(16000, 80000)); // 1 to 5 s
        dsp::AudioBuffer audio;
        audio.sample_rate = 16000;
        audio.samples.resize(static_cast<size_t>(n));
        for (double& s : audio.samples)
            s = rng.uniform(-0.5, 0.5);

        std::vector<int32_t> offline = offline_greedy(audio, spec, cb, model);
        StreamRun s80 = run_stream(model, cb, spec, 80, audio.samples);
        StreamRun s160 = run_stream(model, cb, spec, 160, audio.samples);
        if (s80.tokens != offline) {
            detail = fmt("utterance %d (%d samples): 80 ms stream differs from "
                         "offline (%zu vs %zu tokens)",
                         u, n, s80.tokens.size(), offline.size());
            return false;
        }
        if (s160.tokens != offline) {
            detail = fmt("utterance %d (%d samples): 160 ms stream differs from "
                         "offline",
                         u, n);
            return false;
        }
    }
    detail = "20 utterances of 1-5 s: streamed == offline at 80 and 160 ms";
    return true;
}

// ---------------------------------------------------------------------------
// Criterion 7: desk-scale accent neutralization analog (3000-step training).

struct TrainedContext {
    translator::Translator model;
    train::SyntheticAccentTask task;
    bool ready = false;
};

TrainedContext g_trained;

bool criterion_neutralization(std::string& detail) {
    train::SyntheticAccentTask task = train::SyntheticAccentTask::desk_default(21);
    translator::TranslatorConfig cfg; // desk defaults: width 64, 2 tf layers
    translator::Translator model;
    model.build(cfg, 21);
    train::OptimizerConfig opt; // defaults: batch 8, 3000 steps
    opt.seed = 21;

    fs::path dir = fs::temp_directory_path() / "phonos_acceptance";
    fs::create_directories(dir);
    train::TrainPaths paths;
    paths.checkpoint = (dir / "model.ckpt").string();
    paths.train_state = (dir / "model.trst").string();
    paths.loss_log = (dir / "loss_log.txt").string();
    fs::remove(paths.train_state); // always a fresh run
    train::TrainResult res = train::train_loop(model, task, opt, paths);

    train::AccuracyReport acc = train::evaluate_accuracy(model, task, 200);

    eval::ProbeSpec spec = eval::synthetic_probe_spec();
    std::vector<eval::ProbePosterior> orig, conv;
    for (int i = 0; i < 200; ++i) {
        Rng rng(derive_seed(task.seed, /*stream=*/6, 100000 + static_cast<uint64_t>(i)));
        int len = static_cast<int>(rng.uniform_int(32, 56));
        train::TrainingPair pair = train::generate_pair(task, len, rng);
        std::vector<int32_t> translated =
            argmax_content(model.forward(pair.l2_tokens), cfg.blank_id());
        codec::TokenSequence l2, tr;
        l2.tokens = pair.l2_tokens;
        tr.tokens = translated;
        orig.push_back(eval::synthetic_probe(l2, task));
        conv.push_back(eval::synthetic_probe(tr, task));
    }
    eval::AccentMetrics m = eval::accent_metrics(orig, conv, spec);

    g_trained.model = std::move(model);
    g_trained.task = task;
    g_trained.ready = true;

    detail = fmt("%lld steps, joint %.4f; held-out acc %.4f (min %.2f), "
                 "delta_p %.3f (min %.1f), C_NA %.1f%% (min %.0f)",
                 static_cast<long long>(res.steps_done), res.final_joint,
                 acc.model_acc, kAccMin, m.delta_p, kDpMin, m.c_na, kCnaMin);
    return acc.model_acc >= kAccMin && m.delta_p >= kDpMin && m.c_na >= kCnaMin;
}

// ---------------------------------------------------------------------------
// Burst fixture shared by criteria 8 and 9: every token id has a fixed
// broadband 20 ms waveform (id 0 is digital silence), and the codebook's
// centroids are exactly those frames' features, so quantization recovers the
// token stream and the energy VAD separates silence cleanly.

dsp::FrameSpec burst_spec() {
    dsp::FrameSpec spec;
    spec.frame_len = 320;
    spec.hop = 320;
    spec.n_mels = 40;
    return spec;
}

const std::vector<std::vector<double>>& burst_waves() {
    static std::vector<std::vector<double>> waves = [] {
        std::vector<std::vector<double>> w(16);
        w[0].assign(320, 0.0);
        for (int id = 1; id < 16; ++id) {
            Rng rng(derive_seed(4242, /*stream=*/0, static_cast<uint64_t>(id)));
            w[static_cast<size_t>(id)].resize(320);
            for (double& s : w[static_cast<size_t>(id)])
                s = rng.uniform(-0.5, 0.5);
        }
        return w;
    }();
    return waves;
}

codec::Codebook burst_codebook() {
    codec::Codebook cb;
    cb.k = 16;
    cb.dim = 40;
    cb.centroids.resize(16 * 40);
    std::vector<double> silence = dsp::silence_row(40);
    std::copy(silence.begin(), silence.end(), cb.centroids.begin());
    for (int id = 1; id < 16; ++id) {
        dsp::AudioBuffer frame;
        frame.sample_rate = 16000;
        frame.samples = burst_waves()[static_cast<size_t>(id)];
        dsp::FeatureSequence f = dsp::extract_features(frame, burst_spec());
        std::copy(f.data.begin(), f.data.end(),
                  cb.centroids.begin() + static_cast<size_t>(id) * 40);
    }
    return cb;
}

dsp::AudioBuffer audio_from_tokens(const std::vector<int32_t>& tokens) {
    dsp::AudioBuffer audio;
    audio.sample_rate = 16000;
    audio.samples.reserve(tokens.size() * 320);
    for (int32_t id : tokens) {
        const std::vector<double>& w = burst_waves()[static_cast<size_t>(id)];
        audio.samples.insert(audio.samples.end(), w.begin(), w.end());
    }
    return audio;
}

// ---------------------------------------------------------------------------
// Criterion 8: converted output is less speaker-similar to the source than a
// plain reconstruction is.

bool criterion_speaker_trend(std::string& detail) {
    if (!g_trained.ready) {
        detail = "requires the trained model from criterion 7";
        return false;
    }
    codec::Codebook cb = burst_codebook();
    const train::SyntheticAccentTask& task = g_trained.task;
    int blank = g_trained.model.config().blank_id();

    Rng noise_rng(808);
    double sim_conv = 0.0, sim_recon = 0.0;
    const int n_utts = 60;
    for (int u = 0; u < n_utts; ++u) {
        Rng rng(derive_seed(809, /*stream=*/0, static_cast<uint64_t>(u)));
        int len = static_cast<int>(rng.uniform_int(32, 56));
        train::TrainingPair pair = train::generate_pair(task, len, rng);
        codec::TokenSequence l2, tr;
        l2.tokens = pair.l2_tokens;
        tr.tokens = argmax_content(g_trained.model.forward(pair.l2_tokens), blank);

        // Source features: the reconstruction plus a small speaker texture, so
        // the reconstructed-vs-source similarity is high but not degenerate.
        dsp::FeatureSequence src = codec::decode_tokens(l2, cb);
        for (double& v : src.data)
            v += 0.05 * noise_rng.normal();
        dsp::FeatureSequence recon = codec::decode_tokens(l2, cb);
        dsp::FeatureSequence conv = codec::decode_tokens(tr, cb);

        eval::SpeakerEmbedding e_src = eval::speaker_embedding(src);
        sim_recon += eval::cosine(eval::speaker_embedding(recon), e_src);
        sim_conv += eval::cosine(eval::speaker_embedding(conv), e_src);
    }
    sim_conv /= n_utts;
    sim_recon /= n_utts;
    detail = fmt("mean SpkSim over %d utterances: converted %.4f < reconstructed "
                 "%.4f",
                 n_utts, sim_conv, sim_recon);
    return sim_conv < sim_recon;
}

// ---------------------------------------------------------------------------
// Criterion 9: golden targets and streamed outputs keep T_L2 length and the
// exact silence positions of the L2 VAD mask.

bool criterion_silence(std::string& detail) {
    if (!g_trained.ready) {
        detail = "requires the trained model from criterion 7";
        return false;
    }
    codec::Codebook cb = burst_codebook();
    dsp::FrameSpec spec = burst_spec();
    train::SyntheticAccentTask task = g_trained.task;
    task.silence_prob = 0.5; // every utterance very likely has silence runs

    int64_t silent_frames = 0, voiced_frames = 0;
    for (int u = 0; u < 50; ++u) {
        Rng rng(derive_seed(909, /*stream=*/0, static_cast<uint64_t>(u)));
        int len = static_cast<int>(rng.uniform_int(32, 56));
        train::TrainingPair pair = train::generate_pair(task, len, rng);
        const std::vector<int32_t>& l2 = pair.l2_tokens;

        dsp::AudioBuffer l2_audio = audio_from_tokens(l2);
        dsp::FeatureSequence f2 = dsp::extract_features(l2_audio, spec);
        dsp::VadMask v2 = dsp::energy_vad(f2, 30.0, 0);
        if (f2.frames() != static_cast<int>(l2.size())) {
            detail = fmt("utterance %d: fixture framing off", u);
            return false;
        }
        for (size_t f = 0; f < l2.size(); ++f) {
            bool silent = l2[f] == task.silence_id;
            if (silent == v2.is_voiced(f)) {
                detail = fmt("utterance %d: VAD disagrees with the token stream "
                             "at frame %zu",
                             u, f);
                return false;
            }
            (silent ? silent_frames : voiced_frames) += 1;
        }

        // Native rendition of the same content for the alignment side.
        std::vector<int32_t> voiced_golden;
        for (int32_t id : pair.golden.frame_tokens.tokens)
            if (id != task.silence_id)
                voiced_golden.push_back(id);
        std::vector<int32_t> l1_tokens;
        for (int32_t id : codec::dedup(voiced_golden))
            l1_tokens.insert(l1_tokens.end(), 4, id);
        dsp::AudioBuffer l1_audio = audio_from_tokens(l1_tokens);
        dsp::FeatureSequence f1 = dsp::extract_features(l1_audio, spec);
        dsp::VadMask v1 = dsp::energy_vad(f1, 30.0, 0);

        dsp::FeatureSequence aligned = align::silence_aware_align(f1, f2, v1, v2);
        align::GoldenTarget golden =
            align::build_golden_target(aligned, v2, cb, "u" + std::to_string(u));
        if (golden.frame_tokens.size() != l2.size()) {
            detail = fmt("utterance %d: golden length %zu != T_L2 %zu", u,
                         golden.frame_tokens.size(), l2.size());
            return false;
        }
        for (size_t f = 0; f < l2.size(); ++f) {
            bool golden_silence = golden.frame_tokens.tokens[f] == task.silence_id;
            if (golden_silence != !v2.is_voiced(f)) {
                detail = fmt("utterance %d: golden silence mismatch at frame %zu", u, f);
                return false;
            }
        }

        StreamRun streamed =
            run_stream(g_trained.model, cb, spec, 80, l2_audio.samples);
        if (streamed.tokens.size() != l2.size()) {
            detail = fmt("utterance %d: streamed length %zu != T_L2 %zu", u,
                         streamed.tokens.size(), l2.size());
            return false;
        }
        for (size_t f = 0; f < l2.size(); ++f) {
            bool out_silence = streamed.tokens[f] == task.silence_id;
            if (out_silence != !v2.is_voiced(f)) {
                detail = fmt("utterance %d: streamed silence mismatch at frame %zu "
                             "(token %d, voiced %d)",
                             u, f, streamed.tokens[f], int(v2.is_voiced(f)));
                return false;
            }
        }
    }
    detail = fmt("50 utterances, %lld silent + %lld voiced frames, positions exact",
                 static_cast<long long>(silent_frames),
                 static_cast<long long>(voiced_frames));
    return true;
}

// ---------------------------------------------------------------------------

struct Criterion {
    int id;
    const char* name;
    bool (*fn)(std::string&);
};

} // namespace

int main() {
    const Criterion criteria[] = {
        {1, "DTW oracle equivalence", criterion_dtw},
        {2, "CTC oracle equivalence", criterion_ctc},
        {3, "gradient correctness", criterion_grad},
        {4, "lookahead contract", criterion_lookahead},
        {10, "scheduler check", criterion_scheduler},
        {6, "latency accounting", criterion_latency},
        {5, "streaming/offline equivalence", criterion_stream_offline},
        {7, "desk-scale accent neutralization", criterion_neutralization},
        {8, "speaker-similarity trend", criterion_speaker_trend},
        {9, "silence preservation", criterion_silence},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        std::string detail;
        bool ok = false;
        auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.fn(detail);
        } catch (const Error& e) {
            detail = std::string("raised: ") + e.what();
        } catch (const std::exception& e) {
            detail = std::string("raised: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        std::printf("[%s] criterion %d: %s (%s; %.1fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name, detail.c_str(), secs);
        std::fflush(stdout);
        failures += !ok;
    }
    std::printf("acceptance: %d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
