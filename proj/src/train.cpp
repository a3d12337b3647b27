#include "phonos/train.hpp"

#include "phonos/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace phonos::train {

void OptimizerConfig::validate() const {
    if (lr0 <= 0)
        raise(Errc::config, "lr0 must be positive");
    if (gamma <= 0 || gamma > 1)
        raise(Errc::config, "gamma must be in (0, 1]");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        raise(Errc::config, "adam betas must be in [0, 1)");
    if (weight_decay < 0)
        raise(Errc::config, "weight decay must be non-negative");
    if (batch < 1 || max_steps < 1 || checkpoint_every < 1)
        raise(Errc::config, "batch, max_steps, checkpoint_every must be >= 1");
}

void SyntheticAccentTask::validate() const {
    if (vocab < 2)
        raise(Errc::config, "task vocab must be >= 2");
    if (static_cast<int>(substitution.size()) != vocab)
        raise(Errc::config, "substitution map must cover [0, vocab)");
    for (int32_t id : substitution) {
        if (id < 0 || id >= vocab)
            raise(Errc::config, "substitution map image out of vocab range");
    }
    if (sub_prob < 0 || sub_prob > 1 || jitter_prob < 0 || jitter_prob > 1 ||
        silence_prob < 0 || silence_prob > 1)
        raise(Errc::config, "task probabilities must lie in [0, 1]");
    if (silence_id < 0 || silence_id >= vocab)
        raise(Errc::config, "silence id out of vocab range");
    if (native_min < 0 || native_max >= vocab || native_min > native_max)
        raise(Errc::config, "native id range invalid");
    if (silence_id >= native_min && silence_id <= native_max)
        raise(Errc::config, "silence id must not sit inside the native id range");
}

double SyntheticAccentTask::expected_substitution_rate() const {
    int pool = native_max - native_min + 1;
    int substitutable = 0;
    for (int32_t id = native_min; id <= native_max; ++id) {
        if (substitution[id] != id)
            ++substitutable;
    }
    return sub_prob * static_cast<double>(substitutable) / pool;
}

std::vector<int32_t> SyntheticAccentTask::marked_ids() const {
    std::vector<int32_t> out;
    for (int32_t id = 0; id < vocab; ++id) {
        if (substitution[id] != id)
            out.push_back(substitution[id]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SyntheticAccentTask SyntheticAccentTask::desk_default(uint64_t seed) {
    SyntheticAccentTask task;
    task.seed = seed;
    task.substitution.resize(task.vocab);
    for (int32_t i = 0; i < task.vocab; ++i)
        task.substitution[i] = i;
    // Accented speech realizes ids 1..4 as 12..15; those images never occur
    // natively, so the golden mapping is decidable frame by frame.
    task.substitution[1] = 12;
    task.substitution[2] = 13;
    task.substitution[3] = 14;
    task.substitution[4] = 15;
    return task;
}

TrainingPair generate_pair(const SyntheticAccentTask& task, int len, Rng& rng) {
    task.validate();
    if (len < 4)
        raise(Errc::config, "generated pairs need length >= 4");

    // Native side: voiced runs of 2..6 frames with occasional silence runs,
    // cut to exactly `len` frames.
    struct Run {
        int32_t id;
        int native_len;
        int l2_len;
    };
    std::vector<Run> runs;
    int total = 0;
    int32_t prev_id = -1;
    while (total < len) {
        int32_t id;
        do {
            id = static_cast<int32_t>(
                rng.uniform_int(task.native_min, task.native_max));
        } while (id == prev_id);
        int run_len = static_cast<int>(rng.uniform_int(2, 6));
        runs.push_back({id, run_len, run_len});
        prev_id = id;
        total += run_len;
        if (total < len && rng.bernoulli(task.silence_prob)) {
            int sil_len = static_cast<int>(rng.uniform_int(2, 6));
            runs.push_back({task.silence_id, sil_len, sil_len});
            prev_id = task.silence_id;
            total += sil_len;
        }
    }
    // Cut the overshoot off the final run(s).
    int excess = total - len;
    while (excess > 0) {
        Run& last = runs.back();
        int cut = std::min(excess, last.native_len);
        last.native_len -= cut;
        last.l2_len -= cut;
        excess -= cut;
        if (last.native_len == 0)
            runs.pop_back();
    }

    // Accent the runs: substitution plus one-frame repeat/drop jitter.
    for (Run& r : runs) {
        if (r.id != task.silence_id && rng.bernoulli(task.jitter_prob)) {
            if (rng.bernoulli(0.5))
                r.l2_len += 1;
            else
                r.l2_len = std::max(1, r.l2_len - 1);
        }
    }

    TrainingPair pair;
    for (const Run& r : runs) {
        int32_t l2_id = r.id;
        if (r.id != task.silence_id && task.substitution[r.id] != r.id &&
            rng.bernoulli(task.sub_prob))
            l2_id = task.substitution[r.id];
        for (int i = 0; i < r.l2_len; ++i) {
            pair.l2_tokens.push_back(l2_id);
            // Golden mirrors the l2 run length with the native id, the same
            // many-to-one stretching DTW produces.
            pair.golden.frame_tokens.tokens.push_back(r.id);
        }
    }
    std::vector<int32_t> voiced;
    for (int32_t id : pair.golden.frame_tokens.tokens) {
        if (id != task.silence_id)
            voiced.push_back(id);
    }
    pair.golden.ctc_tokens = codec::dedup(voiced);
    return pair;
}

void AdamState::init(const nn::ParameterSet& params) {
    m.clear();
    v.clear();
    for (const auto& [name, p] : params.entries()) {
        m.emplace_back(p->count(), 0.0);
        v.emplace_back(p->count(), 0.0);
    }
    t = 0;
}

double adamw_step(nn::ParameterSet& params, AdamState& state,
                  const OptimizerConfig& cfg) {
    const auto& entries = params.entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size())
        raise(Errc::config, "optimizer state does not match the parameter set");
    double lr = cfg.lr_at(state.t);
    state.t += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < entries.size(); ++i) {
        nn::Tensor& p = *entries[i].second;
        if (p.grad.size() != p.count())
            p.grad.assign(p.count(), 0.0);
        if (state.m[i].size() != p.count())
            raise(Errc::config, "optimizer moment size mismatch");
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (size_t j = 0; j < p.count(); ++j) {
            double g = p.grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p.values[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                 cfg.weight_decay * p.values[j]);
        }
    }
    return lr;
}

namespace {

constexpr uint64_t kTrainStream = 5;
constexpr uint64_t kHeldOutStream = 6;
constexpr int kMinLen = 32;
constexpr int kMaxLen = 56;

int32_t argmax_content(const double* row, int classes, int blank_id) {
    int32_t best = -1;
    double best_v = 0.0;
    for (int c = 0; c < classes; ++c) {
        if (c == blank_id)
            continue;
        if (best < 0 || row[c] > best_v) {
            best = c;
            best_v = row[c];
        }
    }
    return best;
}

} // namespace

TrainResult train_loop(translator::Translator& model, const SyntheticAccentTask& task,
                       const OptimizerConfig& opt, const TrainPaths& paths,
                       bool resume, translator::LossWeights weights) {
    opt.validate();
    task.validate();
    if (task.vocab != model.config().vocab)
        raise(Errc::config, "task vocab does not match model vocab");

    AdamState state;
    state.init(model.params());
    bool resumed = false;
    if (resume)
        resumed = read_train_state(paths.train_state, model.params(), state);

    std::ofstream log(paths.loss_log, resumed ? std::ios::app : std::ios::trunc);
    if (!paths.loss_log.empty() && !log)
        raise(Errc::data, "cannot open loss log: " + paths.loss_log);

    auto save_all = [&]() {
        if (!paths.checkpoint.empty())
            model.save(paths.checkpoint);
        if (!paths.train_state.empty())
            write_train_state(paths.train_state, model.params(), state);
    };

    TrainResult result;
    char line[160];
    for (int64_t step = state.t; step < opt.max_steps; ++step) {
        model.params().zero_grad();
        double ce_sum = 0.0, ctc_sum = 0.0, joint_sum = 0.0;
        double inv_batch = 1.0 / opt.batch;
        for (int b = 0; b < opt.batch; ++b) {
            uint64_t item_seed = derive_seed(
                opt.seed, kTrainStream,
                static_cast<uint64_t>(step) * static_cast<uint64_t>(opt.batch) +
                    static_cast<uint64_t>(b));
            Rng rng(item_seed);
            int len = static_cast<int>(rng.uniform_int(kMinLen, kMaxLen));
            TrainingPair pair = generate_pair(task, len, rng);
            auto logits = model.forward(pair.l2_tokens);
            auto joint = translator::joint_loss(logits, pair.golden.frame_tokens.tokens,
                                                pair.golden.ctc_tokens, model.config(),
                                                weights);
            if (!std::isfinite(joint.total->values[0]))
                raise(Errc::numeric,
                      "non-finite loss at step " + std::to_string(step) +
                          " (batch seed " + std::to_string(item_seed) + ")");
            ce_sum += joint.ce;
            ctc_sum += joint.ctc;
            joint_sum += joint.total->values[0];
            nn::backward(nn::scale(joint.total, inv_batch));
        }
        double lr = adamw_step(model.params(), state, opt);
        result.final_ce = ce_sum * inv_batch;
        result.final_ctc = ctc_sum * inv_batch;
        result.final_joint = joint_sum * inv_batch;
        if (log) {
            std::snprintf(line, sizeof line, "%lld %.8f %.8f %.8f %.10g\n",
                          static_cast<long long>(state.t), result.final_ce,
                          result.final_ctc, result.final_joint, lr);
            log << line;
        }
        if (state.t % opt.checkpoint_every == 0 && state.t < opt.max_steps)
            save_all();
    }
    result.steps_done = state.t;
    save_all();
    if (log)
        log.flush();
    return result;
}

AccuracyReport evaluate_accuracy(const translator::Translator& model,
                                 const SyntheticAccentTask& task, int n_pairs,
                                 int min_len, int max_len) {
    AccuracyReport rep;
    size_t model_hits = 0, copy_hits = 0;
    int classes = model.config().classes();
    int blank = model.config().blank_id();
    for (int i = 0; i < n_pairs; ++i) {
        Rng rng(derive_seed(task.seed, kHeldOutStream, static_cast<uint64_t>(i)));
        int len = static_cast<int>(
            rng.uniform_int(static_cast<int64_t>(min_len), static_cast<int64_t>(max_len)));
        TrainingPair pair = generate_pair(task, len, rng);
        auto logits = model.forward(pair.l2_tokens);
        int t = static_cast<int>(pair.l2_tokens.size());
        for (int f = 0; f < t; ++f) {
            const double* row = logits->values.data() + static_cast<size_t>(f) * classes;
            int32_t pred = argmax_content(row, classes, blank);
            int32_t want = pair.golden.frame_tokens.tokens[f];
            if (pred == want)
                ++model_hits;
            if (pair.l2_tokens[f] == want)
                ++copy_hits;
        }
        rep.frames += static_cast<size_t>(t);
    }
    if (rep.frames == 0)
        raise(Errc::data, "accuracy evaluation saw no frames");
    rep.model_acc = static_cast<double>(model_hits) / rep.frames;
    rep.copy_acc = static_cast<double>(copy_hits) / rep.frames;
    return rep;
}

void write_train_state(const std::string& path, const nn::ParameterSet& params,
                       const AdamState& state) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        raise(Errc::data, "cannot open train state for writing: " + path);
    f << "PHN-TRST v1\n";
    f << "step " << state.t << '\n';
    f << "params " << params.entries().size() << '\n';
    auto blob = [&f](const std::vector<double>& v) {
        f.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
        f << '\n';
    };
    const auto& entries = params.entries();
    for (size_t i = 0; i < entries.size(); ++i) {
        f << entries[i].first << ' ' << entries[i].second->count() << '\n';
        blob(entries[i].second->values);
        blob(state.m[i]);
        blob(state.v[i]);
    }
    if (!f)
        raise(Errc::data, "write failed for train state: " + path);
}

bool read_train_state(const std::string& path, nn::ParameterSet& params,
                      AdamState& state) {
    if (!std::filesystem::exists(path))
        return false;
    std::ifstream f(path, std::ios::binary);
    if (!f)
        raise(Errc::data, "cannot open train state: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "PHN-TRST v1")
        raise(Errc::data, "bad train state magic in " + path);
    int64_t step = 0;
    size_t n_params = 0;
    {
        std::string word;
        if (!std::getline(f, line))
            raise(Errc::data, "truncated train state in " + path);
        std::istringstream ss(line);
        if (!(ss >> word >> step) || word != "step" || step < 0)
            raise(Errc::data, "bad train state step line in " + path);
    }
    {
        std::string word;
        if (!std::getline(f, line))
            raise(Errc::data, "truncated train state in " + path);
        std::istringstream ss(line);
        if (!(ss >> word >> n_params) || word != "params")
            raise(Errc::data, "bad train state params line in " + path);
    }
    const auto& entries = params.entries();
    if (n_params != entries.size())
        raise(Errc::data, "train state parameter count mismatch in " + path);
    if (state.m.size() != entries.size())
        raise(Errc::config, "optimizer state must be initialized before resume");
    auto blob = [&f, &path](std::vector<double>& v) {
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (f.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double)))
            raise(Errc::data, "truncated train state blob in " + path);
        char nl = 0;
        f.read(&nl, 1);
        if (nl != '\n')
            raise(Errc::data, "malformed train state blob terminator in " + path);
    };
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!std::getline(f, line))
            raise(Errc::data, "truncated train state in " + path);
        std::istringstream ss(line);
        std::string name;
        size_t count = 0;
        if (!(ss >> name >> count) || name != entries[i].first ||
            count != entries[i].second->count())
            raise(Errc::data, "train state entry mismatch in " + path + ": " + line);
        blob(entries[i].second->values);
        blob(state.m[i]);
        blob(state.v[i]);
    }
    state.t = step;
    return true;
}

} // namespace phonos::train
