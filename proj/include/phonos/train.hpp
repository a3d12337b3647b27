#pragma once

#include "phonos/align.hpp"
#include "phonos/rng.hpp"
#include "phonos/translator.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace phonos::train {

struct OptimizerConfig {
    double lr0 = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double gamma = 0.999996; // per-step exponential decay
    double eps = 1e-8;
    int batch = 8;      // paper scale 16
    int max_steps = 3000; // paper scale 250000
    int checkpoint_every = 1000;
    uint64_t seed = 0;

    // Learning rate for 0-based step index t; lr_at(0) == lr0.
    double lr_at(int64_t t) const { return lr0 * std::pow(gamma, static_cast<double>(t)); }
    void validate() const;
};

// Token-domain accent pairs: a native run-length sequence plus an "accented"
// version with segmental substitutions and duration jitter. The golden target
// mirrors the accented run lengths, so supervision is frame-aligned.
struct SyntheticAccentTask {
    int vocab = 16;
    std::vector<int32_t> substitution; // id -> id, size == vocab
    double sub_prob = 1.0;
    double jitter_prob = 0.2; // random repeat/drop of one frame per run
    int32_t silence_id = 0;
    double silence_prob = 0.15; // chance of a silence run between voiced runs
    int32_t native_min = 1;     // native run ids drawn from [native_min, native_max]
    int32_t native_max = 11;
    uint64_t seed = 0;

    void validate() const;
    // Expected fraction of accent-marked frames among voiced frames when no
    // correction is applied; the probe's decision midpoint is half of this.
    double expected_substitution_rate() const;
    // Ids that only appear through substitution (the accent markers).
    std::vector<int32_t> marked_ids() const;

    // 16-token task with ids 1..4 substituted to 12..15.
    static SyntheticAccentTask desk_default(uint64_t seed = 0);
};

struct TrainingPair {
    std::vector<int32_t> l2_tokens;
    align::GoldenTarget golden;
};

// Draws a native sequence of exactly `len` frames, then derives the accented
// l2 side; golden.frame_tokens has l2's exact length.
TrainingPair generate_pair(const SyntheticAccentTask& task, int len, Rng& rng);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    int64_t t = 0; // completed updates

    void init(const nn::ParameterSet& params);
};

// Decoupled-weight-decay Adam with bias correction; lr = lr0 * gamma^t using
// the pre-increment step count, so the first update runs at exactly lr0.
// Returns the learning rate applied.
double adamw_step(nn::ParameterSet& params, AdamState& state,
                  const OptimizerConfig& cfg);

struct TrainPaths {
    std::string checkpoint;   // PHN-CKPT file
    std::string train_state;  // PHN-TRST sidecar for bit-exact resume
    std::string loss_log;     // "step ce ctc joint lr" per line
};

struct TrainResult {
    int64_t steps_done = 0;
    double final_ce = 0.0;
    double final_ctc = 0.0;
    double final_joint = 0.0;
};

// Per step: sample a batch of pairs from seeds derived from (opt.seed, step),
// average the joint loss, backward, AdamW update. Deterministic and resumable:
// the sidecar stores double-precision parameters, moments, and the step count.
TrainResult train_loop(translator::Translator& model, const SyntheticAccentTask& task,
                       const OptimizerConfig& opt, const TrainPaths& paths,
                       bool resume = false,
                       translator::LossWeights weights = {});

struct AccuracyReport {
    double model_acc = 0.0; // argmax over content classes vs golden frame tokens
    double copy_acc = 0.0;  // emit-l2-unchanged baseline
    size_t frames = 0;
};

// Held-out pairs drawn from an rng stream disjoint from the training stream.
AccuracyReport evaluate_accuracy(const translator::Translator& model,
                                 const SyntheticAccentTask& task, int n_pairs,
                                 int min_len = 32, int max_len = 56);

// Sidecar I/O (doubles, little-endian): step count plus values/m/v per param.
void write_train_state(const std::string& path, const nn::ParameterSet& params,
                       const AdamState& state);
// Returns false when the file does not exist; raises on malformed content.
bool read_train_state(const std::string& path, nn::ParameterSet& params,
                      AdamState& state);

} // namespace phonos::train
