#pragma once

#include "phonos/codec.hpp"
#include "phonos/dsp.hpp"
#include "phonos/train.hpp"

#include <string>
#include <vector>

namespace phonos::eval {

struct ProbeSpec {
    int n_classes = 2;
    std::vector<int> native_classes = {0}; // A_NA, a nonempty strict subset

    void validate() const;
};

struct ProbePosterior {
    std::vector<double> p;

    void validate() const; // non-negative, sums to 1 within 1e-9
};

struct AccentMetrics {
    double c_na = 0.0;    // % of converted classified native
    double c_nn = 0.0;    // 100 - c_na
    double delta_p = 0.0; // mean native-mass shift
};

struct SpeakerEmbedding {
    std::vector<double> v; // per-dim mean then per-dim std over voiced frames
};

double native_mass(const ProbePosterior& post, const ProbeSpec& spec);

AccentMetrics accent_metrics(const std::vector<ProbePosterior>& originals,
                             const std::vector<ProbePosterior>& converted,
                             const ProbeSpec& spec);

// Two-class accent probe for the synthetic task: p(non-native) =
// logistic(alpha * (rate - beta)) where rate is the fraction of voiced frames
// carrying accent-marked ids and beta = half the task's expected marked rate.
ProbePosterior synthetic_probe(const codec::TokenSequence& tokens,
                               const train::SyntheticAccentTask& task,
                               double alpha = 20.0);
ProbeSpec synthetic_probe_spec();

// Mean and std pooled over voiced frames; uses the default energy VAD when no
// mask is supplied. Errors on all-silent input.
SpeakerEmbedding speaker_embedding(const dsp::FeatureSequence& features,
                                   const dsp::VadMask* mask = nullptr);
double cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

struct UtteranceRow {
    std::string id;
    double p_na_orig = 0.0;
    double p_na_conv = 0.0;
    double spk_sim = 0.0;
};

struct MetricsReport {
    AccentMetrics accent;
    double spk_sim_mean = 0.0;
    double spk_sim_std = 0.0;
    std::vector<UtteranceRow> rows;

    std::string to_text() const; // c_na=, c_nn=, delta_p=, spk_sim_mean=, spk_sim_std=
    void write_files(const std::string& report_path, const std::string& csv_path) const;
};

} // namespace phonos::eval
