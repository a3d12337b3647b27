#include "phonos/eval.hpp"

#include "phonos/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

namespace phonos::eval {

void ProbeSpec::validate() const {
    if (n_classes < 2)
        raise(Errc::config, "probe needs at least two accent classes");
    if (native_classes.empty() ||
        static_cast<int>(native_classes.size()) >= n_classes)
        raise(Errc::config, "native classes must be a nonempty strict subset");
    std::unordered_set<int> seen;
    for (int c : native_classes) {
        if (c < 0 || c >= n_classes || !seen.insert(c).second)
            raise(Errc::config, "native class list invalid");
    }
}

void ProbePosterior::validate() const {
    double total = 0.0;
    for (double x : p) {
        if (!(x >= 0.0))
            raise(Errc::numeric, "posterior has a negative entry");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9)
        raise(Errc::numeric, "posterior does not sum to 1");
}

double native_mass(const ProbePosterior& post, const ProbeSpec& spec) {
    spec.validate();
    if (static_cast<int>(post.p.size()) != spec.n_classes)
        raise(Errc::data, "posterior class count does not match the probe spec");
    post.validate();
    double mass = 0.0;
    for (int c : spec.native_classes)
        mass += post.p[c];
    return mass;
}

AccentMetrics accent_metrics(const std::vector<ProbePosterior>& originals,
                             const std::vector<ProbePosterior>& converted,
                             const ProbeSpec& spec) {
    if (originals.empty() || originals.size() != converted.size())
        raise(Errc::data, "accent metrics need equal-length non-empty lists");
    std::unordered_set<int> native(spec.native_classes.begin(),
                                   spec.native_classes.end());
    AccentMetrics m;
    int native_hits = 0;
    for (size_t i = 0; i < converted.size(); ++i) {
        m.delta_p += native_mass(converted[i], spec) - native_mass(originals[i], spec);
        int best = 0; // argmax ties resolve to the lower class index
        for (int c = 1; c < spec.n_classes; ++c) {
            if (converted[i].p[c] > converted[i].p[best])
                best = c;
        }
        if (native.count(best))
            ++native_hits;
    }
    m.delta_p /= static_cast<double>(originals.size());
    m.c_na = 100.0 * native_hits / static_cast<double>(converted.size());
    m.c_nn = 100.0 - m.c_na;
    return m;
}

ProbeSpec synthetic_probe_spec() {
    ProbeSpec spec;
    spec.n_classes = 2;
    spec.native_classes = {0};
    return spec;
}

ProbePosterior synthetic_probe(const codec::TokenSequence& tokens,
                               const train::SyntheticAccentTask& task,
                               double alpha) {
    task.validate();
    if (tokens.tokens.empty())
        raise(Errc::data, "probe needs a non-empty token sequence");
    std::vector<int32_t> marked = task.marked_ids();
    std::unordered_set<int32_t> marked_set(marked.begin(), marked.end());
    int64_t voiced = 0, hits = 0;
    for (int32_t id : tokens.tokens) {
        if (id == task.silence_id)
            continue;
        ++voiced;
        if (marked_set.count(id))
            ++hits;
    }
    if (voiced == 0)
        raise(Errc::data, "probe needs at least one voiced token");
    double rate = static_cast<double>(hits) / static_cast<double>(voiced);
    double beta = 0.5 * task.expected_substitution_rate();
    double z = alpha * (rate - beta);
    double p_nn = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                         : std::exp(z) / (1.0 + std::exp(z));
    ProbePosterior post;
    post.p = {1.0 - p_nn, p_nn}; // class 0 = native
    return post;
}

SpeakerEmbedding speaker_embedding(const dsp::FeatureSequence& features,
                                   const dsp::VadMask* mask) {
    if (features.frames() == 0)
        raise(Errc::data, "speaker embedding needs non-empty features");
    dsp::VadMask local;
    if (!mask) {
        local = dsp::energy_vad(features);
        mask = &local;
    }
    if (static_cast<int>(mask->voiced.size()) != features.frames())
        raise(Errc::data, "VAD mask length does not match features");
    int d = features.dim;
    std::vector<double> mean(d, 0.0), sq(d, 0.0);
    int64_t n = 0;
    for (int t = 0; t < features.frames(); ++t) {
        if (!mask->voiced[t])
            continue;
        auto r = features.row(t);
        for (int c = 0; c < d; ++c) {
            mean[c] += r[c];
            sq[c] += r[c] * r[c];
        }
        ++n;
    }
    if (n == 0)
        raise(Errc::data, "speaker embedding undefined for all-silent input");
    SpeakerEmbedding e;
    e.v.resize(2 * d);
    for (int c = 0; c < d; ++c) {
        mean[c] /= static_cast<double>(n);
        double var = sq[c] / static_cast<double>(n) - mean[c] * mean[c];
        e.v[c] = mean[c];
        e.v[d + c] = std::sqrt(std::max(0.0, var));
    }
    return e;
}

double cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
    if (a.v.size() != b.v.size() || a.v.empty())
        raise(Errc::data, "cosine needs equal-length non-empty embeddings");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        dot += a.v[i] * b.v[i];
        na += a.v[i] * a.v[i];
        nb += b.v[i] * b.v[i];
    }
    if (na == 0.0 || nb == 0.0)
        raise(Errc::numeric, "cosine undefined for a zero embedding");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string MetricsReport::to_text() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "c_na=%.17g\nc_nn=%.17g\ndelta_p=%.17g\n"
                  "spk_sim_mean=%.17g\nspk_sim_std=%.17g\n",
                  accent.c_na, accent.c_nn, accent.delta_p, spk_sim_mean, spk_sim_std);
    return buf;
}

void MetricsReport::write_files(const std::string& report_path,
                                const std::string& csv_path) const {
    {
        std::ofstream f(report_path);
        if (!f)
            raise(Errc::data, "cannot open metrics report for writing: " + report_path);
        f << to_text();
        if (!f)
            raise(Errc::data, "write failed for metrics report: " + report_path);
    }
    std::ofstream csv(csv_path);
    if (!csv)
        raise(Errc::data, "cannot open metrics csv for writing: " + csv_path);
    csv << "id,p_na_orig,p_na_conv,spk_sim\n";
    char buf[256];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", row.id.c_str(),
                      row.p_na_orig, row.p_na_conv, row.spk_sim);
        csv << buf;
    }
    if (!csv)
        raise(Errc::data, "write failed for metrics csv: " + csv_path);
}

} // namespace phonos::eval
