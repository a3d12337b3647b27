#include "phonos/align.hpp"

#include "phonos/error.hpp"
#include "phonos/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace phonos::align {

SilenceProfile silence_profile(const dsp::VadMask& mask) {
    SilenceProfile prof;
    prof.total_len = static_cast<int>(mask.voiced.size());
    int i = 0;
    while (i < prof.total_len) {
        if (!mask.voiced[i]) {
            int start = i;
            while (i < prof.total_len && !mask.voiced[i])
                ++i;
            prof.runs.push_back({start, i - start});
        } else {
            ++i;
        }
    }
    return prof;
}

CostMatrix cost_matrix(const dsp::FeatureSequence& a, const dsp::FeatureSequence& b) {
    if (a.dim != b.dim)
        raise(Errc::data, "cost_matrix inputs differ in feature dimension");
    CostMatrix cm;
    cm.n = a.frames();
    cm.m = b.frames();
    if (cm.n == 0 || cm.m == 0)
        raise(Errc::data, "cost_matrix inputs must be non-empty");
    cm.costs.resize(static_cast<size_t>(cm.n) * cm.m);
    kernels::cosine_cost(a.data.data(), cm.n, b.data.data(), cm.m, a.dim,
                         cm.costs.data());
    return cm;
}

std::pair<WarpPath, double> dtw(const CostMatrix& costs) {
    int n = costs.n, m = costs.m;
    if (n < 1 || m < 1 || costs.costs.size() != static_cast<size_t>(n) * m)
        raise(Errc::data, "dtw needs a non-empty cost matrix");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> acc(static_cast<size_t>(n) * m, inf);
    auto idx = [m](int i, int j) { return static_cast<size_t>(i) * m + j; };

    acc[idx(0, 0)] = costs.at(0, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == 0 && j == 0)
                continue;
            double best = inf;
            if (i > 0 && j > 0)
                best = std::min(best, acc[idx(i - 1, j - 1)]);
            if (i > 0)
                best = std::min(best, acc[idx(i - 1, j)]);
            if (j > 0)
                best = std::min(best, acc[idx(i, j - 1)]);
            acc[idx(i, j)] = best + costs.at(i, j);
        }
    }

    WarpPath path;
    int i = n - 1, j = m - 1;
    path.steps.emplace_back(i, j);
    while (i > 0 || j > 0) {
        // Tie order: diagonal, then step in i, then step in j.
        if (i > 0 && j > 0) {
            double diag = acc[idx(i - 1, j - 1)];
            double up = acc[idx(i - 1, j)];
            double left = acc[idx(i, j - 1)];
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        } else if (i > 0) {
            --i;
        } else {
            --j;
        }
        path.steps.emplace_back(i, j);
    }
    std::reverse(path.steps.begin(), path.steps.end());

    double total = 0.0;
    for (auto [pi, pj] : path.steps)
        total += costs.at(pi, pj);
    return {std::move(path), total};
}

dsp::FeatureSequence resample_by_path(const dsp::FeatureSequence& l1,
                                      const WarpPath& path, int target_len) {
    if (target_len < 1)
        raise(Errc::data, "resample target length must be >= 1");
    dsp::FeatureSequence out;
    out.dim = l1.dim;
    out.frame_rate = l1.frame_rate;
    out.data.assign(static_cast<size_t>(target_len) * l1.dim, 0.0);
    std::vector<int> counts(target_len, 0);
    for (auto [i, j] : path.steps) {
        if (i < 0 || i >= l1.frames() || j < 0 || j >= target_len)
            raise(Errc::data, "warp path index out of range");
        counts[j] += 1;
        auto src = l1.row(i);
        double* dst = out.data.data() + static_cast<size_t>(j) * l1.dim;
        for (int d = 0; d < l1.dim; ++d)
            dst[d] += src[d];
    }
    for (int j = 0; j < target_len; ++j) {
        if (counts[j] == 0)
            raise(Errc::data, "warp path leaves a target frame uncovered");
        double inv = 1.0 / counts[j];
        double* dst = out.data.data() + static_cast<size_t>(j) * l1.dim;
        for (int d = 0; d < l1.dim; ++d)
            dst[d] *= inv;
    }
    return out;
}

namespace {

dsp::FeatureSequence extract_voiced(const dsp::FeatureSequence& seq,
                                    const dsp::VadMask& mask) {
    dsp::FeatureSequence out;
    out.dim = seq.dim;
    out.frame_rate = seq.frame_rate;
    for (int t = 0; t < seq.frames(); ++t) {
        if (mask.voiced[t]) {
            auto r = seq.row(t);
            out.data.insert(out.data.end(), r.begin(), r.end());
        }
    }
    return out;
}

} // namespace

dsp::FeatureSequence silence_aware_align(const dsp::FeatureSequence& l1,
                                         const dsp::FeatureSequence& l2,
                                         const dsp::VadMask& l1_vad,
                                         const dsp::VadMask& l2_vad) {
    if (l1.dim != l2.dim)
        raise(Errc::data, "alignment inputs differ in feature dimension");
    if (static_cast<int>(l1_vad.voiced.size()) != l1.frames() ||
        static_cast<int>(l2_vad.voiced.size()) != l2.frames())
        raise(Errc::data, "VAD mask length does not match its feature sequence");

    dsp::FeatureSequence v1 = extract_voiced(l1, l1_vad);
    dsp::FeatureSequence v2 = extract_voiced(l2, l2_vad);
    if (v1.frames() == 0 || v2.frames() == 0)
        raise(Errc::data, "alignment needs at least one voiced frame on each side");

    auto [path, cost] = dtw(cost_matrix(v1, v2));
    (void)cost;
    dsp::FeatureSequence warped = resample_by_path(v1, path, v2.frames());

    dsp::FeatureSequence out;
    out.dim = l2.dim;
    out.frame_rate = l2.frame_rate;
    out.data.resize(static_cast<size_t>(l2.frames()) * l2.dim);
    std::vector<double> silence = dsp::silence_row(l2.dim);
    int v = 0;
    for (int t = 0; t < l2.frames(); ++t) {
        double* dst = out.data.data() + static_cast<size_t>(t) * l2.dim;
        if (l2_vad.voiced[t]) {
            auto src = warped.row(v++);
            std::copy(src.begin(), src.end(), dst);
        } else {
            std::copy(silence.begin(), silence.end(), dst);
        }
    }
    return out;
}

GoldenTarget build_golden_target(const dsp::FeatureSequence& aligned_l1,
                                 const dsp::VadMask& l2_vad,
                                 const codec::Codebook& codebook,
                                 const std::string& source_id) {
    codebook.validate();
    if (static_cast<int>(l2_vad.voiced.size()) != aligned_l1.frames())
        raise(Errc::data, "VAD mask length does not match aligned features");
    bool any_voiced = std::any_of(l2_vad.voiced.begin(), l2_vad.voiced.end(),
                                  [](uint8_t v) { return v != 0; });
    if (!any_voiced)
        raise(Errc::data, "golden target for an all-silence utterance is undefined");

    GoldenTarget gt;
    gt.source_id = source_id;
    gt.frame_tokens = codec::quantize(aligned_l1, codebook);
    std::vector<int32_t> voiced_tokens;
    for (size_t t = 0; t < gt.frame_tokens.tokens.size(); ++t) {
        if (l2_vad.voiced[t])
            voiced_tokens.push_back(gt.frame_tokens.tokens[t]);
    }
    gt.ctc_tokens = codec::dedup(voiced_tokens);
    return gt;
}

namespace {

std::string join_ids(const std::vector<int32_t>& ids) {
    std::string s;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i)
            s += ',';
        s += std::to_string(ids[i]);
    }
    return s;
}

std::vector<int32_t> split_ids(const std::string& s, const std::string& path) {
    std::vector<int32_t> out;
    if (s.empty())
        return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            raise(Errc::data, "bad token id in manifest " + path + ": " + item);
        }
    }
    return out;
}

} // namespace

void write_golden_manifest(const std::string& path,
                           const std::vector<GoldenTarget>& targets) {
    std::ofstream f(path);
    if (!f)
        raise(Errc::data, "cannot open golden manifest for writing: " + path);
    for (const auto& gt : targets) {
        f << gt.source_id << '\t' << join_ids(gt.frame_tokens.tokens) << '\t'
          << join_ids(gt.ctc_tokens) << '\n';
    }
    if (!f)
        raise(Errc::data, "write failed for golden manifest: " + path);
}

std::vector<GoldenTarget> read_golden_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::data, "cannot open golden manifest: " + path);
    std::vector<GoldenTarget> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string id, frames, ctc;
        if (!std::getline(ss, id, '\t') || !std::getline(ss, frames, '\t'))
            raise(Errc::data, "malformed golden manifest line in " + path);
        std::getline(ss, ctc, '\t');
        GoldenTarget gt;
        gt.source_id = id;
        gt.frame_tokens.tokens = split_ids(frames, path);
        gt.ctc_tokens = split_ids(ctc, path);
        out.push_back(std::move(gt));
    }
    return out;
}

std::vector<PairEntry> read_pair_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::data, "cannot open pair manifest: " + path);
    std::vector<PairEntry> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        PairEntry e;
        if (!std::getline(ss, e.pair_id, '\t') || !std::getline(ss, e.l1_wav, '\t') ||
            !std::getline(ss, e.l2_wav, '\t'))
            raise(Errc::data, "malformed pair manifest line in " + path);
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace phonos::align
