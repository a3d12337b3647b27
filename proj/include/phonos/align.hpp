#pragma once

#include "phonos/codec.hpp"
#include "phonos/dsp.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace phonos::align {

// Stage I: silence-aware DTW of native (l1) features onto non-native (l2)
// timing, then token-space golden targets at the l2 frame grid.

struct CostMatrix {
    int n = 0;
    int m = 0;
    std::vector<double> costs; // n * m, row-major, entries in [0, 2]

    double at(int i, int j) const { return costs[static_cast<size_t>(i) * m + j]; }
};

struct WarpPath {
    // Monotonic steps from (0,0) to (n-1,m-1); each step advances i, j, or both.
    std::vector<std::pair<int, int>> steps;
};

struct SilenceProfile {
    struct Run {
        int start = 0;
        int length = 0;
    };
    std::vector<Run> runs; // unvoiced regions, sorted, non-overlapping
    int total_len = 0;
};

struct GoldenTarget {
    codec::TokenSequence frame_tokens;  // length T_L2
    std::vector<int32_t> ctc_tokens;    // voiced frame tokens, deduped
    std::string source_id;
};

SilenceProfile silence_profile(const dsp::VadMask& mask);

// costs[i][j] = 1 - cosine(a_i, b_j), clamped to [0, 2]; a zero-norm frame on
// either side contributes cosine 0 (cost 1).
CostMatrix cost_matrix(const dsp::FeatureSequence& a, const dsp::FeatureSequence& b);

// Minimal-cost monotonic path under steps {(1,0),(0,1),(1,1)}. Backtrace ties
// prefer (1,1), then (1,0), then (0,1).
std::pair<WarpPath, double> dtw(const CostMatrix& costs);

// Output frame j = mean of all l1 frames i with (i, j) on the path.
dsp::FeatureSequence resample_by_path(const dsp::FeatureSequence& l1,
                                      const WarpPath& path, int target_len);

// Voiced subsequences of both sides -> DTW -> resample onto the voiced-l2
// grid -> silence rows reinserted at the unvoiced l2 positions. Output length
// is always T_L2.
dsp::FeatureSequence silence_aware_align(const dsp::FeatureSequence& l1,
                                         const dsp::FeatureSequence& l2,
                                         const dsp::VadMask& l1_vad,
                                         const dsp::VadMask& l2_vad);

// frame_tokens = quantize(aligned_l1); ctc_tokens = dedup of the voiced frame
// tokens. Silence frames keep their quantized token (CE supervises them, CTC
// ignores them). Errors when the mask has no voiced frame.
GoldenTarget build_golden_target(const dsp::FeatureSequence& aligned_l1,
                                 const dsp::VadMask& l2_vad,
                                 const codec::Codebook& codebook,
                                 const std::string& source_id = "");

// Golden manifest: "pair_id<TAB>frame_tokens(comma)<TAB>ctc_tokens(comma)".
void write_golden_manifest(const std::string& path,
                           const std::vector<GoldenTarget>& targets);
std::vector<GoldenTarget> read_golden_manifest(const std::string& path);

// Pair manifest: "pair_id<TAB>l1_wav_path<TAB>l2_wav_path".
struct PairEntry {
    std::string pair_id;
    std::string l1_wav;
    std::string l2_wav;
};
std::vector<PairEntry> read_pair_manifest(const std::string& path);

} // namespace phonos::align
