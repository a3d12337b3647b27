#pragma once

#include "phonos/dsp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace phonos::codec {

// Discrete content token space. Desk-scale flat VQ standing in for a
// factorized bottleneck; ids live in [0, K).

struct Codebook {
    int k = 0;
    int dim = 0;
    uint64_t seed = 0;
    std::string version = "v1";
    std::vector<double> centroids; // k * dim, row-major

    std::span<const double> centroid(int id) const {
        return {centroids.data() + static_cast<size_t>(id) * dim,
                static_cast<size_t>(dim)};
    }
    void validate() const;
};

struct TokenSequence {
    std::vector<int32_t> tokens;
    double frame_rate = 50.0;

    size_t size() const { return tokens.size(); }
};

struct KmeansStats {
    int iterations = 0;
    std::vector<double> inertia; // after each assignment pass
};

// Lloyd's algorithm with k-means++ seeding. Stops at max_iters or when no
// assignment changes; empty clusters are re-seeded to the point farthest
// from its own centroid. Deterministic for a fixed seed.
Codebook kmeans_train(const std::vector<double>& rows, int n_rows, int dim, int k,
                      int max_iters, uint64_t seed, KmeansStats* stats = nullptr);

// Nearest centroid by squared Euclidean distance, ties to the lower id.
TokenSequence quantize(const dsp::FeatureSequence& features, const Codebook& cb);

// Centroid lookup, with optional centered moving-average smoothing of odd
// width w (w = 1 disables it; the window clips at sequence edges).
dsp::FeatureSequence decode_tokens(const TokenSequence& tokens, const Codebook& cb,
                                   int smooth_width = 1);

// Collapses adjacent duplicate ids.
std::vector<int32_t> dedup(const std::vector<int32_t>& tokens);

// Codebook file: "PHN-CB v1 K D seed" then K rows of D decimal values.
void write_codebook(const std::string& path, const Codebook& cb);
Codebook read_codebook(const std::string& path);

// Token file: comma-separated ids, one utterance per line.
void write_token_file(const std::string& path,
                      const std::vector<TokenSequence>& utterances);
std::vector<TokenSequence> read_token_file(const std::string& path);

} // namespace phonos::codec
