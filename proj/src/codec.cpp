#include "phonos/codec.hpp"

#include "phonos/error.hpp"
#include "phonos/kernels.hpp"
#include "phonos/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace phonos::codec {

void Codebook::validate() const {
    if (k < 2 || dim <= 0)
        raise(Errc::config, "codebook needs K >= 2 and positive dim");
    if (centroids.size() != static_cast<size_t>(k) * dim)
        raise(Errc::data, "codebook centroid storage does not match K*D");
    for (double v : centroids) {
        if (!std::isfinite(v))
            raise(Errc::numeric, "codebook centroid is not finite");
    }
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            if (std::equal(centroid(a).begin(), centroid(a).end(), centroid(b).begin()))
                raise(Errc::data, "codebook contains duplicate centroids");
        }
    }
}

namespace {

double sq_dist(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
        double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

} // namespace

Codebook kmeans_train(const std::vector<double>& rows, int n_rows, int dim, int k,
                      int max_iters, uint64_t seed, KmeansStats* stats) {
    if (n_rows <= 0 || dim <= 0)
        raise(Errc::data, "kmeans needs a non-empty sample matrix");
    if (k < 2)
        raise(Errc::config, "kmeans needs k >= 2");
    if (k > n_rows)
        raise(Errc::data, "kmeans has fewer samples than clusters");
    if (rows.size() != static_cast<size_t>(n_rows) * dim)
        raise(Errc::data, "kmeans sample storage does not match N*D");

    Rng rng(derive_seed(seed, /*stream=*/3));

    Codebook cb;
    cb.k = k;
    cb.dim = dim;
    cb.seed = seed;
    cb.centroids.assign(static_cast<size_t>(k) * dim, 0.0);

    // k-means++ seeding: first centroid uniform, then proportional to the
    // squared distance to the nearest chosen centroid.
    std::vector<double> min_d2(n_rows, std::numeric_limits<double>::infinity());
    {
        int first = static_cast<int>(rng.uniform_int(0, n_rows - 1));
        std::copy_n(rows.data() + static_cast<size_t>(first) * dim, dim,
                    cb.centroids.begin());
        for (int c = 1; c < k; ++c) {
            const double* prev = cb.centroids.data() + static_cast<size_t>(c - 1) * dim;
            double total = 0.0;
            for (int i = 0; i < n_rows; ++i) {
                double d2 = sq_dist(rows.data() + static_cast<size_t>(i) * dim, prev, dim);
                min_d2[i] = std::min(min_d2[i], d2);
                total += min_d2[i];
            }
            int pick = 0;
            if (total > 0.0) {
                double r = rng.uniform() * total;
                double acc = 0.0;
                pick = n_rows - 1;
                for (int i = 0; i < n_rows; ++i) {
                    acc += min_d2[i];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
            } else {
                // All mass at distance zero (duplicated points); any pick works.
                pick = static_cast<int>(rng.uniform_int(0, n_rows - 1));
            }
            std::copy_n(rows.data() + static_cast<size_t>(pick) * dim, dim,
                        cb.centroids.begin() + static_cast<size_t>(c) * dim);
        }
    }

    std::vector<int32_t> assign(n_rows, -1);
    std::vector<double> d2(n_rows, 0.0);
    std::vector<double> sums(static_cast<size_t>(k) * dim);
    std::vector<int> counts(k);

    if (stats) {
        stats->iterations = 0;
        stats->inertia.clear();
    }

    for (int iter = 0; iter < max_iters; ++iter) {
        std::vector<int32_t> new_assign(n_rows);
        kernels::nearest_centroid(rows.data(), n_rows, cb.centroids.data(), k, dim,
                                  new_assign.data(), d2.data());
        double inertia = 0.0;
        for (int i = 0; i < n_rows; ++i)
            inertia += d2[i];
        if (stats) {
            stats->iterations = iter + 1;
            stats->inertia.push_back(inertia);
        }
        bool changed = new_assign != assign;
        assign = std::move(new_assign);

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n_rows; ++i) {
            int c = assign[i];
            counts[c] += 1;
            const double* row = rows.data() + static_cast<size_t>(i) * dim;
            double* s = sums.data() + static_cast<size_t>(c) * dim;
            for (int d = 0; d < dim; ++d)
                s[d] += row[d];
        }
        std::vector<char> reseed_used(n_rows, 0);
        for (int c = 0; c < k; ++c) {
            double* cen = cb.centroids.data() + static_cast<size_t>(c) * dim;
            if (counts[c] > 0) {
                const double* s = sums.data() + static_cast<size_t>(c) * dim;
                for (int d = 0; d < dim; ++d)
                    cen[d] = s[d] / counts[c];
            } else {
                // Re-seed an empty cluster to the point farthest from its own
                // centroid, skipping points already taken by another reseed in
                // this pass so two empty clusters never collapse onto one row.
                int far_i = -1;
                double far_d = -1.0;
                for (int i = 0; i < n_rows; ++i) {
                    if (!reseed_used[i] && d2[i] > far_d) {
                        far_d = d2[i];
                        far_i = i;
                    }
                }
                if (far_i < 0)
                    raise(Errc::numeric, "kmeans cannot re-seed empty cluster");
                reseed_used[far_i] = 1;
                std::copy_n(rows.data() + static_cast<size_t>(far_i) * dim, dim, cen);
            }
        }
        if (!changed && iter > 0)
            break;
    }
    return cb;
}

TokenSequence quantize(const dsp::FeatureSequence& features, const Codebook& cb) {
    cb.validate();
    if (features.dim != cb.dim)
        raise(Errc::data, "feature dim does not match codebook dim");
    TokenSequence out;
    out.frame_rate = features.frame_rate;
    int t = features.frames();
    out.tokens.resize(t);
    if (t == 0)
        return out;
    std::vector<double> d2(t);
    kernels::nearest_centroid(features.data.data(), t, cb.centroids.data(), cb.k,
                              cb.dim, out.tokens.data(), d2.data());
    return out;
}

dsp::FeatureSequence decode_tokens(const TokenSequence& tokens, const Codebook& cb,
                                   int smooth_width) {
    cb.validate();
    if (smooth_width < 1 || smooth_width % 2 == 0)
        raise(Errc::config, "smoothing width must be odd and >= 1");
    int t = static_cast<int>(tokens.size());
    dsp::FeatureSequence raw;
    raw.dim = cb.dim;
    raw.frame_rate = tokens.frame_rate;
    raw.data.resize(static_cast<size_t>(t) * cb.dim);
    for (int i = 0; i < t; ++i) {
        int32_t id = tokens.tokens[i];
        if (id < 0 || id >= cb.k)
            raise(Errc::data, "token id out of codebook range");
        std::copy_n(cb.centroids.data() + static_cast<size_t>(id) * cb.dim, cb.dim,
                    raw.data.begin() + static_cast<size_t>(i) * cb.dim);
    }
    if (smooth_width == 1 || t == 0)
        return raw;

    int half = smooth_width / 2;
    dsp::FeatureSequence out = raw;
    for (int i = 0; i < t; ++i) {
        int lo = std::max(0, i - half);
        int hi = std::min(t - 1, i + half);
        double inv = 1.0 / (hi - lo + 1);
        double* dst = out.data.data() + static_cast<size_t>(i) * cb.dim;
        std::fill_n(dst, cb.dim, 0.0);
        for (int j = lo; j <= hi; ++j) {
            const double* src = raw.data.data() + static_cast<size_t>(j) * cb.dim;
            for (int d = 0; d < cb.dim; ++d)
                dst[d] += src[d];
        }
        for (int d = 0; d < cb.dim; ++d)
            dst[d] *= inv;
    }
    return out;
}

std::vector<int32_t> dedup(const std::vector<int32_t>& tokens) {
    std::vector<int32_t> out;
    out.reserve(tokens.size());
    for (int32_t id : tokens) {
        if (out.empty() || out.back() != id)
            out.push_back(id);
    }
    return out;
}

void write_codebook(const std::string& path, const Codebook& cb) {
    cb.validate();
    std::ofstream f(path);
    if (!f)
        raise(Errc::data, "cannot open codebook file for writing: " + path);
    f << "PHN-CB v1 " << cb.k << ' ' << cb.dim << ' ' << cb.seed << '\n';
    char buf[32];
    for (int c = 0; c < cb.k; ++c) {
        for (int d = 0; d < cb.dim; ++d) {
            std::snprintf(buf, sizeof buf, "%.17g", cb.centroid(c)[d]);
            f << (d ? " " : "") << buf;
        }
        f << '\n';
    }
    if (!f)
        raise(Errc::data, "write failed for codebook file: " + path);
}

Codebook read_codebook(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::data, "cannot open codebook file: " + path);
    std::string magic, version;
    Codebook cb;
    f >> magic >> version >> cb.k >> cb.dim >> cb.seed;
    if (!f || magic != "PHN-CB" || version != "v1")
        raise(Errc::data, "bad codebook header in " + path);
    cb.centroids.resize(static_cast<size_t>(cb.k) * cb.dim);
    for (double& v : cb.centroids) {
        if (!(f >> v))
            raise(Errc::data, "truncated codebook body in " + path);
    }
    cb.validate();
    return cb;
}

void write_token_file(const std::string& path,
                      const std::vector<TokenSequence>& utterances) {
    std::ofstream f(path);
    if (!f)
        raise(Errc::data, "cannot open token file for writing: " + path);
    for (const auto& u : utterances) {
        for (size_t i = 0; i < u.tokens.size(); ++i)
            f << (i ? "," : "") << u.tokens[i];
        f << '\n';
    }
    if (!f)
        raise(Errc::data, "write failed for token file: " + path);
}

std::vector<TokenSequence> read_token_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::data, "cannot open token file: " + path);
    std::vector<TokenSequence> out;
    std::string line;
    while (std::getline(f, line)) {
        TokenSequence seq;
        if (!line.empty()) {
            std::stringstream ss(line);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    seq.tokens.push_back(std::stoi(item));
                } catch (const std::exception&) {
                    raise(Errc::data, "bad token id in " + path + ": " + item);
                }
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace phonos::codec
