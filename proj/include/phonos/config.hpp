#pragma once

#include "phonos/dsp.hpp"
#include "phonos/stream.hpp"
#include "phonos/train.hpp"
#include "phonos/translator.hpp"

#include <string>

namespace phonos::config {

// Every tunable of the pipeline in one text-serializable bundle. The text
// form is "key = value" lines; serialize -> parse -> serialize is the
// identity (doubles are printed with 17 significant digits).
struct PipelineConfig {
    uint64_t seed = 0;

    std::string codebook_path;
    std::string checkpoint_path;
    std::string pair_manifest;
    std::string out_dir = ".";

    dsp::FrameSpec frame;
    double vad_threshold_db = 30.0;
    int vad_hangover = 2;

    int chunk_ms = 80;
    int sample_rate = 16000;
    stream::LookaheadBudget budget;
    stream::SamplerConfig sampler;
    train::OptimizerConfig opt;
    translator::TranslatorConfig model;
    train::SyntheticAccentTask task = train::SyntheticAccentTask::desk_default();

    stream::ChunkConfig chunk_config() const {
        stream::ChunkConfig c;
        c.chunk_ms = chunk_ms;
        c.sample_rate = sample_rate;
        c.frame = frame;
        return c;
    }

    std::string to_text() const;
    static PipelineConfig from_text(const std::string& text);
    static PipelineConfig load(const std::string& path);
    void save(const std::string& path) const;

    // Propagates the global seed into every seeded sub-config.
    void set_seed(uint64_t s);
};

} // namespace phonos::config
