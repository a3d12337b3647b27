#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "phonos/config.hpp"
#include "phonos/error.hpp"

#include <filesystem>
#include <string>
#include <vector>

using namespace phonos;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

config::PipelineConfig nondefault_config() {
    config::PipelineConfig cfg;
    cfg.seed = 31337;
    cfg.codebook_path = "artifacts/codebook.bin";
    cfg.checkpoint_path = "artifacts/model.ckpt";
    cfg.pair_manifest = "pairs.tsv";
    cfg.out_dir = "run out"; // inner space must survive
    cfg.frame.frame_len = 320;
    cfg.frame.hop = 320;
    cfg.frame.n_mels = 24;
    cfg.vad_threshold_db = 1.0 / 3.0;
    cfg.vad_hangover = 0;
    cfg.chunk_ms = 160;
    cfg.sample_rate = 16000;
    cfg.budget.encoder_ms = 60;
    cfg.budget.translator_ms = 20;
    cfg.budget.decoder_ms = 100;
    cfg.sampler.k = 5;
    cfg.sampler.temperature = 0.7;
    cfg.sampler.greedy = false;
    cfg.sampler.seed = 99;
    cfg.opt.lr0 = 0.1;
    cfg.opt.beta1 = 0.85;
    cfg.opt.beta2 = 0.995;
    cfg.opt.weight_decay = 0.04;
    cfg.opt.gamma = 0.9999;
    cfg.opt.eps = 1e-9;
    cfg.opt.batch = 2;
    cfg.opt.max_steps = 123;
    cfg.opt.checkpoint_every = 50;
    cfg.opt.seed = 7;
    cfg.model.vocab = 8;
    cfg.model.front_layers = 1;
    cfg.model.rear_layers = 1;
    cfg.model.tf_layers = 3;
    cfg.model.heads = 4;
    cfg.model.past_ms = 400;
    cfg.model.future_ms = 80;
    cfg.model.width = 32;
    cfg.model.kernel = 5;
    cfg.task.vocab = 8;
    cfg.task.substitution.assign(8, 0);
    for (int32_t i = 0; i < 8; ++i)
        cfg.task.substitution[static_cast<size_t>(i)] = i;
    cfg.task.substitution[2] = 6;
    cfg.task.substitution[3] = 7;
    cfg.task.sub_prob = 0.75;
    cfg.task.jitter_prob = 0.25;
    cfg.task.silence_id = 0;
    cfg.task.silence_prob = 0.5;
    cfg.task.native_min = 1;
    cfg.task.native_max = 5;
    cfg.task.seed = 13;
    return cfg;
}

} // namespace

TEST_CASE("default config text round trips to the identical string") {
    config::PipelineConfig cfg;
    std::string text = cfg.to_text();
    config::PipelineConfig parsed = config::PipelineConfig::from_text(text);
    CHECK(parsed.to_text() == text);
}

TEST_CASE("non-default config round trips every field") {
    config::PipelineConfig cfg = nondefault_config();
    std::string text = cfg.to_text();
    config::PipelineConfig p = config::PipelineConfig::from_text(text);

    CHECK(p.to_text() == text);
    CHECK(p.seed == 31337);
    CHECK(p.out_dir == "run out");
    CHECK(p.frame.frame_len == 320);
    CHECK(p.frame.hop == 320);
    CHECK(p.frame.n_mels == 24);
    CHECK(p.vad_threshold_db == 1.0 / 3.0); // 17 digits reload bit-exactly
    CHECK(p.vad_hangover == 0);
    CHECK(p.chunk_ms == 160);
    CHECK(p.budget.encoder_ms == 60);
    CHECK(p.budget.decoder_ms == 100);
    CHECK(p.sampler.k == 5);
    CHECK(p.sampler.temperature == 0.7);
    CHECK(p.sampler.greedy == false);
    CHECK(p.sampler.seed == 99);
    CHECK(p.opt.lr0 == 0.1);
    CHECK(p.opt.eps == 1e-9);
    CHECK(p.opt.max_steps == 123);
    CHECK(p.model.width == 32);
    CHECK(p.model.future_ms == 80);
    CHECK(p.task.vocab == 8);
    CHECK(p.task.substitution == cfg.task.substitution);
    CHECK(p.task.sub_prob == 0.75);
    CHECK(p.task.native_max == 5);
    CHECK(p.task.seed == 13);
}

TEST_CASE("parser tolerates comments, blank lines, and whitespace") {
    std::string text = "# pipeline settings\n"
                       "\n"
                       "   seed = 42   \n"
                       "\t# indented comment\n"
                       "chunk.ms\t=\t160\n"
                       "paths.out_dir =   padded value  \n";
    config::PipelineConfig cfg = config::PipelineConfig::from_text(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.chunk_ms == 160);
    CHECK(cfg.out_dir == "padded value");
    // Untouched keys keep their defaults.
    CHECK(cfg.sample_rate == 16000);
    CHECK(cfg.model.vocab == 16);
}

TEST_CASE("path values may contain '=' after the separator") {
    std::string text = "paths.codebook = runs/a=b/cb.bin\n";
    config::PipelineConfig cfg = config::PipelineConfig::from_text(text);
    CHECK(cfg.codebook_path == "runs/a=b/cb.bin");

    // And the value survives a full serialize -> parse cycle.
    config::PipelineConfig again = config::PipelineConfig::from_text(cfg.to_text());
    CHECK(again.codebook_path == "runs/a=b/cb.bin");
}

TEST_CASE("parser rejects malformed input") {
    SUBCASE("unknown key") {
        CHECK_THROWS_AS(config::PipelineConfig::from_text("no.such.key = 1\n"), Error);
    }
    SUBCASE("line without an equals sign") {
        CHECK_THROWS_AS(config::PipelineConfig::from_text("seed 42\n"), Error);
    }
    SUBCASE("non-numeric value for a numeric key") {
        CHECK_THROWS_AS(config::PipelineConfig::from_text("opt.lr0 = fast\n"), Error);
        CHECK_THROWS_AS(config::PipelineConfig::from_text("chunk.ms = eighty\n"), Error);
    }
}

TEST_CASE("substitution map text form") {
    SUBCASE("identity map serializes to an empty value") {
        config::PipelineConfig cfg;
        cfg.task.substitution.assign(16, 0);
        for (int32_t i = 0; i < 16; ++i)
            cfg.task.substitution[static_cast<size_t>(i)] = i;
        std::string text = cfg.to_text();
        CHECK(text.find("task.map = \n") != std::string::npos);
        config::PipelineConfig p = config::PipelineConfig::from_text(text);
        CHECK(p.task.substitution == cfg.task.substitution);
    }
    SUBCASE("only non-identity entries are written") {
        config::PipelineConfig cfg; // desk default: 1..4 -> 12..15
        std::string text = cfg.to_text();
        CHECK(text.find("task.map = 1:12,2:13,3:14,4:15\n") != std::string::npos);
    }
    SUBCASE("map line applies against the final vocab regardless of key order") {
        std::string text = "task.map = 1:18\ntask.vocab = 20\n";
        config::PipelineConfig cfg = config::PipelineConfig::from_text(text);
        REQUIRE(cfg.task.substitution.size() == 20);
        CHECK(cfg.task.substitution[1] == 18);
        CHECK(cfg.task.substitution[0] == 0);
        CHECK(cfg.task.substitution[19] == 19);
    }
    SUBCASE("entry without a colon is rejected") {
        CHECK_THROWS_AS(config::PipelineConfig::from_text("task.map = 5\n"), Error);
    }
    SUBCASE("entry outside the vocab is rejected") {
        CHECK_THROWS_AS(
            config::PipelineConfig::from_text("task.vocab = 4\ntask.map = 1:12\n"), Error);
    }
    SUBCASE("non-numeric entry is rejected") {
        CHECK_THROWS_AS(config::PipelineConfig::from_text("task.map = a:b\n"), Error);
    }
}

TEST_CASE("config file save and load") {
    std::string path = tmp_path("phonos_config_roundtrip.cfg");
    config::PipelineConfig cfg = nondefault_config();
    cfg.save(path);
    config::PipelineConfig loaded = config::PipelineConfig::load(path);
    CHECK(loaded.to_text() == cfg.to_text());
    std::filesystem::remove(path);

    CHECK_THROWS_AS(config::PipelineConfig::load(tmp_path("phonos_config_missing.cfg")),
                    Error);
}

TEST_CASE("set_seed propagates to every seeded sub-config") {
    config::PipelineConfig cfg = nondefault_config();
    cfg.set_seed(777);
    CHECK(cfg.seed == 777);
    CHECK(cfg.opt.seed == 777);
    CHECK(cfg.task.seed == 777);
    CHECK(cfg.sampler.seed == 777);
}

TEST_CASE("chunk_config mirrors the streaming fields") {
    config::PipelineConfig cfg = nondefault_config();
    stream::ChunkConfig cc = cfg.chunk_config();
    CHECK(cc.chunk_ms == 160);
    CHECK(cc.sample_rate == 16000);
    CHECK(cc.frame.frame_len == 320);
    CHECK(cc.frame.hop == 320);
    CHECK(cc.frame.n_mels == 24);
    cc.validate(); // 160 ms at 16 kHz is hop-aligned for a 320 hop
}
