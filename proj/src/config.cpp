#include "phonos/config.hpp"

#include "phonos/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace phonos::config {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_map(const std::vector<int32_t>& map) {
    std::string s;
    for (size_t i = 0; i < map.size(); ++i) {
        if (map[i] == static_cast<int32_t>(i))
            continue;
        if (!s.empty())
            s += ',';
        s += std::to_string(i) + ':' + std::to_string(map[i]);
    }
    return s;
}

std::vector<int32_t> parse_map(const std::string& s, int vocab) {
    std::vector<int32_t> map(vocab);
    for (int32_t i = 0; i < vocab; ++i)
        map[i] = i;
    if (s.empty())
        return map;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
            raise(Errc::config, "bad substitution map entry: " + item);
        int from = 0, to = 0;
        try {
            from = std::stoi(item.substr(0, colon));
            to = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
            raise(Errc::config, "bad substitution map entry: " + item);
        }
        if (from < 0 || from >= vocab || to < 0 || to >= vocab)
            raise(Errc::config, "substitution map entry out of vocab: " + item);
        map[from] = to;
    }
    return map;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace

std::string PipelineConfig::to_text() const {
    std::ostringstream out;
    auto kv = [&out](const std::string& k, const std::string& v) {
        out << k << " = " << v << '\n';
    };
    kv("seed", std::to_string(seed));
    kv("paths.codebook", codebook_path);
    kv("paths.checkpoint", checkpoint_path);
    kv("paths.pairs", pair_manifest);
    kv("paths.out_dir", out_dir);
    kv("frame.len", std::to_string(frame.frame_len));
    kv("frame.hop", std::to_string(frame.hop));
    kv("frame.mels", std::to_string(frame.n_mels));
    kv("vad.threshold_db", fmt_double(vad_threshold_db));
    kv("vad.hangover", std::to_string(vad_hangover));
    kv("chunk.ms", std::to_string(chunk_ms));
    kv("chunk.sample_rate", std::to_string(sample_rate));
    kv("budget.encoder_ms", std::to_string(budget.encoder_ms));
    kv("budget.translator_ms", std::to_string(budget.translator_ms));
    kv("budget.decoder_ms", std::to_string(budget.decoder_ms));
    kv("sampler.k", std::to_string(sampler.k));
    kv("sampler.temperature", fmt_double(sampler.temperature));
    kv("sampler.greedy", sampler.greedy ? "1" : "0");
    kv("sampler.seed", std::to_string(sampler.seed));
    kv("opt.lr0", fmt_double(opt.lr0));
    kv("opt.beta1", fmt_double(opt.beta1));
    kv("opt.beta2", fmt_double(opt.beta2));
    kv("opt.weight_decay", fmt_double(opt.weight_decay));
    kv("opt.gamma", fmt_double(opt.gamma));
    kv("opt.eps", fmt_double(opt.eps));
    kv("opt.batch", std::to_string(opt.batch));
    kv("opt.max_steps", std::to_string(opt.max_steps));
    kv("opt.checkpoint_every", std::to_string(opt.checkpoint_every));
    kv("opt.seed", std::to_string(opt.seed));
    kv("model.vocab", std::to_string(model.vocab));
    kv("model.front_layers", std::to_string(model.front_layers));
    kv("model.rear_layers", std::to_string(model.rear_layers));
    kv("model.tf_layers", std::to_string(model.tf_layers));
    kv("model.heads", std::to_string(model.heads));
    kv("model.past_ms", std::to_string(model.past_ms));
    kv("model.future_ms", std::to_string(model.future_ms));
    kv("model.width", std::to_string(model.width));
    kv("model.kernel", std::to_string(model.kernel));
    kv("task.vocab", std::to_string(task.vocab));
    kv("task.map", fmt_map(task.substitution));
    kv("task.sub_prob", fmt_double(task.sub_prob));
    kv("task.jitter_prob", fmt_double(task.jitter_prob));
    kv("task.silence_id", std::to_string(task.silence_id));
    kv("task.silence_prob", fmt_double(task.silence_prob));
    kv("task.native_min", std::to_string(task.native_min));
    kv("task.native_max", std::to_string(task.native_max));
    kv("task.seed", std::to_string(task.seed));
    return out.str();
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string task_map_raw = fmt_map(cfg.task.substitution);
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            raise(Errc::config,
                  "config line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        try {
            if (key == "seed")
                cfg.seed = std::stoull(val);
            else if (key == "paths.codebook")
                cfg.codebook_path = val;
            else if (key == "paths.checkpoint")
                cfg.checkpoint_path = val;
            else if (key == "paths.pairs")
                cfg.pair_manifest = val;
            else if (key == "paths.out_dir")
                cfg.out_dir = val;
            else if (key == "frame.len")
                cfg.frame.frame_len = std::stoi(val);
            else if (key == "frame.hop")
                cfg.frame.hop = std::stoi(val);
            else if (key == "frame.mels")
                cfg.frame.n_mels = std::stoi(val);
            else if (key == "vad.threshold_db")
                cfg.vad_threshold_db = std::stod(val);
            else if (key == "vad.hangover")
                cfg.vad_hangover = std::stoi(val);
            else if (key == "chunk.ms")
                cfg.chunk_ms = std::stoi(val);
            else if (key == "chunk.sample_rate")
                cfg.sample_rate = std::stoi(val);
            else if (key == "budget.encoder_ms")
                cfg.budget.encoder_ms = std::stoi(val);
            else if (key == "budget.translator_ms")
                cfg.budget.translator_ms = std::stoi(val);
            else if (key == "budget.decoder_ms")
                cfg.budget.decoder_ms = std::stoi(val);
            else if (key == "sampler.k")
                cfg.sampler.k = std::stoi(val);
            else if (key == "sampler.temperature")
                cfg.sampler.temperature = std::stod(val);
            else if (key == "sampler.greedy")
                cfg.sampler.greedy = std::stoi(val) != 0;
            else if (key == "sampler.seed")
                cfg.sampler.seed = std::stoull(val);
            else if (key == "opt.lr0")
                cfg.opt.lr0 = std::stod(val);
            else if (key == "opt.beta1")
                cfg.opt.beta1 = std::stod(val);
            else if (key == "opt.beta2")
                cfg.opt.beta2 = std::stod(val);
            else if (key == "opt.weight_decay")
                cfg.opt.weight_decay = std::stod(val);
            else if (key == "opt.gamma")
                cfg.opt.gamma = std::stod(val);
            else if (key == "opt.eps")
                cfg.opt.eps = std::stod(val);
            else if (key == "opt.batch")
                cfg.opt.batch = std::stoi(val);
            else if (key == "opt.max_steps")
                cfg.opt.max_steps = std::stoi(val);
            else if (key == "opt.checkpoint_every")
                cfg.opt.checkpoint_every = std::stoi(val);
            else if (key == "opt.seed")
                cfg.opt.seed = std::stoull(val);
            else if (key == "model.vocab")
                cfg.model.vocab = std::stoi(val);
            else if (key == "model.front_layers")
                cfg.model.front_layers = std::stoi(val);
            else if (key == "model.rear_layers")
                cfg.model.rear_layers = std::stoi(val);
            else if (key == "model.tf_layers")
                cfg.model.tf_layers = std::stoi(val);
            else if (key == "model.heads")
                cfg.model.heads = std::stoi(val);
            else if (key == "model.past_ms")
                cfg.model.past_ms = std::stoi(val);
            else if (key == "model.future_ms")
                cfg.model.future_ms = std::stoi(val);
            else if (key == "model.width")
                cfg.model.width = std::stoi(val);
            else if (key == "model.kernel")
                cfg.model.kernel = std::stoi(val);
            else if (key == "task.vocab")
                cfg.task.vocab = std::stoi(val);
            else if (key == "task.map")
                task_map_raw = val;
            else if (key == "task.sub_prob")
                cfg.task.sub_prob = std::stod(val);
            else if (key == "task.jitter_prob")
                cfg.task.jitter_prob = std::stod(val);
            else if (key == "task.silence_id")
                cfg.task.silence_id = std::stoi(val);
            else if (key == "task.silence_prob")
                cfg.task.silence_prob = std::stod(val);
            else if (key == "task.native_min")
                cfg.task.native_min = std::stoi(val);
            else if (key == "task.native_max")
                cfg.task.native_max = std::stoi(val);
            else if (key == "task.seed")
                cfg.task.seed = std::stoull(val);
            else
                raise(Errc::config, "unknown config key: " + key);
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            raise(Errc::config, "bad config value for " + key + ": " + val);
        }
    }
    cfg.task.substitution = parse_map(task_map_raw, cfg.task.vocab);
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        raise(Errc::config, "cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
}

void PipelineConfig::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f)
        raise(Errc::data, "cannot open config file for writing: " + path);
    f << to_text();
    if (!f)
        raise(Errc::data, "write failed for config file: " + path);
}

void PipelineConfig::set_seed(uint64_t s) {
    seed = s;
    opt.seed = s;
    task.seed = s;
    sampler.seed = s;
}

} // namespace phonos::config
