#include "phonos/translator.hpp"

#include "phonos/error.hpp"

#include <cmath>
#include <string>

namespace phonos::translator {

void TranslatorConfig::validate() const {
    if (vocab < 2)
        raise(Errc::config, "translator vocab must be >= 2");
    if (front_layers < 0 || rear_layers < 0 || tf_layers < 1)
        raise(Errc::config, "translator layer counts out of range");
    if (width < 1 || heads < 1 || width % heads != 0)
        raise(Errc::config, "translator width must be divisible by heads");
    if (kernel < 1)
        raise(Errc::config, "translator kernel must be >= 1");
    if (past_ms < 0 || future_ms < 0 || past_ms % 20 != 0 || future_ms % 20 != 0)
        raise(Errc::config, "context budgets must be non-negative multiples of 20 ms");
}

size_t TranslatorConfig::param_count() const {
    size_t d = static_cast<size_t>(width);
    size_t k1 = static_cast<size_t>(kernel);
    size_t conv_block = d * k1 + 8 * d * d + 8 * d;       // dw + ln + 2 pointwise
    size_t tf_layer = 12 * d * d + 13 * d;                // 2 ln + qkvo + mlp
    size_t gate = 2 * d * d + d;
    size_t head = d * static_cast<size_t>(classes()) + static_cast<size_t>(classes());
    return static_cast<size_t>(vocab) * d +
           static_cast<size_t>(front_layers + rear_layers) * conv_block +
           static_cast<size_t>(tf_layers) * tf_layer + gate + head;
}

std::vector<std::pair<std::string, std::string>> TranslatorConfig::echo() const {
    return {
        {"vocab", std::to_string(vocab)},
        {"front_layers", std::to_string(front_layers)},
        {"rear_layers", std::to_string(rear_layers)},
        {"tf_layers", std::to_string(tf_layers)},
        {"heads", std::to_string(heads)},
        {"past_ms", std::to_string(past_ms)},
        {"future_ms", std::to_string(future_ms)},
        {"width", std::to_string(width)},
        {"kernel", std::to_string(kernel)},
    };
}

TranslatorConfig TranslatorConfig::from_echo(
    const std::vector<std::pair<std::string, std::string>>& kv) {
    TranslatorConfig cfg;
    for (const auto& [k, v] : kv) {
        int n = 0;
        try {
            n = std::stoi(v);
        } catch (const std::exception&) {
            raise(Errc::data, "bad translator config value: " + k + "=" + v);
        }
        if (k == "vocab")
            cfg.vocab = n;
        else if (k == "front_layers")
            cfg.front_layers = n;
        else if (k == "rear_layers")
            cfg.rear_layers = n;
        else if (k == "tf_layers")
            cfg.tf_layers = n;
        else if (k == "heads")
            cfg.heads = n;
        else if (k == "past_ms")
            cfg.past_ms = n;
        else if (k == "future_ms")
            cfg.future_ms = n;
        else if (k == "width")
            cfg.width = n;
        else if (k == "kernel")
            cfg.kernel = n;
        else
            raise(Errc::data, "unknown translator config key: " + k);
    }
    cfg.validate();
    return cfg;
}

namespace {

void add_convnext_params(nn::ParameterSet& p, const std::string& prefix, int d, int k) {
    p.add_weight(prefix + ".dw_w", {d, k}, k);
    p.add_zeros(prefix + ".dw_b", {d});
    p.add_ones(prefix + ".ln_g", {d});
    p.add_zeros(prefix + ".ln_b", {d});
    p.add_weight(prefix + ".p1_w", {d, 4 * d}, d);
    p.add_zeros(prefix + ".p1_b", {4 * d});
    p.add_weight(prefix + ".p2_w", {4 * d, d}, 4 * d);
    p.add_zeros(prefix + ".p2_b", {d});
}

void add_attention_params(nn::ParameterSet& p, const std::string& prefix, int d) {
    p.add_ones(prefix + ".ln1_g", {d});
    p.add_zeros(prefix + ".ln1_b", {d});
    p.add_weight(prefix + ".wq", {d, d}, d);
    p.add_zeros(prefix + ".bq", {d});
    p.add_weight(prefix + ".wk", {d, d}, d);
    p.add_zeros(prefix + ".bk", {d});
    p.add_weight(prefix + ".wv", {d, d}, d);
    p.add_zeros(prefix + ".bv", {d});
    p.add_weight(prefix + ".wo", {d, d}, d);
    p.add_zeros(prefix + ".bo", {d});
    p.add_ones(prefix + ".ln2_g", {d});
    p.add_zeros(prefix + ".ln2_b", {d});
    p.add_weight(prefix + ".w1", {d, 4 * d}, d);
    p.add_zeros(prefix + ".b1", {4 * d});
    p.add_weight(prefix + ".w2", {4 * d, d}, 4 * d);
    p.add_zeros(prefix + ".b2", {d});
}

} // namespace

void Translator::build(const TranslatorConfig& cfg, uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    params_ = nn::ParameterSet();
    params_.set_seed(seed);
    int d = cfg.width;
    params_.add_weight("embed", {cfg.vocab, d}, d);
    for (int i = 0; i < cfg.front_layers; ++i)
        add_convnext_params(params_, "front" + std::to_string(i), d, cfg.kernel);
    for (int i = 0; i < cfg.tf_layers; ++i)
        add_attention_params(params_, "tf" + std::to_string(i), d);
    params_.add_weight("gate.w", {2 * d, d}, 2 * d);
    params_.add_zeros("gate.b", {d});
    for (int i = 0; i < cfg.rear_layers; ++i)
        add_convnext_params(params_, "rear" + std::to_string(i), d, cfg.kernel);
    params_.add_weight("head_w", {d, cfg.classes()}, d);
    params_.add_zeros("head_b", {cfg.classes()});
    if (params_.total_count() != cfg.param_count())
        raise(Errc::config, "parameter count formula disagrees with the built set");
}

nn::TensorPtr Translator::forward(const std::vector<int32_t>& tokens) const {
    for (int32_t id : tokens) {
        if (id < 0 || id >= cfg_.vocab)
            raise(Errc::data, "translator input token out of vocab range");
    }
    auto x = nn::embedding(params_.get("embed"), tokens);
    for (int i = 0; i < cfg_.front_layers; ++i)
        x = nn::convnext_block(x, params_, "front" + std::to_string(i), cfg_.kernel);
    auto front_out = x;
    // The whole 40 ms future budget lives in the first transformer layer;
    // the rest are strictly causal so the stacked lookahead stays 2 frames.
    for (int i = 0; i < cfg_.tf_layers; ++i) {
        nn::ContextWindow win{cfg_.past_frames(), i == 0 ? cfg_.future_frames() : 0};
        x = nn::windowed_attention(x, params_, "tf" + std::to_string(i), cfg_.heads, win);
    }
    x = nn::gated_skip(x, front_out, params_, "gate");
    for (int i = 0; i < cfg_.rear_layers; ++i)
        x = nn::convnext_block(x, params_, "rear" + std::to_string(i), cfg_.kernel);
    return nn::add_rowvec(nn::matmul(x, params_.get("head_w")), params_.get("head_b"));
}

void Translator::save(const std::string& path) const {
    nn::write_checkpoint(path, params_, cfg_.echo());
}

Translator Translator::load(const std::string& path) {
    nn::Checkpoint ckpt = nn::read_checkpoint(path);
    Translator model;
    model.build(TranslatorConfig::from_echo(ckpt.config), /*seed=*/0);
    nn::load_into(ckpt, model.params_);
    return model;
}

nn::TensorPtr ce_loss(const nn::TensorPtr& logits,
                      const std::vector<int32_t>& frame_targets) {
    return nn::ce_loss(logits, frame_targets);
}

nn::TensorPtr ctc_loss(const nn::TensorPtr& logits, const std::vector<int32_t>& target,
                       const TranslatorConfig& cfg) {
    return nn::ctc_loss(logits, target, cfg.blank_id());
}

JointLoss joint_loss(const nn::TensorPtr& logits,
                     const std::vector<int32_t>& frame_targets,
                     const std::vector<int32_t>& ctc_target,
                     const TranslatorConfig& cfg, LossWeights w) {
    if (w.lambda_ce < 0 || w.lambda_ctc < 0 || (w.lambda_ce == 0 && w.lambda_ctc == 0))
        raise(Errc::config, "loss weights must be non-negative and not both zero");
    JointLoss out;
    nn::TensorPtr total;
    if (w.lambda_ce > 0) {
        auto ce = nn::ce_loss(logits, frame_targets);
        out.ce = ce->values[0];
        total = (w.lambda_ce == 1.0) ? ce : nn::scale(ce, w.lambda_ce);
    }
    if (w.lambda_ctc > 0) {
        auto ctc = ctc_loss(logits, ctc_target, cfg);
        out.ctc = ctc->values[0];
        auto term = (w.lambda_ctc == 1.0) ? ctc : nn::scale(ctc, w.lambda_ctc);
        total = total ? nn::add(total, term) : term;
    }
    out.total = total;
    return out;
}

} // namespace phonos::translator
