#pragma once

#include "phonos/codec.hpp"
#include "phonos/nn.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace phonos::translator {

// Accent translator f(l2 tokens) -> logits over K+1 classes (K content codes
// plus CTC blank): embedding -> front ConvNeXt x3 -> banded transformer ->
// gated skip -> rear ConvNeXt x3 -> linear head. Causal apart from a fixed
// 2-frame lookahead granted to one transformer layer.

struct TranslatorConfig {
    int vocab = 16;       // K content codes; paper scale uses 200
    int front_layers = 3;
    int rear_layers = 3;
    int tf_layers = 2;    // paper scale 10
    int heads = 2;        // paper scale 8
    int past_ms = 500;
    int future_ms = 40;
    int width = 64;       // paper scale 256
    int kernel = 7;

    int classes() const { return vocab + 1; }
    int blank_id() const { return vocab; }
    int past_frames() const { return past_ms / 20; }
    int future_frames() const { return future_ms / 20; }
    // Frames of past context that can influence one output frame.
    int past_receptive_frames() const {
        return (front_layers + rear_layers) * (kernel - 1) + tf_layers * past_frames();
    }
    // Closed-form parameter count; must equal the enumerated set exactly.
    size_t param_count() const;
    void validate() const;

    std::vector<std::pair<std::string, std::string>> echo() const;
    static TranslatorConfig from_echo(
        const std::vector<std::pair<std::string, std::string>>& kv);
};

struct LossWeights {
    double lambda_ce = 1.0;
    double lambda_ctc = 1.0;
};

class Translator {
  public:
    void build(const TranslatorConfig& cfg, uint64_t seed);
    const TranslatorConfig& config() const { return cfg_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }

    // Logits graph node of shape (T, K+1); inputs are token ids < K.
    nn::TensorPtr forward(const std::vector<int32_t>& tokens) const;

    void save(const std::string& path) const;
    static Translator load(const std::string& path);

  private:
    TranslatorConfig cfg_;
    nn::ParameterSet params_;
};

// Mean over frames of -log softmax(logits)[target].
nn::TensorPtr ce_loss(const nn::TensorPtr& logits,
                      const std::vector<int32_t>& frame_targets);

// CTC negative log-likelihood with blank id drawn from the config.
nn::TensorPtr ctc_loss(const nn::TensorPtr& logits, const std::vector<int32_t>& target,
                       const TranslatorConfig& cfg);

struct JointLoss {
    nn::TensorPtr total;
    double ce = 0.0;
    double ctc = 0.0;
};

// lambda_ce * ce + lambda_ctc * ctc; a zero-weighted component is skipped
// entirely so its preconditions never fire.
JointLoss joint_loss(const nn::TensorPtr& logits,
                     const std::vector<int32_t>& frame_targets,
                     const std::vector<int32_t>& ctc_target,
                     const TranslatorConfig& cfg, LossWeights w = {});

} // namespace phonos::translator
