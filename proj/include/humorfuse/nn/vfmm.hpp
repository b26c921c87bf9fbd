#pragma once

// Video-focused multimodal Transformer. Text and audio are fused by a GMU into
// one stream that exchanges information with the video stream through two
// local-attention cross-modal blocks; a per-timestep logistic head reads the
// concatenation [video, audio-text, video->audio-text, audio-text->video].

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "humorfuse/error.hpp"
#include "humorfuse/nn/layers.hpp"
#include "humorfuse/nn/tape.hpp"

namespace humorfuse::nn {

struct VfmmConfig {
  Eigen::Index text_dim = 1;
  Eigen::Index audio_dim = 1;
  Eigen::Index video_dim = 1;
  Eigen::Index d = 16;
  int conv_kernel = 1;
  int attn_heads = 1;
  int local_window = 8;
  int ffn_multiplier = 4;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index ffn_dim() const { return ffn_multiplier * d; }

  void validate() const {
    if (text_dim < 1 || audio_dim < 1 || video_dim < 1) throw ValidationError("vfmm: input dimensions must be positive");
    if (d < 2 || d % 2 != 0) throw ValidationError("vfmm: d must be even and >= 2");
    if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ValidationError("vfmm: conv_kernel must be odd and positive");
    if (attn_heads < 1 || d % attn_heads != 0) throw ValidationError("vfmm: d must be divisible by attn_heads");
    if (local_window < 0) throw ValidationError("vfmm: local_window must be >= 0");
    if (ffn_multiplier < 1) throw ValidationError("vfmm: ffn_multiplier must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("vfmm: dropout_rate must lie in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const VfmmConfig& c) {
  j = {{"text_dim", c.text_dim},     {"audio_dim", c.audio_dim},       {"video_dim", c.video_dim},
       {"d", c.d},                   {"conv_kernel", c.conv_kernel},   {"attn_heads", c.attn_heads},
       {"local_window", c.local_window}, {"ffn_multiplier", c.ffn_multiplier}, {"dropout_rate", c.dropout_rate},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, VfmmConfig& c) {
  c.text_dim = j.value("text_dim", c.text_dim);
  c.audio_dim = j.value("audio_dim", c.audio_dim);
  c.video_dim = j.value("video_dim", c.video_dim);
  c.d = j.value("d", c.d);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.attn_heads = j.value("attn_heads", c.attn_heads);
  c.local_window = j.value("local_window", c.local_window);
  c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.seed = j.value("seed", c.seed);
}

/// Closed-form trainable parameter count for a configuration.
inline Eigen::Index vfmm_param_count(const VfmmConfig& c) {
  const Eigen::Index d = c.d, f = c.ffn_dim(), k = c.conv_kernel;
  const Eigen::Index conv = k * (c.text_dim + c.audio_dim + c.video_dim) * d + 3 * d;
  const Eigen::Index gmu = 4 * d * d + 3 * d;
  const Eigen::Index cmt = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  const Eigen::Index head = 4 * d + 1;
  return conv + gmu + 2 * cmt + head;
}

/// Intermediate activations of one forward pass, for inspection.
struct VfmmTrace {
  Matrix video, audio_text, video_to_at, at_to_video;
  std::vector<Matrix> attention;  // heads of the video->at block, then of the at->video block
};

class VfmmModel {
 public:
  explicit VfmmModel(const VfmmConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    conv_text = Conv1dProjection("conv_text", config_.text_dim, config_.d, config_.conv_kernel, rng);
    conv_audio = Conv1dProjection("conv_audio", config_.audio_dim, config_.d, config_.conv_kernel, rng);
    conv_video = Conv1dProjection("conv_video", config_.video_dim, config_.d, config_.conv_kernel, rng);
    gmu = Gmu("gmu", config_.d, rng);
    video_to_at = CrossModalBlock("cmt_video_at", config_.d, config_.attn_heads, config_.local_window, config_.ffn_dim(),
                                  config_.dropout_rate, rng);
    at_to_video = CrossModalBlock("cmt_at_video", config_.d, config_.attn_heads, config_.local_window, config_.ffn_dim(),
                                  config_.dropout_rate, rng);
    head = Linear("head", 4 * config_.d, 1, rng);
  }

  VfmmModel(const VfmmModel&) = default;
  VfmmModel& operator=(const VfmmModel&) = default;

  const VfmmConfig& config() const { return config_; }

  /// Per-timestep humor probabilities, shape T x 1.
  Var forward(Tape& tape, const Matrix& text, const Matrix& audio, const Matrix& video, bool training = false,
              std::mt19937_64* rng = nullptr, VfmmTrace* trace = nullptr) {
    const Eigen::Index length = video.rows();
    if (text.rows() != length || audio.rows() != length)
      throw ValidationError("vfmm_forward: modalities differ in length");
    if (length < 1) throw ValidationError("vfmm_forward: empty sequence");
    Var pe = tape.constant(sinusoidal_pe(length, config_.d));
    Var t2 = tape.add(conv_text(tape, text), pe);
    Var a2 = tape.add(conv_audio(tape, audio), pe);
    Var v2 = tape.add(conv_video(tape, video), pe);
    Var at = gmu(tape, a2, t2);
    std::vector<Matrix>* attn = trace ? &trace->attention : nullptr;
    Var v_at = video_to_at(tape, v2, at, training, rng, attn);
    Var at_v = at_to_video(tape, at, v2, training, rng, attn);
    if (trace) {
      trace->video = tape.value(v2);
      trace->audio_text = tape.value(at);
      trace->video_to_at = tape.value(v_at);
      trace->at_to_video = tape.value(at_v);
    }
    return tape.sigmoid(head(tape, tape.concat_cols({v2, at, v_at, at_v})));
  }

  Eigen::VectorXd predict(const Matrix& text, const Matrix& audio, const Matrix& video) {
    Tape tape;
    return tape.value(forward(tape, text, audio, video)).col(0);
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    conv_text.collect(out);
    conv_audio.collect(out);
    conv_video.collect(out);
    gmu.collect(out);
    video_to_at.collect(out);
    at_to_video.collect(out);
    head.collect(out);
    return out;
  }

  Conv1dProjection conv_text, conv_audio, conv_video;
  Gmu gmu;
  CrossModalBlock video_to_at, at_to_video;
  Linear head;

 private:
  VfmmConfig config_;
};

}  // namespace humorfuse::nn
