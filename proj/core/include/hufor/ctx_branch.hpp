#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hufor/feature_map.hpp"
#include "hufor/nn.hpp"
#include "hufor/optimizer.hpp"
#include "hufor/parameter_store.hpp"

namespace hufor::ctx {

// ---------------------------------------------------------------- vocabulary

inline constexpr int kSentinel = 0;  // <s>, terminates every rationale
inline constexpr int kBos = 1;       // decoder start symbol, never a target
inline constexpr int kUnknown = 31;
inline constexpr int kVocabSize = 32;
inline constexpr int kMaxRationale = 8;  // including the sentinel

std::string_view token_text(int id);
/// Whitespace tokenization; unknown words map to <unk>. Does not append <s>.
std::vector<int> tokenize(std::string_view text);
std::string detokenize(std::span<const int> ids);

/// Target rationale y_1..y_T, ending with <s>.
struct RationaleSequence {
  std::vector<int> tokens;

  /// 1 <= T <= kMaxRationale, ids in range, last token is <s>.
  void validate() const;
  static RationaleSequence from_text(std::string_view text);
};

// ---------------------------------------------------------------- context encoding

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  std::span<double> row(int i) { return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Token embeddings W (N x e), sentinel state h_s (e), global visual vector f_clip (g).
struct ContextOutput {
  Matrix tokens;
  nn::Vector sentinel;
  nn::Vector global_visual;
  /// Decoded rationale ids when the backend generates text; may be empty.
  std::vector<int> rationale;

  void validate() const;
};

class ContextBackend {
 public:
  virtual ~ContextBackend() = default;
  virtual std::string_view name() const = 0;
  virtual ContextOutput encode(const FeatureMap& image, std::string_view sample_id) = 0;
  virtual int embed_dim() const = 0;
  virtual int global_dim() const = 0;
};

/// Pseudo-random embeddings seeded from a hash of coarse image statistics.
class MockBackend final : public ContextBackend {
 public:
  explicit MockBackend(std::uint64_t seed, int tokens = 8, int embed_dim = 16, int global_dim = 16);
  std::string_view name() const override { return "mock"; }
  ContextOutput encode(const FeatureMap& image, std::string_view sample_id) override;
  int embed_dim() const override { return embed_; }
  int global_dim() const override { return global_; }

 private:
  std::uint64_t seed_;
  int tokens_, embed_, global_;
};

/// Precomputed outputs keyed by sample id, stored in the checkpoint container
/// as entries ctx/<id>/W [N,e], ctx/<id>/h_s [e], ctx/<id>/f_clip [g] in f32.
class RecordedBackend final : public ContextBackend {
 public:
  explicit RecordedBackend(const std::filesystem::path& path);
  std::string_view name() const override { return "recorded"; }
  ContextOutput encode(const FeatureMap& image, std::string_view sample_id) override;
  int embed_dim() const override { return embed_; }
  int global_dim() const override { return global_; }

  static void write(const std::map<std::string, ContextOutput>& records, const std::filesystem::path& path);

 private:
  std::map<std::string, ContextOutput, std::less<>> records_;
  int embed_ = 0, global_ = 0;
};

struct ToyConfig {
  int embed_dim = 16;   // e
  int global_dim = 16;  // g
  int encoder_width = 8;
};

/// Small trainable conv encoder (image -> f_clip) and a position-aware token
/// decoder: h_t = tanh(U f_clip + E[y_{t-1}] + P[t] + b), logits_t = O h_t + o.
/// Parameters live under "ctx_enc." and "ctx_dec.".
class ToyContextModel final : public ContextBackend {
 public:
  ToyContextModel(ParameterStore& store, ToyConfig config = {});

  std::string_view name() const override { return "toy"; }
  /// Greedy decoding until <s> (at most kMaxRationale steps); W holds the
  /// decoder states of every step and h_s is the state with <s> as input.
  ContextOutput encode(const FeatureMap& image, std::string_view sample_id = {}) override;
  int embed_dim() const override { return config_.embed_dim; }
  int global_dim() const override { return config_.global_dim; }

  /// Teacher-forced next-token NLL of a rationale. With accumulate_grad the
  /// gradient is added into the store's gradient slots.
  double rationale_loss(const FeatureMap& image, const RationaleSequence& target, bool accumulate_grad);

  void init(Rng& rng);
  const ToyConfig& config() const noexcept { return config_; }

 private:
  nn::Vector encode_global(const FeatureMap& image);
  void backward_global(std::span<const double> grad_global);
  nn::Vector decoder_state(std::span<const double> global, int prev_token, int position) const;

  ToyConfig config_;
  // encoder
  nn::AvgPool2 pool0_, pool1_, pool2_;
  nn::Conv2d conv1_, conv2_;
  nn::Silu act1_, act2_;
  nn::Linear global_proj_;
  int gap_c_ = 0, gap_h_ = 0, gap_w_ = 0;
  nn::Vector global_out_;
  // decoder
  Param* context_;   // U, e x g
  Param* embed_;     // E, V x e
  Param* position_;  // P, (kMaxRationale + 1) x e
  Param* bias_;      // b, e
  nn::Linear out_;   // O, o
};

ContextOutput encode_context(const FeatureMap& image, ContextBackend& backend, std::string_view sample_id = {});

// ---------------------------------------------------------------- heads

enum class Pooling { max, mean };

struct HeadsConfig {
  int embed_dim = 16;
  int global_dim = 16;
  int feature_dim = 128;  // d
  int hidden = 64;
  Pooling pooling = Pooling::max;
};

/// Projection head (pooled W -> f_ctx) under "ctx_proj." and confidence head
/// ([h_s; f_clip] -> c) under "ctx_conf.".
class CtxHeads {
 public:
  CtxHeads(ParameterStore& store, HeadsConfig config);

  nn::Vector project(const Matrix& tokens);
  /// Returns d loss / d tokens.
  Matrix backward_project(std::span<const double> grad_feature);

  double confidence(std::span<const double> sentinel, std::span<const double> global_visual);
  /// Returns d loss / d [h_s; f_clip].
  nn::Vector backward_confidence(double grad_c);

  void init(Rng& rng);
  void zero_confidence() { confidence_.zero_output(); }
  void zero_projection() { projection_.zero_output(); }
  nn::Linear& confidence_output() noexcept { return confidence_.output_layer(); }
  const HeadsConfig& config() const noexcept { return config_; }

 private:
  HeadsConfig config_;
  nn::Mlp2 projection_;
  nn::Mlp2 confidence_;
  int token_rows_ = 0;
  std::vector<int> argmax_;
  double c_ = 0.5;
};

/// f_ctx = MLP(pool(W)). Throws InvalidArgument for an empty token matrix.
nn::Vector project_ctx(const Matrix& tokens, CtxHeads& heads);
/// c = sigmoid(MLP([h_s; f_clip])).
double confidence(std::span<const double> sentinel, std::span<const double> global_visual, CtxHeads& heads);

// ---------------------------------------------------------------- stage-one training

struct CtxExample {
  FeatureMap image;
  RationaleSequence rationale;
};

/// Minimizes the rationale NLL over the toy encoder and decoder only.
LossTrace train_toy_ctx(ToyContextModel& model, ParameterStore& store, std::span<const CtxExample> corpus,
                        const StageConfig& config);

}  // namespace hufor::ctx
