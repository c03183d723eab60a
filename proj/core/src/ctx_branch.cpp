#include "hufor/ctx_branch.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <sstream>

#include "hufor/checkpoint.hpp"
#include "hufor/errors.hpp"
#include "hufor/losses.hpp"
#include "hufor/optimizer.hpp"
#include "hufor/rng.hpp"

namespace hufor::ctx {

namespace {

constexpr std::array<std::string_view, kVocabSize> kVocabulary = {
    "<s>",      "<bos>",   "real",       "photo",    "with",  "natural", "skin",      "texture",
    "consistent", "lighting", "blending", "boundary", "near",  "eyes",    "mouth",     "jaw",
    "cheek",    "visible", "seam",       "around",   "face",  "unnaturally", "smooth", "overly",
    "flat",     "hair",    "background", "missing",  "detail", "body",   "forehead",  "<unk>",
};

}  // namespace

std::string_view token_text(int id) {
  if (id < 0 || id >= kVocabSize) throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
  return kVocabulary[id];
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    auto it = std::find(kVocabulary.begin(), kVocabulary.end(), word);
    ids.push_back(it == kVocabulary.end() ? kUnknown : static_cast<int>(it - kVocabulary.begin()));
  }
  return ids;
}

std::string detokenize(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token_text(id);
  }
  return out;
}

void RationaleSequence::validate() const {
  if (tokens.empty() || tokens.size() > static_cast<std::size_t>(kMaxRationale)) {
    throw InvalidArgument("rationale length must be in [1, " + std::to_string(kMaxRationale) + "]");
  }
  for (int t : tokens) {
    if (t < 0 || t >= kVocabSize) throw InvalidArgument("rationale token id " + std::to_string(t) + " out of range");
  }
  if (tokens.back() != kSentinel) throw InvalidArgument("rationale must end with <s>");
}

RationaleSequence RationaleSequence::from_text(std::string_view text) {
  RationaleSequence r{tokenize(text)};
  r.tokens.push_back(kSentinel);
  r.validate();
  return r;
}

void ContextOutput::validate() const {
  if (tokens.rows < 1) throw InvalidArgument("context output: at least one token embedding required");
  if (static_cast<int>(sentinel.size()) != tokens.cols) {
    throw InvalidArgument("context output: sentinel width does not match token width");
  }
  auto finite = [](const auto& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  if (!finite(tokens.data) || !finite(sentinel) || !finite(global_visual)) {
    throw NumericFailure("context output contains NaN or Inf");
  }
}

ContextOutput encode_context(const FeatureMap& image, ContextBackend& backend, std::string_view sample_id) {
  if (image.channels() != 3) throw InvalidArgument("encode_context: expected a 3-channel image");
  ContextOutput out = backend.encode(image, sample_id);
  out.validate();
  return out;
}

// ---------------------------------------------------------------- MockBackend

MockBackend::MockBackend(std::uint64_t seed, int tokens, int embed_dim, int global_dim)
    : seed_(seed), tokens_(tokens), embed_(embed_dim), global_(global_dim) {
  if (tokens < 1 || embed_dim < 1 || global_dim < 1) throw InvalidArgument("mock backend: dimensions must be >= 1");
}

ContextOutput MockBackend::encode(const FeatureMap& image, std::string_view) {
  // Per-channel means over an 8x8 grid of cells plus per-channel variance.
  std::uint64_t h = splitmix64(seed_);
  auto mix = [&h](double v) { h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v)); };
  constexpr int kGrid = 8;
  for (int c = 0; c < image.channels(); ++c) {
    double total = 0.0, total_sq = 0.0;
    for (int gy = 0; gy < kGrid; ++gy) {
      for (int gx = 0; gx < kGrid; ++gx) {
        const int y0 = gy * image.height() / kGrid, y1 = std::max(y0 + 1, (gy + 1) * image.height() / kGrid);
        const int x0 = gx * image.width() / kGrid, x1 = std::max(x0 + 1, (gx + 1) * image.width() / kGrid);
        double s = 0.0;
        int n = 0;
        for (int y = y0; y < std::min(y1, image.height()); ++y) {
          for (int x = x0; x < std::min(x1, image.width()); ++x) {
            s += image(c, y, x);
            ++n;
          }
        }
        mix(n > 0 ? s / n : 0.0);
      }
    }
    for (double v : image.plane(c)) {
      total += v;
      total_sq += v * v;
    }
    const double n = static_cast<double>(image.plane_size());
    mix(total_sq / n - (total / n) * (total / n));
  }
  Rng rng(h);
  ContextOutput out;
  out.tokens = Matrix(tokens_, embed_);
  for (double& v : out.tokens.data) v = rng.normal();
  out.sentinel.resize(embed_);
  for (double& v : out.sentinel) v = rng.normal();
  out.global_visual.resize(global_);
  for (double& v : out.global_visual) v = rng.normal();
  return out;
}

// ---------------------------------------------------------------- RecordedBackend

RecordedBackend::RecordedBackend(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  for (const auto& name : ck.params.names()) {
    if (!name.starts_with("ctx/")) continue;
    const auto slash = name.rfind('/');
    const std::string id = name.substr(4, slash - 4);
    const std::string field = name.substr(slash + 1);
    const Param& p = ck.params.at(name);
    ContextOutput& rec = records_[id];
    if (field == "W") {
      if (p.shape.size() != 2) throw CheckpointFormatError("recorded context '" + id + "': W must be rank 2");
      rec.tokens = Matrix(static_cast<int>(p.shape[0]), static_cast<int>(p.shape[1]));
      rec.tokens.data = p.value;
    } else if (field == "h_s") {
      rec.sentinel = p.value;
    } else if (field == "f_clip") {
      rec.global_visual = p.value;
    } else {
      throw CheckpointFormatError("recorded context '" + id + "': unknown field '" + field + "'");
    }
  }
  for (const auto& [id, rec] : records_) {
    try {
      rec.validate();
    } catch (const std::exception& e) {
      throw CheckpointFormatError("recorded context '" + id + "': " + e.what());
    }
    if (embed_ == 0) {
      embed_ = rec.tokens.cols;
      global_ = static_cast<int>(rec.global_visual.size());
    } else if (embed_ != rec.tokens.cols || global_ != static_cast<int>(rec.global_visual.size())) {
      throw CheckpointFormatError("recorded context '" + id + "': inconsistent dimensions");
    }
  }
}

ContextOutput RecordedBackend::encode(const FeatureMap&, std::string_view sample_id) {
  auto it = records_.find(sample_id);
  if (it == records_.end()) throw LookupError("recorded context has no record for sample id '" + std::string(sample_id) + "'");
  return it->second;
}

void RecordedBackend::write(const std::map<std::string, ContextOutput>& records, const std::filesystem::path& path) {
  ParameterStore store;
  for (const auto& [id, rec] : records) {
    rec.validate();
    if (id.find('/') != std::string::npos) throw InvalidArgument("recorded context: sample id may not contain '/'");
    const std::string base = "ctx/" + id + "/";
    store.add(base + "W", {static_cast<std::size_t>(rec.tokens.rows), static_cast<std::size_t>(rec.tokens.cols)})
        .value = rec.tokens.data;
    store.add(base + "h_s", {rec.sentinel.size()}).value = rec.sentinel;
    store.add(base + "f_clip", {rec.global_visual.size()}).value = rec.global_visual;
  }
  nlohmann::ordered_json meta;
  meta["kind"] = "recorded-context";
  meta["records"] = records.size();
  save_checkpoint(store, path, meta, StorePrecision::single);
}

// ---------------------------------------------------------------- ToyContextModel

ToyContextModel::ToyContextModel(ParameterStore& store, ToyConfig config)
    : config_(config),
      conv1_(store, "ctx_enc.conv1", 3, config.encoder_width, 3),
      conv2_(store, "ctx_enc.conv2", config.encoder_width, 2 * config.encoder_width, 3),
      global_proj_(store, "ctx_enc.global", 2 * config.encoder_width, config.global_dim),
      out_(store, "ctx_dec.out", config.embed_dim, kVocabSize) {
  const auto e = static_cast<std::size_t>(config.embed_dim);
  context_ = &store.bind("ctx_dec.context", {e, static_cast<std::size_t>(config.global_dim)});
  embed_ = &store.bind("ctx_dec.embed", {static_cast<std::size_t>(kVocabSize), e});
  position_ = &store.bind("ctx_dec.position", {static_cast<std::size_t>(kMaxRationale + 1), e});
  bias_ = &store.bind("ctx_dec.bias", {e});
}

void ToyContextModel::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  global_proj_.init(rng);
  nn::init_fan_in(*context_, static_cast<std::size_t>(config_.global_dim), rng);
  for (double& v : embed_->value) v = 0.5 * rng.uniform(-1.0, 1.0);
  for (double& v : position_->value) v = 0.5 * rng.uniform(-1.0, 1.0);
  std::fill(bias_->value.begin(), bias_->value.end(), 0.0);
  out_.init(rng);
}

nn::Vector ToyContextModel::encode_global(const FeatureMap& image) {
  FeatureMap x = pool1_.forward(act1_.forward(conv1_.forward(pool0_.forward(image))));
  x = pool2_.forward(act2_.forward(conv2_.forward(x)));
  gap_c_ = x.channels();
  gap_h_ = x.height();
  gap_w_ = x.width();
  global_out_ = global_proj_.forward(nn::global_average_pool(x));
  for (double& v : global_out_) v = std::tanh(v);
  return global_out_;
}

void ToyContextModel::backward_global(std::span<const double> grad_global) {
  nn::Vector g(grad_global.begin(), grad_global.end());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - global_out_[i] * global_out_[i];
  const nn::Vector gpool = global_proj_.backward(g);
  FeatureMap gx = nn::global_average_pool_backward(gpool, gap_c_, gap_h_, gap_w_);
  gx = conv2_.backward(act2_.backward(pool2_.backward(gx)));
  conv1_.backward(act1_.backward(pool1_.backward(gx)));
}

nn::Vector ToyContextModel::decoder_state(std::span<const double> global, int prev_token, int position) const {
  const int e = config_.embed_dim;
  const int g = config_.global_dim;
  nn::Vector h(e);
  for (int i = 0; i < e; ++i) {
    double s = bias_->value[i] + embed_->value[static_cast<std::size_t>(prev_token) * e + i] +
               position_->value[static_cast<std::size_t>(position) * e + i];
    const double* row = context_->value.data() + static_cast<std::size_t>(i) * g;
    for (int j = 0; j < g; ++j) s += row[j] * global[j];
    h[i] = std::tanh(s);
  }
  return h;
}

ContextOutput ToyContextModel::encode(const FeatureMap& image, std::string_view) {
  const nn::Vector global = encode_global(image);
  ContextOutput out;
  out.global_visual = global;
  std::vector<nn::Vector> states;
  int prev = kBos;
  int step = 0;
  while (step < kMaxRationale) {
    nn::Vector h = decoder_state(global, prev, step);
    const nn::Vector logits = out_.forward(h);
    const int next = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    states.push_back(std::move(h));
    out.rationale.push_back(next);
    ++step;
    if (next == kSentinel) break;
    prev = next;
  }
  out.sentinel = decoder_state(global, kSentinel, step);
  out.tokens = Matrix(static_cast<int>(states.size()), config_.embed_dim);
  for (std::size_t t = 0; t < states.size(); ++t) {
    std::copy(states[t].begin(), states[t].end(), out.tokens.row(static_cast<int>(t)).begin());
  }
  return out;
}

double ToyContextModel::rationale_loss(const FeatureMap& image, const RationaleSequence& target, bool accumulate_grad) {
  target.validate();
  const int steps = static_cast<int>(target.tokens.size());
  const int e = config_.embed_dim;
  const int g = config_.global_dim;
  const nn::Vector global = encode_global(image);

  std::vector<nn::Vector> states(steps);
  LogitRows logits{steps, kVocabSize, std::vector<double>(static_cast<std::size_t>(steps) * kVocabSize)};
  for (int t = 0; t < steps; ++t) {
    const int prev = t == 0 ? kBos : target.tokens[t - 1];
    states[t] = decoder_state(global, prev, t);
    const nn::Vector row = out_.forward(states[t]);
    std::copy(row.begin(), row.end(), logits.data.begin() + static_cast<std::ptrdiff_t>(t) * kVocabSize);
  }
  if (!accumulate_grad) return next_token_nll(logits, target.tokens);

  std::vector<double> grad_logits;
  const double loss = next_token_nll(logits, target.tokens, grad_logits);
  nn::Vector grad_global(g, 0.0);
  for (int t = 0; t < steps; ++t) {
    const int prev = t == 0 ? kBos : target.tokens[t - 1];
    out_.forward(states[t]);
    const nn::Vector gh = out_.backward(
        std::span<const double>(grad_logits.data() + static_cast<std::size_t>(t) * kVocabSize, kVocabSize));
    for (int i = 0; i < e; ++i) {
      const double gp = gh[i] * (1.0 - states[t][i] * states[t][i]);
      bias_->grad[i] += gp;
      embed_->grad[static_cast<std::size_t>(prev) * e + i] += gp;
      position_->grad[static_cast<std::size_t>(t) * e + i] += gp;
      double* urow = context_->grad.data() + static_cast<std::size_t>(i) * g;
      const double* uval = context_->value.data() + static_cast<std::size_t>(i) * g;
      for (int j = 0; j < g; ++j) {
        urow[j] += gp * global[j];
        grad_global[j] += gp * uval[j];
      }
    }
  }
  backward_global(grad_global);
  return loss;
}

// ---------------------------------------------------------------- heads

CtxHeads::CtxHeads(ParameterStore& store, HeadsConfig config)
    : config_(config),
      projection_(store, "ctx_proj.mlp", config.embed_dim, config.hidden, config.feature_dim),
      confidence_(store, "ctx_conf.mlp", config.embed_dim + config.global_dim, config.hidden, 1) {}

void CtxHeads::init(Rng& rng) {
  projection_.init(rng);
  confidence_.init(rng);
}

nn::Vector CtxHeads::project(const Matrix& tokens) {
  if (tokens.rows < 1) throw InvalidArgument("project_ctx: token matrix is empty");
  if (tokens.cols != config_.embed_dim) {
    throw InvalidArgument("project_ctx: expected token width " + std::to_string(config_.embed_dim) + ", got " +
                          std::to_string(tokens.cols));
  }
  token_rows_ = tokens.rows;
  nn::Vector pooled(tokens.cols);
  argmax_.assign(tokens.cols, 0);
  for (int j = 0; j < tokens.cols; ++j) {
    if (config_.pooling == Pooling::max) {
      double best = tokens.row(0)[j];
      for (int i = 1; i < tokens.rows; ++i) {
        if (tokens.row(i)[j] > best) {
          best = tokens.row(i)[j];
          argmax_[j] = i;
        }
      }
      pooled[j] = best;
    } else {
      double s = 0.0;
      for (int i = 0; i < tokens.rows; ++i) s += tokens.row(i)[j];
      pooled[j] = s / tokens.rows;
    }
  }
  return projection_.forward(pooled);
}

Matrix CtxHeads::backward_project(std::span<const double> grad_feature) {
  const nn::Vector gp = projection_.backward(grad_feature);
  Matrix grad(token_rows_, config_.embed_dim);
  for (int j = 0; j < config_.embed_dim; ++j) {
    if (config_.pooling == Pooling::max) {
      grad.row(argmax_[j])[j] = gp[j];
    } else {
      for (int i = 0; i < token_rows_; ++i) grad.row(i)[j] = gp[j] / token_rows_;
    }
  }
  return grad;
}

double CtxHeads::confidence(std::span<const double> sentinel, std::span<const double> global_visual) {
  if (static_cast<int>(sentinel.size()) != config_.embed_dim ||
      static_cast<int>(global_visual.size()) != config_.global_dim) {
    throw InvalidArgument("confidence: expected [h_s; f_clip] of widths " + std::to_string(config_.embed_dim) + " + " +
                          std::to_string(config_.global_dim) + ", got " + std::to_string(sentinel.size()) + " + " +
                          std::to_string(global_visual.size()));
  }
  nn::Vector joint(sentinel.begin(), sentinel.end());
  joint.insert(joint.end(), global_visual.begin(), global_visual.end());
  c_ = nn::sigmoid(confidence_.forward(joint)[0]);
  return c_;
}

nn::Vector CtxHeads::backward_confidence(double grad_c) {
  const double g[1] = {grad_c * c_ * (1.0 - c_)};
  return confidence_.backward(g);
}

nn::Vector project_ctx(const Matrix& tokens, CtxHeads& heads) { return heads.project(tokens); }

double confidence(std::span<const double> sentinel, std::span<const double> global_visual, CtxHeads& heads) {
  return heads.confidence(sentinel, global_visual);
}

// ---------------------------------------------------------------- training

LossTrace train_toy_ctx(ToyContextModel& model, ParameterStore& store, std::span<const CtxExample> corpus,
                        const StageConfig& config) {
  if (corpus.empty()) throw InvalidArgument("train_toy_ctx: empty corpus");
  if (config.batch < 1 || config.epochs < 0) throw InvalidArgument("train_toy_ctx: batch >= 1 and epochs >= 0 required");
  Sgd opt(store, {"ctx_enc.", "ctx_dec."}, config.learning_rate, config.momentum);
  Rng rng(derive_seed(config.seed, 0, "ctx-train"));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t updates = total_steps(config, order.size());
  std::size_t step = 0;
  LossTrace trace;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = corpus[order[i]];
        total += model.rationale_loss(ex.image, ex.rationale, true);
      }
      opt.set_learning_rate(scheduled_rate(config, step++, updates));
      opt.step(1.0 / static_cast<double>(end - start));
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) throw NumericFailure("train_toy_ctx: loss became non-finite at epoch " + std::to_string(epoch));
    trace.epoch_loss.push_back(mean);
  }
  return trace;
}

}  // namespace hufor::ctx
