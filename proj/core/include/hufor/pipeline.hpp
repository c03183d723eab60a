#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hufor/config.hpp"
#include "hufor/ctx_branch.hpp"
#include "hufor/datasynth.hpp"
#include "hufor/face_moe.hpp"
#include "hufor/fusion.hpp"
#include "hufor/gradcheck.hpp"
#include "hufor/metrics.hpp"
#include "hufor/parameter_store.hpp"

namespace hufor::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- corpus access

struct Corpus {
  fs::path root;
  std::vector<data::Sample> samples;

  FeatureMap load_image(std::size_t i) const;
};

/// Reads root/manifest.jsonl.
Corpus open_corpus(const fs::path& root);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle; the first round(val_fraction * n) indices become the
/// validation split. Both lists are returned in ascending order.
Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed);
std::vector<std::size_t> select_split(const Split& split, std::string_view which);

// ---------------------------------------------------------------- models

/// Every trainable module built from one configuration, sharing one store.
/// Namespaces: ctx_enc., ctx_dec., face., ctx_proj., ctx_conf., fusion.
class Models {
 public:
  explicit Models(const RunConfig& config);
  Models(const Models&) = delete;
  Models& operator=(const Models&) = delete;

  /// Fresh initialization; each module draws from its own seed stream.
  void init(std::uint64_t seed);

  ParameterStore store;
  face::FaceBranch face;
  ctx::CtxHeads heads;
  fusion::FusionModel fusion;
  std::unique_ptr<ctx::ToyContextModel> toy;  // ctx_backend = toy only

  ctx::ContextBackend& backend() { return *backend_; }

 private:
  std::unique_ptr<ctx::ContextBackend> owned_backend_;
  ctx::ContextBackend* backend_ = nullptr;
};

inline constexpr const char* kCtxCheckpoint = "ctx.ckpt";
inline constexpr const char* kFaceCheckpoint = "face.ckpt";
inline constexpr const char* kFusionCheckpoint = "fusion.ckpt";

/// Loads the named checkpoint from run_dir into the store. A missing file
/// throws CheckpointFormatError naming the expected path and the stage that produces it.
void load_stage(Models& models, const fs::path& run_dir, const char* checkpoint);

// ---------------------------------------------------------------- inference

struct FaceEvidence {
  std::vector<double> face_scores;  // per crop, crop order
  double score = 0.5;               // aggregated y_face
  nn::Vector feature;               // f_face fed to fusion
  std::vector<double> pi;           // gate scores of the first MoE layer
  bool fallback = false;
};

/// crop_faces -> face_forward per crop -> aggregate (max or mean).
FaceEvidence face_evidence(Models& models, const RunConfig& config, const data::Sample& sample,
                           const FeatureMap& image);

struct Inference {
  std::string id;
  std::string source;
  int label = -1;
  double y_final = 0.5;
  double c = 0.5;
  FaceEvidence face;
  std::optional<std::string> error;
};

Inference infer_sample(Models& models, const RunConfig& config, const data::Sample& sample,
                       const FeatureMap& image);
/// Loads the image and runs inference; load failures become an error record.
Inference infer_corpus_sample(Models& models, const RunConfig& config, const Corpus& corpus, std::size_t index);
std::string format_inference(const Inference& r);

// ---------------------------------------------------------------- commands

/// Writes the corpus under config "out".
std::vector<data::Sample> cmd_synth(const RunConfig& config, std::ostream& log);

struct TrainOutcome {
  std::string stage;
  LossTrace trace;
  fs::path checkpoint;
  fs::path record;
};

/// Trains one stage on the training split of config "data" and writes
/// <out>/<stage>.ckpt plus <out>/train_<stage>.json.
TrainOutcome cmd_train(std::string_view stage, const RunConfig& config, std::ostream& log);

struct InferOutcome {
  std::vector<Inference> records;
  std::size_t failures = 0;
  fs::path output;
};

/// Runs on the configured split of config "data" or on explicit image paths
/// when `images` is non-empty. Writes <out>/infer.jsonl. Throws when every
/// sample fails.
InferOutcome cmd_infer(const RunConfig& config, const std::vector<fs::path>& images, std::ostream& log);

struct EvalOutcome {
  metrics::EvalReport fused;
  metrics::EvalReport face_only;
  std::vector<Inference> records;
  fs::path dir;
};

/// Writes <out>/eval/{report.tsv, report.jsonl, face_report.tsv,
/// face_report.jsonl, roc.tsv, predictions.jsonl}.
EvalOutcome cmd_eval(const RunConfig& config, std::ostream& log);

struct SourceSummary {
  std::string source;
  std::size_t n = 0;
  std::vector<double> mean_pi;
  double mean_c = 0.0;
  double min_c = 0.0;
  double max_c = 0.0;
};

struct InspectOutcome {
  std::vector<Inference> records;
  std::vector<SourceSummary> summary;
  fs::path dir;
};

/// Writes gate and confidence tables plus heatmaps under <out>/inspect.
InspectOutcome cmd_inspect(const RunConfig& config, std::ostream& log);

// ---------------------------------------------------------------- gradient checks

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckOptions {
  std::uint64_t seed = 7;
  fusion::Mode mode = fusion::Mode::weight_face;
  /// Test fixture: entries whose names contain this string get their analytic
  /// gradient perturbed before comparison.
  std::string corrupt;
};

struct GradcheckModule {
  std::string name;
  GradcheckReport report;
};

/// target is adalog, moe, ctx_heads or fusion. ctx_heads reports the
/// projection and confidence heads as separate modules.
std::vector<GradcheckModule> run_gradcheck(std::string_view target, const GradcheckOptions& options);
std::vector<std::string> gradcheck_targets();

}  // namespace hufor::pipeline
