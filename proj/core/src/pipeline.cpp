#include "hufor/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "hufor/checkpoint.hpp"
#include "hufor/errors.hpp"
#include "hufor/image_io.hpp"
#include "hufor/rng.hpp"

namespace hufor::pipeline {

namespace {

using json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

fs::path require_dir_key(const RunConfig& config, const char* key, const char* flag) {
  const std::string& v = config.get(key);
  if (v.empty()) throw ValidationError(std::string("missing ") + flag + " (config key '" + key + "')");
  return v;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string_view producing_stage(const char* checkpoint) {
  if (checkpoint == std::string_view(kCtxCheckpoint)) return "train --stage ctx";
  if (checkpoint == std::string_view(kFaceCheckpoint)) return "train --stage face";
  return "train --stage fusion";
}

ParameterStore slice_all(const ParameterStore& store, std::initializer_list<std::string_view> prefixes) {
  ParameterStore out;
  for (auto p : prefixes) out.merge(store.slice(p));
  out.set_step(store.step());
  return out;
}

Split corpus_split(const RunConfig& config, std::size_t n) {
  return split_indices(n, config.get_real("val_fraction"), derive_seed(config.get_seed(), 0, "split"));
}

json checkpoint_meta(const RunConfig& config, std::string_view stage) {
  json meta;
  meta["stage"] = stage;
  if (stage == "fusion") meta["fusion_mode"] = config.get("fusion_mode");
  meta["config"] = config.to_json();
  return meta;
}

}  // namespace

// ---------------------------------------------------------------- corpus access

FeatureMap Corpus::load_image(std::size_t i) const { return read_image(root / samples.at(i).path); }

Corpus open_corpus(const fs::path& root) {
  const fs::path manifest = root / "manifest.jsonl";
  if (!fs::exists(manifest)) throw IoError("no manifest at " + manifest.string() + " (run synth first)");
  return {root, data::read_manifest(manifest)};
}

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must lie in [0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<std::size_t> select_split(const Split& split, std::string_view which) {
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  if (which == "all") {
    std::vector<std::size_t> all = split.train;
    all.insert(all.end(), split.val.begin(), split.val.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  throw InvalidArgument("unknown split '" + std::string(which) + "'");
}

// ---------------------------------------------------------------- models

Models::Models(const RunConfig& config)
    : face(store, config.face_config()),
      heads(store, config.heads_config()),
      fusion(store, config.fusion_config()) {
  const std::string& backend = config.get("ctx_backend");
  if (backend == "toy") {
    toy = std::make_unique<ctx::ToyContextModel>(store, config.toy_config());
    backend_ = toy.get();
  } else if (backend == "mock") {
    owned_backend_ = std::make_unique<ctx::MockBackend>(derive_seed(config.get_seed(), 0, "mock-backend"), 8,
                                                        static_cast<int>(config.get_int("ctx_embed_dim")),
                                                        static_cast<int>(config.get_int("ctx_global_dim")));
    backend_ = owned_backend_.get();
  } else {
    const std::string& path = config.get("ctx_recorded");
    if (path.empty()) throw ValidationError("ctx_backend = recorded requires config key 'ctx_recorded'");
    owned_backend_ = std::make_unique<ctx::RecordedBackend>(path);
    backend_ = owned_backend_.get();
  }
  if (backend_->embed_dim() != config.get_int("ctx_embed_dim") ||
      backend_->global_dim() != config.get_int("ctx_global_dim")) {
    throw ValidationError("context backend dimensions differ from ctx_embed_dim / ctx_global_dim");
  }
}

void Models::init(std::uint64_t seed) {
  Rng face_rng(derive_seed(seed, 0, "init-face"));
  face.init(face_rng);
  Rng heads_rng(derive_seed(seed, 0, "init-heads"));
  heads.init(heads_rng);
  Rng fusion_rng(derive_seed(seed, 0, "init-fusion"));
  fusion.init(fusion_rng);
  if (toy) {
    Rng ctx_rng(derive_seed(seed, 0, "init-ctx"));
    toy->init(ctx_rng);
  }
}

void load_stage(Models& models, const fs::path& run_dir, const char* checkpoint) {
  const fs::path path = run_dir / checkpoint;
  if (!fs::exists(path)) {
    throw CheckpointFormatError("missing checkpoint " + path.string() + " (produce it with `hufor " +
                  std::string(producing_stage(checkpoint)) + " --out " + run_dir.string() + "`)");
  }
  const Checkpoint ckpt = load_checkpoint(path);
  for (const auto& name : ckpt.params.names()) {
    if (!models.store.contains(name)) {
      throw ValidationError(path.string() + ": entry " + name + " does not exist in the configured model");
    }
    Param& dst = models.store.at(name);
    const Param& src = ckpt.params.at(name);
    if (dst.shape != src.shape) {
      throw ValidationError(path.string() + ": entry " + name + " has shape " + shape_to_string(src.shape) +
                            ", the configured model expects " + shape_to_string(dst.shape));
    }
    dst.value = src.value;
  }
}

// ---------------------------------------------------------------- inference

FaceEvidence face_evidence(Models& models, const RunConfig& config, const data::Sample& sample,
                           const FeatureMap& image) {
  const auto provider = data::make_provider(config.get("crop_provider"));
  const auto crops = data::crop_faces(image, sample, *provider, static_cast<int>(config.get_int("face_size")),
                                      static_cast<std::size_t>(config.get_int("max_faces")));
  FaceEvidence ev;
  ev.fallback = crops.fallback;
  const bool use_max = config.get("aggregation") == "max";
  std::size_t best = 0;
  nn::Vector feature_sum;
  std::vector<double> pi_sum;
  std::vector<nn::Vector> features;
  std::vector<std::vector<double>> pis;
  for (const auto& crop : crops.crops) {
    const face::FaceOutput out = models.face.forward(crop.image);
    ev.face_scores.push_back(out.probability);
    features.push_back(out.feature);
    pis.push_back(models.face.moe(0).last_scores().pi);
  }
  if (use_max) {
    for (std::size_t i = 1; i < ev.face_scores.size(); ++i) {
      if (ev.face_scores[i] > ev.face_scores[best]) best = i;
    }
    ev.score = ev.face_scores[best];
    ev.feature = features[best];
    ev.pi = pis[best];
  } else {
    const double k = static_cast<double>(features.size());
    ev.feature.assign(features[0].size(), 0.0);
    ev.pi.assign(pis[0].size(), 0.0);
    ev.score = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      ev.score += ev.face_scores[i] / k;
      for (std::size_t j = 0; j < ev.feature.size(); ++j) ev.feature[j] += features[i][j] / k;
      for (std::size_t j = 0; j < ev.pi.size(); ++j) ev.pi[j] += pis[i][j] / k;
    }
  }
  return ev;
}

Inference infer_sample(Models& models, const RunConfig& config, const data::Sample& sample,
                       const FeatureMap& image) {
  Inference r;
  r.id = sample.id;
  r.source = std::string(data::to_string(sample.source));
  r.label = sample.label;
  r.face = face_evidence(models, config, sample, image);
  const ctx::ContextOutput context = models.backend().encode(image, sample.id);
  const nn::Vector f_ctx = models.heads.project(context.tokens);
  r.c = models.heads.confidence(context.sentinel, context.global_visual);
  r.y_final = models.fusion.forward(r.face.feature, f_ctx, r.c);
  if (!std::isfinite(r.y_final)) throw NumericFailure("non-finite forgery score for sample " + sample.id);
  return r;
}

Inference infer_corpus_sample(Models& models, const RunConfig& config, const Corpus& corpus, std::size_t index) {
  const data::Sample& sample = corpus.samples.at(index);
  try {
    return infer_sample(models, config, sample, corpus.load_image(index));
  } catch (const IoError& e) {
    Inference r;
    r.id = sample.id;
    r.source = std::string(data::to_string(sample.source));
    r.label = sample.label;
    r.error = e.what();
    return r;
  } catch (const InvalidArgument& e) {
    Inference r;
    r.id = sample.id;
    r.source = std::string(data::to_string(sample.source));
    r.label = sample.label;
    r.error = e.what();
    return r;
  }
}

std::string format_inference(const Inference& r) {
  json j;
  j["id"] = r.id;
  j["source"] = r.source;
  j["label"] = r.label;
  if (r.error) {
    j["error"] = *r.error;
    return j.dump();
  }
  j["y_final"] = r.y_final;
  j["c"] = r.c;
  j["y_face"] = r.face.score;
  j["face_scores"] = r.face.face_scores;
  j["pi"] = r.face.pi;
  j["crop_fallback"] = r.face.fallback;
  return j.dump();
}

// ---------------------------------------------------------------- commands

std::vector<data::Sample> cmd_synth(const RunConfig& config, std::ostream& log) {
  const fs::path out = require_dir_key(config, "out", "--out");
  const data::CorpusSpec spec = config.corpus_spec();
  auto samples = data::generate_corpus(spec, out);
  std::array<int, data::kSourceCount> counts{};
  for (const auto& s : samples) ++counts[static_cast<int>(s.source)];
  log << "synth: " << samples.size() << " samples (real " << counts[0] << ", blend_partial " << counts[1]
      << ", smooth_full " << counts[2] << ") -> " << (out / "manifest.jsonl").string() << "\n";
  return samples;
}

TrainOutcome cmd_train(std::string_view stage, const RunConfig& config, std::ostream& log) {
  const StageConfig stage_config = config.stage_config(stage);
  const fs::path data_dir = require_dir_key(config, "data", "--data");
  const fs::path run_dir = require_dir_key(config, "out", "--out");
  const Corpus corpus = open_corpus(data_dir);
  const Split split = corpus_split(config, corpus.samples.size());
  if (split.train.empty()) throw ValidationError("training split is empty");

  Models models(config);
  models.init(config.get_seed());
  if (stage == "fusion") {
    load_stage(models, run_dir, kCtxCheckpoint);
    load_stage(models, run_dir, kFaceCheckpoint);
  }
  ensure_dir(run_dir);

  const auto started = std::chrono::steady_clock::now();
  TrainOutcome outcome;
  outcome.stage = std::string(stage);
  json fingerprints = json::object();
  ParameterStore saved;

  if (stage == "ctx") {
    if (models.toy) {
      std::vector<ctx::CtxExample> examples;
      for (std::size_t i : split.train) {
        const auto& s = corpus.samples[i];
        if (!s.rationale) continue;
        ctx::RationaleSequence target{*s.rationale};
        target.validate();
        examples.push_back({corpus.load_image(i), std::move(target)});
      }
      if (examples.empty()) throw ValidationError("stage ctx: no training sample carries a rationale");
      outcome.trace = ctx::train_toy_ctx(*models.toy, models.store, examples, stage_config);
    } else {
      log << "stage ctx: backend '" << config.get("ctx_backend") << "' has no trainable parameters\n";
    }
    saved = slice_all(models.store, {"ctx_enc.", "ctx_dec."});
  } else if (stage == "face") {
    const auto provider = data::make_provider(config.get("crop_provider"));
    std::vector<face::FaceExample> examples;
    for (std::size_t i : split.train) {
      const auto& s = corpus.samples[i];
      const FeatureMap image = corpus.load_image(i);
      const auto crops = data::crop_faces(image, s, *provider, static_cast<int>(config.get_int("face_size")),
                                          static_cast<std::size_t>(config.get_int("max_faces")));
      for (const auto& c : crops.crops) examples.push_back({c.image, s.label});
    }
    outcome.trace = face::train_face(models.face, models.store, examples, stage_config);
    saved = slice_all(models.store, {"face."});
  } else {
    std::vector<fusion::FusionExample> examples;
    for (std::size_t i : split.train) {
      const auto& s = corpus.samples[i];
      const FeatureMap image = corpus.load_image(i);
      fusion::FusionExample ex;
      ex.face_feature = face_evidence(models, config, s, image).feature;
      ex.context = models.backend().encode(image, s.id);
      ex.label = s.label;
      examples.push_back(std::move(ex));
    }
    const auto frozen_face = models.store.fingerprint("face.");
    const auto frozen_enc = models.store.fingerprint("ctx_enc.");
    const auto frozen_dec = models.store.fingerprint("ctx_dec.");
    outcome.trace = fusion::train_fusion(models.fusion, models.heads, models.store, examples, stage_config);
    if (models.store.fingerprint("face.") != frozen_face || models.store.fingerprint("ctx_enc.") != frozen_enc ||
        models.store.fingerprint("ctx_dec.") != frozen_dec) {
      throw NumericFailure("stage fusion modified a frozen branch");
    }
    fingerprints["face."] = hex64(frozen_face);
    fingerprints["ctx_enc."] = hex64(frozen_enc);
    fingerprints["ctx_dec."] = hex64(frozen_dec);
    saved = slice_all(models.store, {"ctx_proj.", "ctx_conf.", "fusion."});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  const char* name = stage == "ctx" ? kCtxCheckpoint : stage == "face" ? kFaceCheckpoint : kFusionCheckpoint;
  outcome.checkpoint = run_dir / name;
  save_checkpoint(saved, outcome.checkpoint, checkpoint_meta(config, stage));
  fingerprints["checkpoint"] = hex64(saved.fingerprint());

  json record;
  record["stage"] = stage;
  record["seed"] = config.get_seed();
  record["train_samples"] = split.train.size();
  record["checkpoint"] = name;
  record["loss_trace"] = outcome.trace.epoch_loss;
  record["fingerprints"] = fingerprints;
  record["config"] = config.to_json();
  outcome.record = run_dir / ("train_" + std::string(stage) + ".json");
  write_text(outcome.record, record.dump(2) + "\n");

  log << "stage " << stage << ": " << outcome.trace.epoch_loss.size() << " epochs";
  if (!outcome.trace.epoch_loss.empty()) {
    log << ", loss " << fixed6(outcome.trace.epoch_loss.front()) << " -> " << fixed6(outcome.trace.epoch_loss.back());
  }
  log << " (" << fixed6(seconds).substr(0, fixed6(seconds).size() - 4) << " s) -> " << outcome.checkpoint.string()
      << "\n";
  return outcome;
}

namespace {

void load_all(Models& models, const RunConfig& config, const fs::path& run_dir) {
  models.init(config.get_seed());
  load_stage(models, run_dir, kCtxCheckpoint);
  load_stage(models, run_dir, kFaceCheckpoint);
  load_stage(models, run_dir, kFusionCheckpoint);
}

std::vector<Inference> infer_split(Models& models, const RunConfig& config, const Corpus& corpus) {
  const Split split = corpus_split(config, corpus.samples.size());
  std::vector<Inference> out;
  for (std::size_t i : select_split(split, config.get("split"))) out.push_back(infer_corpus_sample(models, config, corpus, i));
  return out;
}

}  // namespace

InferOutcome cmd_infer(const RunConfig& config, const std::vector<fs::path>& images, std::ostream& log) {
  const fs::path run_dir = require_dir_key(config, "out", "--out");
  Models models(config);
  load_all(models, config, run_dir);
  InferOutcome outcome;
  if (images.empty()) {
    const Corpus corpus = open_corpus(require_dir_key(config, "data", "--data"));
    outcome.records = infer_split(models, config, corpus);
  } else {
    for (const auto& path : images) {
      data::Sample s;
      s.id = path.filename().string();
      s.path = path.string();
      try {
        const FeatureMap image = read_image(path);
        s.width = image.width();
        s.height = image.height();
        outcome.records.push_back(infer_sample(models, config, s, image));
      } catch (const IoError& e) {
        Inference r;
        r.id = s.id;
        r.error = e.what();
        outcome.records.push_back(r);
      }
    }
  }
  std::string text;
  for (const auto& r : outcome.records) {
    if (r.error) ++outcome.failures;
    text += format_inference(r) + "\n";
  }
  outcome.output = run_dir / "infer.jsonl";
  write_text(outcome.output, text);
  log << "infer: " << outcome.records.size() - outcome.failures << " scored, " << outcome.failures << " failed -> "
      << outcome.output.string() << "\n";
  if (!outcome.records.empty() && outcome.failures == outcome.records.size()) {
    throw IoError("infer: every sample failed; first error: " + *outcome.records.front().error);
  }
  return outcome;
}

EvalOutcome cmd_eval(const RunConfig& config, std::ostream& log) {
  const fs::path run_dir = require_dir_key(config, "out", "--out");
  const Corpus corpus = open_corpus(require_dir_key(config, "data", "--data"));
  Models models(config);
  load_all(models, config, run_dir);
  EvalOutcome outcome;
  outcome.records = infer_split(models, config, corpus);

  metrics::ScoredSet fused, face_only;
  std::string predictions;
  for (const auto& r : outcome.records) {
    predictions += format_inference(r) + "\n";
    if (r.error) continue;
    fused.scores.push_back(r.y_final);
    face_only.scores.push_back(r.face.score);
    for (auto* set : {&fused, &face_only}) {
      set->labels.push_back(r.label);
      set->sources.push_back(r.source);
    }
  }
  if (fused.scores.size() < 2) throw ValidationError("eval: fewer than two samples could be scored");
  outcome.fused = metrics::evaluate(fused);
  outcome.face_only = metrics::evaluate(face_only);

  outcome.dir = run_dir / "eval";
  ensure_dir(outcome.dir);
  write_text(outcome.dir / "report.tsv", metrics::format_table(outcome.fused));
  write_text(outcome.dir / "report.jsonl", metrics::format_jsonl(outcome.fused));
  write_text(outcome.dir / "face_report.tsv", metrics::format_table(outcome.face_only));
  write_text(outcome.dir / "face_report.jsonl", metrics::format_jsonl(outcome.face_only));
  write_text(outcome.dir / "predictions.jsonl", predictions);
  if (outcome.fused.overall.auc) write_text(outcome.dir / "roc.tsv", metrics::format_roc(metrics::roc_curve(fused)));

  log << "eval (" << config.get("split") << " split, " << fused.scores.size() << " samples)\n"
      << metrics::format_table(outcome.fused);
  return outcome;
}

InspectOutcome cmd_inspect(const RunConfig& config, std::ostream& log) {
  const fs::path run_dir = require_dir_key(config, "out", "--out");
  const Corpus corpus = open_corpus(require_dir_key(config, "data", "--data"));
  Models models(config);
  load_all(models, config, run_dir);
  InspectOutcome outcome;
  outcome.dir = run_dir / "inspect";
  ensure_dir(outcome.dir / "maps");

  const Split split = corpus_split(config, corpus.samples.size());
  const auto indices = select_split(split, config.get("split"));
  const auto maps_per_source = static_cast<std::size_t>(config.get_int("inspect_maps"));
  std::map<std::string, std::size_t> maps_written;

  std::string gate_table = "id\tsource";
  const std::size_t experts = models.face.moe(0).expert_count();
  for (std::size_t k = 0; k < experts; ++k) gate_table += "\tpi" + std::to_string(k + 1);
  gate_table += "\tsum\n";
  std::string conf_table = "id\tsource\tc\ty_face\ty_final\n";

  for (std::size_t i : indices) {
    Inference r = infer_corpus_sample(models, config, corpus, i);
    outcome.records.push_back(r);
    if (r.error) continue;
    gate_table += r.id + "\t" + r.source;
    for (double p : r.face.pi) gate_table += "\t" + fixed6(p);
    gate_table += "\t" + fixed6(std::accumulate(r.face.pi.begin(), r.face.pi.end(), 0.0)) + "\n";
    conf_table += r.id + "\t" + r.source + "\t" + fixed6(r.c) + "\t" + fixed6(r.face.score) + "\t" +
                  fixed6(r.y_final) + "\n";

    if (maps_written[r.source] >= maps_per_source) continue;
    ++maps_written[r.source];
    // Re-run the crop that drove the score so the layer caches hold its maps.
    const auto& sample = corpus.samples[i];
    const FeatureMap image = corpus.load_image(i);
    const auto provider = data::make_provider(config.get("crop_provider"));
    const auto crops = data::crop_faces(image, sample, *provider, static_cast<int>(config.get_int("face_size")),
                                        static_cast<std::size_t>(config.get_int("max_faces")));
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.face.face_scores.size(); ++k) {
      if (r.face.face_scores[k] > r.face.face_scores[best]) best = k;
    }
    models.face.forward(crops.crops[best].image);
    const fs::path dir = outcome.dir / "maps" / r.id;
    ensure_dir(dir);
    write_ppm(crops.crops[best].image, dir / "crop.ppm");
    auto& moe = models.face.moe(0);
    for (std::size_t k = 0; k < moe.expert_count(); ++k) {
      const FeatureMap& z = moe.last_outputs()[k];
      FeatureMap energy(1, z.height(), z.width());
      for (int c = 0; c < z.channels(); ++c) {
        for (std::size_t p = 0; p < z.plane_size(); ++p) energy.plane(0)[p] += std::abs(z.plane(c)[p]) / z.channels();
      }
      write_heatmap(energy, dir / ("expert" + std::to_string(k + 1) + ".pgm"));
      auto* adalog = dynamic_cast<face::AdaLogExpert*>(&moe.expert(k));
      if (!adalog) continue;
      const auto& block = adalog->block();
      const std::string prefix = "expert" + std::to_string(k + 1) + "_";
      for (int s = 0; s < block.bank().size(); ++s) {
        char sigma[32];
        std::snprintf(sigma, sizeof sigma, "%g", block.bank().sigmas[s]);
        const FeatureMap& y = block.residuals()[s];
        FeatureMap mean(1, y.height(), y.width());
        for (int c = 0; c < y.channels(); ++c) {
          for (std::size_t p = 0; p < y.plane_size(); ++p) mean.plane(0)[p] += y.plane(c)[p] / y.channels();
        }
        write_heatmap(mean, dir / (prefix + "residual_s" + sigma + ".pgm"));
        write_pgm(block.decision().blend_weights[s], dir / (prefix + "blend_s" + sigma + ".pgm"));
      }
      write_pgm(block.decision().gate, dir / (prefix + "gate.pgm"));
    }
  }

  std::vector<std::string> order;
  for (const auto& r : outcome.records) {
    if (!r.error && std::find(order.begin(), order.end(), r.source) == order.end()) order.push_back(r.source);
  }
  std::string summary = "source\tn";
  for (std::size_t k = 0; k < experts; ++k) summary += "\tmean_pi" + std::to_string(k + 1);
  summary += "\tmean_c\tmin_c\tmax_c\n";
  for (const auto& source : order) {
    SourceSummary s;
    s.source = source;
    s.mean_pi.assign(experts, 0.0);
    s.min_c = 1.0;
    s.max_c = 0.0;
    for (const auto& r : outcome.records) {
      if (r.error || r.source != source) continue;
      ++s.n;
      for (std::size_t k = 0; k < experts; ++k) s.mean_pi[k] += r.face.pi[k];
      s.mean_c += r.c;
      s.min_c = std::min(s.min_c, r.c);
      s.max_c = std::max(s.max_c, r.c);
    }
    for (double& p : s.mean_pi) p /= static_cast<double>(s.n);
    s.mean_c /= static_cast<double>(s.n);
    summary += s.source + "\t" + std::to_string(s.n);
    for (double p : s.mean_pi) summary += "\t" + fixed6(p);
    summary += "\t" + fixed6(s.mean_c) + "\t" + fixed6(s.min_c) + "\t" + fixed6(s.max_c) + "\n";
    outcome.summary.push_back(std::move(s));
  }

  write_text(outcome.dir / "gate_scores.tsv", gate_table);
  write_text(outcome.dir / "confidence.tsv", conf_table);
  write_text(outcome.dir / "summary.tsv", summary);
  log << "inspect -> " << outcome.dir.string() << "\n" << summary;
  return outcome;
}

}  // namespace hufor::pipeline
