// hufor: synthetic corpus, three-stage training, inference, evaluation,
// inspection and gradient checks for the dual-branch forgery detector.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hufor/config.hpp"
#include "hufor/errors.hpp"
#include "hufor/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kIo = 4, kNumeric = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(const hufor::RunConfig& config, const char* key, const char* flag) {
  if (config.get(key).empty()) throw UsageError(std::string(flag) + " is required");
}

int print_gradcheck(const std::vector<std::string>& targets, const hufor::pipeline::GradcheckOptions& options) {
  bool ok = true;
  std::printf("%-16s %-40s %7s %12s  %s\n", "module", "group", "probes", "worst", "status");
  for (const auto& target : targets) {
    for (const auto& m : hufor::pipeline::run_gradcheck(target, options)) {
      for (const auto& g : m.report.groups) {
        const bool pass = g.worst <= hufor::pipeline::kGradcheckTolerance;
        ok = ok && pass;
        std::printf("%-16s %-40s %7zu %12.3e  %s\n", m.name.c_str(), g.name.c_str(), g.probes, g.worst,
                    pass ? "pass" : "FAIL");
      }
      std::printf("%-16s %-40s %7zu %12.3e  %s\n", m.name.c_str(), "(all)", m.report.probes(), m.report.worst(),
                  m.report.passed(hufor::pipeline::kGradcheckTolerance) ? "pass" : "FAIL");
    }
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hufor: dual-branch face forgery detector at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out, data, seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key = value configuration file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--set", overrides, "override a config key (KEY=VALUE, repeatable)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus under --out");
  std::string n, mix;
  synth->add_option("--n", n, "number of samples");
  synth->add_option("--mix", mix, "proportions real,blend_partial,smooth_full");

  auto* train = app.add_subcommand("train", "train one stage; checkpoints go to --out");
  std::string stage;
  train->add_option("--stage", stage, "ctx, face or fusion")->required()->check(CLI::IsMember({"ctx", "face", "fusion"}));
  train->add_option("--data", data, "corpus directory");

  auto* infer = app.add_subcommand("infer", "score images or the configured manifest split");
  std::vector<std::string> images;
  infer->add_option("--data", data, "corpus directory");
  infer->add_option("images", images, "image files (netpbm); omit to use --data");

  auto* eval = app.add_subcommand("eval", "metrics on the configured manifest split");
  eval->add_option("--data", data, "corpus directory");

  auto* inspect = app.add_subcommand("inspect", "gate scores, confidences and feature maps");
  inspect->add_option("--data", data, "corpus directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::string target = "all", corrupt_pattern;
  gradcheck->add_option("--target", target, "adalog, moe, ctx_heads, fusion or all")
      ->check(CLI::IsMember({"all", "adalog", "moe", "ctx_heads", "fusion"}));
  gradcheck->add_option("--corrupt", corrupt_pattern, "perturb analytic gradients of matching entries")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    hufor::RunConfig config;
    if (!config_path.empty()) config.load_file(config_path);
    config.apply_environment(hufor::RunConfig::process_environment());
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!seed.empty()) config.set("seed", seed);
    if (!out.empty()) config.set("out", out);
    if (!data.empty()) config.set("data", data);
    if (!n.empty()) config.set("n", n);
    if (!mix.empty()) config.set("mix", mix);

    if (*gradcheck) {
      hufor::pipeline::GradcheckOptions options;
      options.seed = config.get_seed();
      options.mode = hufor::fusion::parse_mode(config.get("fusion_mode"));
      options.corrupt = corrupt_pattern;
      return print_gradcheck(target == "all" ? hufor::pipeline::gradcheck_targets() : std::vector{target}, options);
    }
    require(config, "out", "--out");
    if (*synth) {
      hufor::pipeline::cmd_synth(config, std::cout);
    } else if (*train) {
      require(config, "data", "--data");
      hufor::pipeline::cmd_train(stage, config, std::cout);
    } else if (*infer) {
      std::vector<std::filesystem::path> paths(images.begin(), images.end());
      if (paths.empty()) require(config, "data", "--data");
      hufor::pipeline::cmd_infer(config, paths, std::cout);
    } else if (*eval) {
      require(config, "data", "--data");
      hufor::pipeline::cmd_eval(config, std::cout);
    } else if (*inspect) {
      require(config, "data", "--data");
      hufor::pipeline::cmd_inspect(config, std::cout);
    }
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const hufor::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const hufor::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const hufor::CheckpointFormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const hufor::ParseError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    // ValidationError, InvalidArgument, LookupError, UndefinedMetric.
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  }
}
