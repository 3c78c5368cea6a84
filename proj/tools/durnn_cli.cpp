// ===== durnn_cli.cpp =====
//
// Command-line trainer and experiment runner. Subcommands:
//
//   train  --config <file> [--seed n] [--resume <ckpt>]
//   verify [--sizes i,n,m,l,b] [--corrupt tensor] [--json] ...
//   ablate --variants a,b,c --config <file> [--seed n]
//   trace  --ckpt <file> --out <csv>
//
// DURNN_DATA_DIR overrides the config's data directory. Exit codes: 0 ok,
// 1 failed criteria / aborted computation, 2 usage or bad inputs.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "durnn/checkpoint.hpp"
#include "durnn/config.hpp"
#include "durnn/trainer.hpp"
#include "durnn/verify.hpp"

namespace {

constexpr int kOk = 0, kFailed = 1, kUsage = 2;

// Errors before any computation starts (bad files, bad names) are usage
// errors; UsageError routes them to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

durnn::ExperimentConfig load_with_env(const std::string& path) {
  try {
    durnn::ExperimentConfig cfg = durnn::load_config(path);
    if (const char* env = std::getenv("DURNN_DATA_DIR"); env && *env) cfg.data_dir = env;
    return cfg;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

void print_result(const std::string& label, const durnn::TrainResult& res) {
  if (std::isinf(res.best_eval_loss))  // resumed past max_iters: nothing to compute
    std::printf("%s: %ld iterations, no new evaluations (run already complete)\n",
                label.c_str(), res.iterations);
  else
    std::printf("%s: %ld iterations, final eval loss %.6g, best %.6g\n", label.c_str(),
                res.iterations, res.final_eval_loss, res.best_eval_loss);
  if (res.achieved_iter >= 0)
    std::printf("%s: loss target reached at iteration %ld\n", label.c_str(),
                res.achieved_iter);
  if (res.final_test_err >= 0.0)
    std::printf("%s: final test error %.4f\n", label.c_str(), res.final_test_err);
  if (res.test_achieved_iter >= 0)
    std::printf("%s: test-error target reached at iteration %ld\n", label.c_str(),
                res.test_achieved_iter);
  std::printf("%s: log %s\n%s: checkpoint %s\n", label.c_str(), res.log_path.c_str(),
              label.c_str(), res.ckpt_path.c_str());
}

std::vector<durnn::Variant> parse_variants(const std::string& csv) {
  std::vector<durnn::Variant> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(durnn::variant_from_string(item));
  if (out.empty()) throw std::invalid_argument("ablate: empty variant list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"durnn — dual recurrent network trainer and verifier"};
  app.require_subcommand(1);

  std::string config_path, resume_path, variants_csv, trace_ckpt, trace_out, corrupt;
  unsigned long long seed = 0;
  bool json_out = false;

  CLI::App* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path, "experiment config file")->required();
  CLI::Option* train_seed = train->add_option("--seed", seed, "override the config seed");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  durnn::VerifyOptions vopt;
  std::vector<int> sizes;
  CLI::App* verify = app.add_subcommand("verify", "Run the gradient and bound oracles");
  verify->add_option("--sizes", sizes,
                     "instances,neurons,inputs,steps,batch for the closed-form sweep")
      ->delimiter(',')
      ->expected(1, 5);
  verify->add_option("--fd-instances", vopt.fd_instances, "finite-difference instances");
  verify->add_option("--bound-inits", vopt.bound_inits, "random inits per bound span");
  verify->add_option("--spans", vopt.bound_spans, "sequence spans for the bound checks")
      ->delimiter(',');
  verify->add_option("--seed", vopt.seed, "sweep seed");
  verify->add_option("--corrupt", corrupt,
                     "fault-injection hook: poison this gradient tensor and expect a failure");
  verify->add_flag("--json", json_out, "emit the report as JSON");

  CLI::App* ablate = app.add_subcommand("ablate", "Train several variants on one config");
  ablate->add_option("--variants", variants_csv, "comma-separated variant names")->required();
  ablate->add_option("--config", config_path, "experiment config file")->required();
  CLI::Option* ablate_seed = ablate->add_option("--seed", seed, "override the config seed");

  CLI::App* trace = app.add_subcommand("trace", "Export activation traces from a checkpoint");
  trace->add_option("--ckpt", trace_ckpt, "checkpoint file")->required();
  trace->add_option("--out", trace_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) {
      durnn::ExperimentConfig cfg = load_with_env(config_path);
      if (*train_seed) cfg.seed = seed;
      durnn::TrainResult res;
      try {
        res = durnn::run_training(cfg, resume_path);
      } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
      }
      print_result("train", res);
      return kOk;
    }

    if (verify->parsed()) {
      if (!sizes.empty()) vopt.instances = sizes[0];
      if (sizes.size() > 1) vopt.neurons = sizes[1];
      if (sizes.size() > 2) vopt.inputs = sizes[2];
      if (sizes.size() > 3) vopt.steps = sizes[3];
      if (sizes.size() > 4) vopt.batch = sizes[4];
      vopt.corrupt = corrupt;
      const durnn::VerifyOutcome out = durnn::run_verify(vopt);
      std::cout << (json_out ? out.json : out.text);
      return out.pass ? kOk : kFailed;
    }

    if (ablate->parsed()) {
      durnn::ExperimentConfig cfg = load_with_env(config_path);
      if (*ablate_seed) cfg.seed = seed;
      const std::vector<durnn::Variant> variants = parse_variants(variants_csv);
      std::vector<std::pair<std::string, durnn::TrainResult>> results;
      try {
        results = durnn::run_ablation(cfg, variants);
      } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
      }
      for (const auto& [name, res] : results) print_result(name, res);
      std::printf("ablation: merged log %s/ablation.csv\n", cfg.out_dir.c_str());
      return kOk;
    }

    // trace
    durnn::LoadedCheckpoint lc;
    try {
      lc = durnn::load_checkpoint(trace_ckpt);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    durnn::export_traces(lc.net, durnn::trace_input(lc.config), trace_out);
    std::printf("trace: wrote %s\n", trace_out.c_str());
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
}
