#include "dcnn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dcnn/errors.hpp"
#include "dcnn/gradcheck.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/png_io.hpp"
#include "dcnn/rng.hpp"

namespace fs = std::filesystem;

namespace dcnn {

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t");
  return s.substr(from, to - from + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer \"" + v + "\" for key " + key);
  }
}

double parse_f64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number \"" + v + "\" for key " + key);
  }
}

}  // namespace

void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);

  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "network" && section != "training" &&
          section != "split" && section != "run")
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (section == "network") {
      if (key == "input") {
        cfg.network.input_h = cfg.network.input_w = parse_u64(value, key);
      } else if (key == "input_h") {
        cfg.network.input_h = parse_u64(value, key);
      } else if (key == "input_w") {
        cfg.network.input_w = parse_u64(value, key);
      } else if (key == "convs") {
        cfg.network.convs.clear();
        for (const std::string& item : split_list(value)) {
          const auto x = item.find('x');
          if (x == std::string::npos)
            throw ConfigError("config: conv spec \"" + item +
                              "\" must look like 50x11");
          cfg.network.convs.push_back(
              {parse_u64(item.substr(0, x), key),
               parse_u64(item.substr(x + 1), key)});
        }
      } else if (key == "pool_after") {
        cfg.network.pool_after.clear();
        for (const std::string& item : split_list(value))
          cfg.network.pool_after.insert(parse_u64(item, key));
      } else if (key == "fc") {
        cfg.network.fc_dims.clear();
        for (const std::string& item : split_list(value))
          cfg.network.fc_dims.push_back(parse_u64(item, key));
      } else if (key == "stride") {
        cfg.network.stride = parse_u64(value, key);
      } else if (key == "padding") {
        cfg.network.padding = parse_u64(value, key);
      } else {
        throw ConfigError("config: unknown key \"" + key + "\" in [network]");
      }
    } else if (section == "training") {
      if (key == "batch_size") {
        cfg.training.batch_size = parse_u64(value, key);
      } else if (key == "learning_rate") {
        cfg.training.learning_rate = static_cast<float>(parse_f64(value, key));
      } else if (key == "momentum") {
        cfg.training.momentum = static_cast<float>(parse_f64(value, key));
      } else if (key == "max_iterations") {
        cfg.training.max_iterations = parse_u64(value, key);
      } else if (key == "epochs") {
        cfg.training.epochs = parse_u64(value, key);
      } else if (key == "eval_every") {
        cfg.training.eval_every = parse_u64(value, key);
      } else if (key == "weighted_loss") {
        cfg.training.class_weighted_loss = parse_u64(value, key) != 0;
      } else {
        throw ConfigError("config: unknown key \"" + key + "\" in [training]");
      }
    } else if (section == "split") {
      if (key == "train") {
        cfg.split.train_frac = parse_f64(value, key);
      } else if (key == "val") {
        cfg.split.val_frac = parse_f64(value, key);
      } else if (key == "test") {
        cfg.split.test_frac = parse_f64(value, key);
      } else {
        throw ConfigError("config: unknown key \"" + key + "\" in [split]");
      }
    } else if (section == "run") {
      if (key == "seed") {
        cfg.seed = parse_u64(value, key);
      } else if (key == "threshold") {
        cfg.threshold = parse_f64(value, key);
      } else {
        throw ConfigError("config: unknown key \"" + key + "\" in [run]");
      }
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": key outside of any [section]");
    }
  }
}

namespace {

LabeledDataset rescale_dataset(const LabeledDataset& ds, std::size_t h,
                               std::size_t w) {
  LabeledDataset out;
  out.f_cancer = ds.f_cancer;
  out.f_free = ds.f_free;
  out.samples.reserve(ds.size());
  for (const Sample& s : ds.samples)
    out.samples.push_back({rescale(s.image, h, w), s.label, s.id});
  return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

int cmd_train(const RunConfig& run, const std::string& data_dir,
              const std::string& out_dir, bool with_timing) {
  LabeledDataset ds = load_dataset(data_dir);
  ds = rescale_dataset(ds, run.network.input_h, run.network.input_w);

  SplitSpec split_spec = run.split;
  split_spec.seed = derive_seed(run.seed, "split");
  const SplitResult parts = split(ds, split_spec);
  if (parts.stratification_warning)
    std::cerr << "warning: a split holds zero samples of one class\n";

  Rng init(derive_seed(run.seed, "init"));
  Network net = Network::build(run.network, init);

  TrainingConfig tcfg = run.training;
  tcfg.seed = derive_seed(run.seed, "train");
  const TrainResult result = train(net, parts.train, parts.val, tcfg);

  fs::create_directories(out_dir);
  result.network.save((fs::path(out_dir) / "best.ckpt").string());
  result.final_network.save((fs::path(out_dir) / "final.ckpt").string());
  {
    std::ofstream csv(fs::path(out_dir) / "curves.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write curves.csv in " + out_dir);
    export_csv(result.log, csv, with_timing);
  }
  const MetricsReport val_report =
      evaluate(result.network, parts.val, run.threshold);
  write_text_file(fs::path(out_dir) / "val_report.json",
                  report_to_json(val_report) + "\n");

  std::cout << "train: " << result.iterations_run << " iterations, best at "
            << result.best_iteration << " (validation loss "
            << result.best_val_loss << ")\n";
  std::cout << confusion_text(val_report);
  if (result.diverged) {
    std::cerr << "error: training diverged (non-finite loss); best checkpoint "
                 "kept from iteration "
              << result.best_iteration << "\n";
    return kNumeric;
  }
  return kOk;
}

int cmd_eval(const RunConfig& run, const std::string& model_path,
             const std::string& data_dir, const std::string& split_name,
             const std::string& out_dir) {
  const Network net = Network::load(model_path);
  LabeledDataset ds = load_dataset(data_dir);
  ds = rescale_dataset(ds, net.config().input_h, net.config().input_w);

  const LabeledDataset* subset = &ds;
  SplitResult parts;
  if (split_name != "all") {
    SplitSpec split_spec = run.split;
    split_spec.seed = derive_seed(run.seed, "split");
    parts = split(ds, split_spec);
    if (split_name == "train")
      subset = &parts.train;
    else if (split_name == "val")
      subset = &parts.val;
    else if (split_name == "test")
      subset = &parts.test;
    else
      throw ConfigError("eval: --split must be train, val, test or all");
  }

  const MetricsReport report = evaluate(net, *subset, run.threshold);
  const std::string json = report_to_json(report);
  std::cout << json << "\n";
  std::cout << confusion_text(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "eval_report.json", json + "\n");
  }
  return kOk;
}

int cmd_predict(const RunConfig& run, const std::string& model_path,
                const std::string& image_path) {
  const Network net = Network::load(model_path);
  const GrayImage img = read_png_gray(image_path);
  Tensor image = Tensor::from_data(Shape{1, img.height, img.width},
                                   std::vector<float>(img.pixels));
  image = rescale(image, net.config().input_h, net.config().input_w);

  Tensor batch = Tensor::zeros(
      Shape{1, 1, net.config().input_h, net.config().input_w});
  std::copy(image.data(), image.data() + image.size(), batch.data());
  const ForwardTrace trace = net.forward(batch);
  const double p_free = trace.probs[0];
  const double p_cancer = trace.probs[1];
  const char* decision = p_cancer >= run.threshold ? "cancer" : "cancer-free";

  std::ostringstream os;
  os << "{\n";
  os << "  \"p_cancer\": " << p_cancer << ",\n";
  os << "  \"p_free\": " << p_free << ",\n";
  os << "  \"decision\": \"" << decision << "\",\n";
  os << "  \"threshold\": " << run.threshold << "\n";
  os << "}\n";
  std::cout << os.str();
  return kOk;
}

int cmd_synth(const RunConfig& run, std::size_t n, std::size_t size,
              const std::string& out_dir) {
  const LabeledDataset ds =
      generate_synthetic(n, size, size, derive_seed(run.seed, "synth"));
  write_dataset(ds, out_dir);
  std::cout << "synth: wrote " << ds.size() << " images (" << ds.f_cancer
            << " cancer / " << ds.f_free << " cancer-free) to " << out_dir
            << "\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& run, bool inject_error) {
  const GradCheckReport report = run_gradcheck(run.seed, inject_error);
  for (const GradCheckEntry& e : report.entries) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-14s max relative error %.3e  %s\n",
                  e.name.c_str(), e.max_rel_error,
                  e.max_rel_error < report.tolerance ? "ok" : "FAIL");
    std::cout << line;
  }
  if (!report.passed()) {
    std::cerr << "error: gradient check exceeded tolerance "
              << report.tolerance << "\n";
    return kNumeric;
  }
  std::cout << "gradcheck: all layers within " << report.tolerance << "\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Convolutional network for binary grayscale-image "
               "classification: training, evaluation, and verification"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, model_path, image_path;
  std::string split_name = "test";
  std::optional<std::uint64_t> seed_flag;
  std::optional<double> threshold_flag;
  std::size_t synth_n = 0, synth_size = 64;
  bool with_timing = false, inject_error = false;

  const auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value)");
    cmd->add_option("--seed", seed_flag, "master seed; sub-seeds derive from it");
    cmd->add_option("--threshold", threshold_flag,
                    "decision threshold on p(cancer)");
  };

  CLI::App* train_cmd =
      app.add_subcommand("train", "train on a labeled dataset");
  add_shared(train_cmd);
  train_cmd->add_option("--data-dir", data_dir, "dataset directory")
      ->required();
  train_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  train_cmd->add_flag("--timing", with_timing,
                      "write measured elapsed_ms into curves.csv (makes the "
                      "file run-dependent)");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  add_shared(eval_cmd);
  eval_cmd->add_option("--model", model_path, "checkpoint path")->required();
  eval_cmd->add_option("--data-dir", data_dir, "dataset directory")
      ->required();
  eval_cmd->add_option("--split", split_name, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--out-dir", out_dir,
                       "also write eval_report.json here");

  CLI::App* predict_cmd =
      app.add_subcommand("predict", "classify a single grayscale PNG");
  add_shared(predict_cmd);
  predict_cmd->add_option("--model", model_path, "checkpoint path")
      ->required();
  predict_cmd->add_option("--image", image_path, "grayscale PNG")->required();

  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "generate a synthetic labeled dataset (PNG + labels.csv)");
  add_shared(synth_cmd);
  synth_cmd->add_option("--n", synth_n, "number of images (even)")
      ->required();
  synth_cmd->add_option("--size", synth_size, "square image extent");
  synth_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every layer gradient");
  add_shared(gradcheck_cmd);
  gradcheck_cmd
      ->add_flag("--inject-error", inject_error,
                 "test hook: perturb one analytic gradient to confirm the "
                 "harness fails")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    RunConfig run;
    if (!config_path.empty()) apply_config_file(config_path, run);
    if (seed_flag) run.seed = *seed_flag;
    if (threshold_flag) run.threshold = *threshold_flag;

    if (train_cmd->parsed())
      return cmd_train(run, data_dir, out_dir, with_timing);
    if (eval_cmd->parsed())
      return cmd_eval(run, model_path, data_dir, split_name, out_dir);
    if (predict_cmd->parsed()) return cmd_predict(run, model_path, image_path);
    if (synth_cmd->parsed()) return cmd_synth(run, synth_n, synth_size, out_dir);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(run, inject_error);
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("dcnn");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dcnn
