#include "commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pdda/checkpoint.hpp"
#include "pdda/runtime.hpp"

namespace pdda::cli {

namespace fs = std::filesystem;

namespace {

const char* describe(const std::string& cmd) {
  if (cmd == "gen-data") return "render the toy dataset and its manifest";
  if (cmd == "train-score") return "train the score network by denoising score matching";
  if (cmd == "train-classifier") return "train the source classifier";
  if (cmd == "purify") return "purify one image and write its trajectory";
  if (cmd == "evaluate") return "accuracy of every method on corrupted test images";
  if (cmd == "diagnose") return "per-step gradient magnitude similarity per projection mode";
  return "";
}

bool requires_seed(const std::string& cmd) {
  return cmd == "train-score" || cmd == "train-classifier" || cmd == "evaluate";
}

fs::path out_dir(const RunConfig& cfg) { return cfg.get("out"); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read back '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  {
    std::ofstream o(p, std::ios::trunc);
    if (!o) throw Error("cannot open '" + p.string() + "' for writing");
    o << text;
    if (!o) throw Error("failed writing '" + p.string() + "'");
  }
  if (read_text(p) != text) throw Error("'" + p.string() + "' did not read back identically");
}

void save_validated(const fs::path& p, const NamedArrays& arrays) {
  save_checkpoint(p, arrays);
  const NamedArrays back = load_checkpoint(p);
  bool same = back.size() == arrays.size();
  for (std::size_t i = 0; same && i < back.size(); ++i) {
    same = back[i].first == arrays[i].first && back[i].second.shape == arrays[i].second.shape &&
           back[i].second.data == arrays[i].second.data;
  }
  if (!same) throw Error("'" + p.string() + "' did not read back identically");
}

void save_pgm_validated(const fs::path& p, const Tensor& image) {
  const auto bytes = encode_pgm(image);
  write_file(p, bytes);
  if (read_file(p) != bytes) throw Error("'" + p.string() + "' did not read back identically");
}

NamedArrays load_required(const RunConfig& cfg, const std::string& key, const char* what) {
  const fs::path p = resolve_path(cfg, key);
  if (!fs::exists(p)) {
    throw Error(std::string("missing ") + what + " '" + p.string() + "' (config key '" + key + "')");
  }
  try {
    return load_checkpoint(p);
  } catch (const Error& e) {
    throw Error(std::string("config key '") + key + "': " + e.what());
  }
}

ToyDataset load_dataset(const RunConfig& cfg) {
  return dataset_from_arrays(load_required(cfg, "dataset", "dataset"));
}

ScoreNetwork load_score(const RunConfig& cfg) {
  NamedArrays arrays = load_required(cfg, "score_checkpoint", "score checkpoint");
  try {
    return ScoreNetwork::from_arrays(std::move(arrays));
  } catch (const Error& e) {
    throw Error(std::string("config key 'score_checkpoint': ") + e.what());
  }
}

Classifier load_classifier(const RunConfig& cfg) {
  NamedArrays arrays = load_required(cfg, "classifier_checkpoint", "classifier checkpoint");
  try {
    return Classifier::from_arrays(std::move(arrays));
  } catch (const Error& e) {
    throw Error(std::string("config key 'classifier_checkpoint': ") + e.what());
  }
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) os << i + 1 << ',' << losses[i] << '\n';
  return os.str();
}

constexpr std::uint64_t kTrainStream = 0x9e3779b97f4a7c15ull;

void gen_data(const RunConfig& cfg, std::ostream& out) {
  const ToyDataset ds = generate_dataset(cfg.count("seed"), dataset_sizes(cfg));
  const fs::path path = resolve_path(cfg, "dataset");
  save_validated(path, dataset_to_arrays(ds));
  std::ostringstream m;
  m << "seed=" << ds.seed << '\n';
  for (const Split* s : {&ds.train, &ds.val, &ds.test}) {
    const auto h = s->label_histogram();
    m << to_string(s->kind) << ".size=" << s->size() << '\n' << to_string(s->kind) << ".labels=";
    for (std::size_t k = 0; k < kNumClasses; ++k) m << (k ? "," : "") << h[k];
    m << '\n';
  }
  m << "classes=disk,hollow_square,cross,diagonal_stripes\n";
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(std::string(
      reinterpret_cast<const char*>(read_file(path).data()), fs::file_size(path)));
  m << "file=" << path.filename().string() << "\nfile_hash=" << hash.str() << '\n';
  write_text(out_dir(cfg) / "manifest.txt", m.str());
  out << "wrote " << path.string() << " (" << ds.train.size() << "/" << ds.val.size() << "/"
      << ds.test.size() << " images)\n";
}

void train_score(const RunConfig& cfg, std::ostream& out) {
  const ToyDataset ds = load_dataset(cfg);
  const NoiseSchedule sched = schedule(cfg);
  TrainOptions opts = score_train_options(cfg);
  ScoreNetwork net(opts.seed);
  opts.seed ^= kTrainStream;
  const TrainingLog log = train(net, ds.train.images, sched, opts);
  save_validated(resolve_path(cfg, "score_checkpoint"), net.parameters());
  write_text(out_dir(cfg) / "score_log.csv", loss_csv(log.epoch_loss));
  out << "score network trained; final epoch loss "
      << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()) << '\n';
}

void train_classifier_cmd(const RunConfig& cfg, std::ostream& out) {
  const ToyDataset ds = load_dataset(cfg);
  ClassifierTrainOptions opts = classifier_train_options(cfg);
  Classifier clf(opts.seed);
  opts.seed ^= kTrainStream;
  const ClassifierLog log = train_classifier(clf, ds, opts);
  save_validated(resolve_path(cfg, "classifier_checkpoint"), clf.parameters());
  write_text(out_dir(cfg) / "classifier_log.csv", loss_csv(log.epoch_loss));
  std::ostringstream m;
  m << std::setprecision(17) << "val_accuracy=" << log.val_accuracy
    << "\ntest_accuracy=" << log.test_accuracy << '\n';
  write_text(out_dir(cfg) / "classifier_metrics.txt", m.str());
  out << "classifier trained; clean test accuracy " << log.test_accuracy << '\n';
}

void purify(const RunConfig& cfg, std::ostream& out) {
  const ScoreNetwork net = load_score(cfg);
  const NoiseSchedule sched = schedule(cfg);
  const GuidanceConfig g = guidance_config(cfg);
  const std::uint64_t seed = cfg.count("seed");
  const std::size_t index = cfg.count("index");
  Tensor x_test;
  if (!cfg.get("input").empty()) {
    try {
      x_test = read_pgm(cfg.get("input"));
    } catch (const Error& e) {
      throw Error(std::string("config key 'input': ") + e.what());
    }
    if (x_test.shape != Shape{1, kImageSide, kImageSide}) {
      throw Error("config key 'input': expected a 16x16 image, got " + to_string(x_test.shape));
    }
  } else {
    const ToyDataset ds = load_dataset(cfg);
    if (index >= ds.test.size()) {
      throw Error("config key 'index': " + std::to_string(index) + " is outside the test split (" +
                  std::to_string(ds.test.size()) + " images)");
    }
    const CorruptionSpec spec{parse_corruption_kind(cfg.get("corruption")),
                              static_cast<int>(cfg.count("severity"))};
    auto rng = corruption_stream(seed, index, spec);
    x_test = corrupt(ds.test.images[index], spec, rng);
  }
  const SampleResult r = sample_pdda(x_test, net, sched, g, image_seed(seed, index));
  save_pgm_validated(out_dir(cfg) / "input.pgm", x_test);
  save_pgm_validated(out_dir(cfg) / "purified.pgm", r.x0);
  std::ostringstream traj;
  write_trajectory_csv(traj, r.trajectory);
  write_text(out_dir(cfg) / "trajectory.csv", traj.str());
  out << "wrote " << (out_dir(cfg) / "purified.pgm").string() << '\n';
}

void evaluate_cmd(const RunConfig& cfg, std::size_t jobs, std::ostream& out, std::ostream& err) {
  const ToyDataset ds = load_dataset(cfg);
  const ScoreNetwork net = load_score(cfg);
  const Classifier clf = load_classifier(cfg);
  const NoiseSchedule sched = schedule(cfg);
  EvalOptions opts;
  opts.methods = methods(cfg);
  opts.corruptions = corruptions(cfg);
  opts.guidance = guidance_config(cfg);
  opts.jobs = jobs;
  opts.limit = cfg.count("eval_limit");
  opts.config_text = cfg.to_text();
  const std::uint64_t seed = cfg.count("seed");
  const std::uint64_t n_seeds = cfg.count("num_seeds");
  if (n_seeds == 0) throw Error("config key 'num_seeds' must be positive");
  for (std::uint64_t s = 0; s < n_seeds; ++s) opts.seeds.push_back(seed + s);
  std::size_t last_pct = 0;
  opts.progress = [&](std::size_t done, std::size_t total) {
    const std::size_t pct = done * 100 / total;
    if (pct >= last_pct + 5 || done == total) {
      last_pct = pct;
      err << "evaluate: " << done << "/" << total << " units\n";
    }
  };
  const EvalReport report = evaluate(ds.test, {net, clf, sched}, opts);
  std::ostringstream csv, meta;
  write_report_csv(csv, report);
  write_report_metadata(meta, report);
  write_text(out_dir(cfg) / "report.csv", csv.str());
  write_text(out_dir(cfg) / "report.meta", meta.str());
  out << csv.str();
}

void diagnose_cmd(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
  const ToyDataset ds = load_dataset(cfg);
  const ScoreNetwork net = load_score(cfg);
  const NoiseSchedule sched = schedule(cfg);
  DiagnoseOptions opts;
  opts.modes = diagnose_modes(cfg);
  opts.trajectories = cfg.count("diagnose_trajectories");
  opts.corruption = {parse_corruption_kind(cfg.get("corruption")),
                     static_cast<int>(cfg.count("severity"))};
  opts.seed = cfg.count("seed");
  opts.guidance = guidance_config(cfg);
  opts.jobs = jobs;
  const DiagnoseResult r = diagnose(ds.test, net, sched, opts);
  std::ostringstream csv, summary;
  write_diagnose_csv(csv, r);
  summary << "mode,mean_phi,samples\n" << std::setprecision(17);
  for (std::size_t m = 0; m < r.modes.size(); ++m) {
    summary << to_string(r.modes[m]) << ',' << r.mean_phi[m] << ',' << r.samples[m].size() << '\n';
  }
  write_text(out_dir(cfg) / "diagnose.csv", csv.str());
  write_text(out_dir(cfg) / "diagnose_summary.csv", summary.str());
  out << summary.str();
}

}  // namespace

RunConfig resolve(const Invocation& inv) {
  RunConfig cfg;
  if (const char* env = std::getenv("PDDA_OUT"); env && *env) cfg.set("out", env);
  if (inv.config_path) cfg.apply_file(*inv.config_path);
  for (const auto& s : inv.sets) cfg.set(std::string_view(s));
  if (inv.seed) cfg.set("seed", std::to_string(*inv.seed));
  if (inv.out) cfg.set("out", *inv.out);
  if (inv.input) cfg.set("input", *inv.input);
  if (inv.index) cfg.set("index", std::to_string(*inv.index));
  if (requires_seed(inv.command) && !inv.seed) {
    throw Error("--seed is required for " + inv.command);
  }
  return cfg;
}

void run_command(const Invocation& inv, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.get("out").empty()) throw Error("config key 'out' is empty");
  fs::create_directories(out_dir(cfg));
  write_text(out_dir(cfg) / "config.txt", cfg.to_text());
  const std::string& c = inv.command;
  if (c == "gen-data") return gen_data(cfg, out);
  if (c == "train-score") return train_score(cfg, out);
  if (c == "train-classifier") return train_classifier_cmd(cfg, out);
  if (c == "purify") return purify(cfg, out);
  if (c == "evaluate") return evaluate_cmd(cfg, inv.jobs, out, err);
  if (c == "diagnose") return diagnose_cmd(cfg, inv.jobs, out);
  throw Error("unknown command '" + c + "'");
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Principle-guided diffusion test-time adaptation on a toy corruption benchmark"};
  app.name("pdda");
  app.require_subcommand(1);
  Invocation inv;
  for (const auto& name : kCommands) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", inv.config_path, "key=value config file");
    sub->add_option("--set", inv.sets, "override one key (K=V), repeatable");
    sub->add_option("--seed", inv.seed, "base seed (required for train-* and evaluate)");
    sub->add_option("--jobs", inv.jobs, "worker threads, 0 = all cores")->capture_default_str();
    sub->add_option("--out", inv.out, "output directory (default: $PDDA_OUT, then key 'out')");
    if (name == "purify") {
      sub->add_option("--input", inv.input, "input PGM image");
      sub->add_option("--index", inv.index, "test image index");
    }
    sub->callback([&inv, sub] { inv.command = sub->get_name(); });
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "pdda: " << e.what() << '\n';
    return 2;
  }
  try {
    const RunConfig cfg = resolve(inv);
    run_command(inv, cfg, out, err);
  } catch (const std::exception& e) {
    err << "pdda " << inv.command << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  tune_allocator();
  return main_entry(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace pdda::cli
