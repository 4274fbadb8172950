#include "pdda/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace pdda {

namespace {

constexpr Method kMethods[] = {Method::source_only,        Method::diffpure_like,
                               Method::pdda_full,          Method::pdda_f1_only,
                               Method::pdda_f2_only,       Method::pdda_no_projection,
                               Method::pdda_no_schedule};

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

Tensor clamp_image(Tensor x) {
  for (auto& v : x.data) v = std::clamp(v, -1.0, 1.0);
  return x;
}

// First step at which a sampler configuration may guide; every step above it
// is the plain ancestral update.
std::size_t first_guided(const GuidanceConfig& cfg, std::size_t T) {
  return cfg.keepers.any() ? std::min(cfg.guidance_start(T), T) : 0;
}

// Unguided states x_t for the requested steps, produced by one plain run.
std::map<std::size_t, Tensor> unguided_states(const PddaSampler& plain, std::size_t T,
                                              std::vector<std::size_t> wanted) {
  std::sort(wanted.begin(), wanted.end(), std::greater<>());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  std::map<std::size_t, Tensor> states;
  Tensor x = plain.start();
  std::size_t t = T;
  for (std::size_t target : wanted) {
    x = plain.run(std::move(x), t, target);
    t = target;
    states.emplace(target, x);
  }
  return states;
}

}  // namespace

Method parse_method(const std::string& s) {
  for (auto m : kMethods)
    if (s == to_string(m)) return m;
  throw Error("unknown method '" + s + "'");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::source_only: return "source_only";
    case Method::diffpure_like: return "diffpure_like";
    case Method::pdda_full: return "pdda_full";
    case Method::pdda_f1_only: return "pdda_f1_only";
    case Method::pdda_f2_only: return "pdda_f2_only";
    case Method::pdda_no_projection: return "pdda_no_projection";
    case Method::pdda_no_schedule: return "pdda_no_schedule";
  }
  return "?";
}

std::vector<Method> all_methods() { return {std::begin(kMethods), std::end(kMethods)}; }

std::optional<GuidanceConfig> method_guidance(Method m, const GuidanceConfig& base) {
  GuidanceConfig cfg = base;
  switch (m) {
    case Method::source_only: return std::nullopt;
    case Method::diffpure_like: cfg.keepers = {false, false}; break;
    case Method::pdda_full: break;
    case Method::pdda_f1_only: cfg.keepers.modification = false; break;
    case Method::pdda_f2_only: cfg.keepers.semantic = false; break;
    case Method::pdda_no_projection: cfg.projection = ProjectionMode::off; break;
    case Method::pdda_no_schedule: cfg.s_fraction = 1.0; break;
  }
  return cfg;
}

std::uint64_t image_seed(std::uint64_t global_seed, std::size_t image_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(global_seed),
                    static_cast<std::uint32_t>(global_seed >> 32),
                    static_cast<std::uint32_t>(image_index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(image_index) >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::mt19937_64 corruption_stream(std::uint64_t global_seed, std::size_t image_index,
                                  const CorruptionSpec& spec) {
  // Sampler streams use 0..T; corruption streams live far above them.
  const std::uint64_t stream = (std::uint64_t{1} << 40) +
                               static_cast<std::uint64_t>(spec.kind) * 16 +
                               static_cast<std::uint64_t>(spec.severity);
  return noise_stream(image_seed(global_seed, image_index), stream);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t error_index = n;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        failed = true;
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

const EvalRow& EvalReport::row(Method m, CorruptionKind kind, int severity) const {
  for (const auto& r : rows) {
    if (r.method == m && r.corruption.kind == kind && r.corruption.severity == severity) return r;
  }
  throw Error(std::string("report has no row for ") + to_string(m) + "/" + to_string(kind) + "/" +
              std::to_string(severity));
}

double EvalReport::mean_accuracy(Method m) const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (r.method != m) continue;
    total += r.accuracy;
    ++count;
  }
  if (count == 0) throw Error(std::string("report has no rows for ") + to_string(m));
  return total / static_cast<double>(count);
}

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "method,corruption,severity,n,accuracy\n";
  for (const auto& r : report.rows) {
    os << to_string(r.method) << ',' << to_string(r.corruption.kind) << ','
       << r.corruption.severity << ',' << r.n << ',' << format_double(r.accuracy) << '\n';
  }
}

void write_report_metadata(std::ostream& os, const EvalReport& report) {
  for (const auto& [k, v] : report.metadata) os << k << '=' << v << '\n';
}

EvalReport evaluate(const Split& test, const EvalModels& models, const EvalOptions& opts) {
  if (opts.methods.empty()) throw Error("evaluate: no methods requested");
  if (opts.corruptions.empty()) throw Error("evaluate: no corruptions requested");
  if (opts.seeds.empty()) throw Error("evaluate: no seeds given");
  opts.guidance.validate();
  const std::size_t n_images = opts.limit == 0 ? test.size() : std::min(opts.limit, test.size());
  if (n_images == 0) throw Error("evaluate: empty test split");
  for (const auto& c : opts.corruptions) {
    if (c.severity != 0) corruption_parameter(c.kind, c.severity);
  }

  const std::size_t T = models.schedule.steps();
  const std::size_t n_methods = opts.methods.size();
  std::vector<std::optional<GuidanceConfig>> configs;
  for (auto m : opts.methods) configs.push_back(method_guidance(m, opts.guidance));

  const std::string started = timestamp();
  const std::size_t n_corr = opts.corruptions.size();
  const std::size_t units = opts.seeds.size() * n_corr * n_images;
  // correct[unit * n_methods + method]
  std::vector<std::uint8_t> correct(units * n_methods, 0);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;

  parallel_for(units, opts.jobs, [&](std::size_t unit) {
    const std::size_t image = unit % n_images;
    const std::size_t corr = (unit / n_images) % n_corr;
    const std::size_t seed_idx = unit / (n_images * n_corr);
    const CorruptionSpec& spec = opts.corruptions[corr];
    const std::uint64_t seed = opts.seeds[seed_idx];
    const std::size_t label = static_cast<std::size_t>(test.labels[image]);
    std::size_t method_idx = 0;
    try {
      auto rng = corruption_stream(seed, image, spec);
      const Tensor x_test = corrupt(test.images[image], spec, rng);
      const Probabilities p_test = models.classifier.predict(x_test);
      const std::uint64_t sample_seed = image_seed(seed, image);

      GuidanceConfig plain_cfg = opts.guidance;
      plain_cfg.keepers = {false, false};
      const PddaSampler plain(models.score, models.schedule, plain_cfg, x_test, sample_seed);
      std::vector<std::size_t> wanted;
      for (const auto& cfg : configs)
        if (cfg) wanted.push_back(first_guided(*cfg, T));
      const auto states = unguided_states(plain, T, wanted);

      for (method_idx = 0; method_idx < n_methods; ++method_idx) {
        const auto& cfg = configs[method_idx];
        Probabilities p = p_test;
        if (cfg) {
          const std::size_t from = first_guided(*cfg, T);
          const PddaSampler sampler(models.score, models.schedule, *cfg, x_test, sample_seed);
          const Tensor x0 = clamp_image(sampler.run(states.at(from), from, 0));
          p = ensemble_average(models.classifier.predict(x0), p_test);
        }
        correct[unit * n_methods + method_idx] = argmax(p) == label;
      }
    } catch (const Error& e) {
      std::string where = "evaluate: image " + std::to_string(image) + " (" +
                          to_string(spec.kind) + " severity " + std::to_string(spec.severity) +
                          ", seed " + std::to_string(seed);
      if (method_idx < n_methods) where += std::string(", ") + to_string(opts.methods[method_idx]);
      throw Error(where + "): " + e.what());
    }
    const std::size_t finished = done.fetch_add(1) + 1;
    if (opts.progress) {
      std::lock_guard lock(progress_mu);
      opts.progress(finished, units);
    }
  });

  EvalReport report;
  for (std::size_t m = 0; m < n_methods; ++m) {
    for (std::size_t c = 0; c < n_corr; ++c) {
      EvalRow row;
      row.method = opts.methods[m];
      row.corruption = opts.corruptions[c];
      for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n_images; ++i) {
          const std::size_t unit = (s * n_corr + c) * n_images + i;
          hits += correct[unit * n_methods + m];
        }
        row.correct += hits;
        row.seed_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n_images));
      }
      row.n = n_images * opts.seeds.size();
      row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.n);
      report.rows.push_back(std::move(row));
    }
  }

  std::string seeds;
  for (auto s : opts.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(opts.config_text);
  auto& md = report.metadata;
  md.emplace_back("seeds", seeds);
  md.emplace_back("config_hash", hash.str());
  md.emplace_back("images", std::to_string(n_images));
  md.emplace_back("steps", std::to_string(T));
  for (const auto& r : report.rows) {
    std::string accs;
    for (double a : r.seed_accuracy) accs += (accs.empty() ? "" : ",") + format_double(a);
    md.emplace_back(std::string("seed_accuracy.") + to_string(r.method) + "." +
                        to_string(r.corruption.kind) + "." + std::to_string(r.corruption.severity),
                    accs);
  }
  md.emplace_back("started", started);
  md.emplace_back("finished", timestamp());
  return report;
}

DiagnoseResult diagnose(const Split& test, const ScoreNetwork& score, const NoiseSchedule& sched,
                        const DiagnoseOptions& opts) {
  if (opts.modes.empty()) throw Error("diagnose: no projection modes requested");
  if (opts.trajectories == 0 || opts.trajectories > test.size()) {
    throw Error("diagnose: trajectories must lie in 1.." + std::to_string(test.size()));
  }
  GuidanceConfig base = opts.guidance;
  base.validate();
  if (!base.keepers.semantic || !base.keepers.modification) {
    throw Error("diagnose: both keepers must be enabled (keeper_mask=all)");
  }
  const std::size_t T = sched.steps();
  const std::size_t n_modes = opts.modes.size();
  std::vector<std::vector<std::vector<PhiSample>>> per(n_modes,
                                                       std::vector<std::vector<PhiSample>>(opts.trajectories));
  parallel_for(opts.trajectories, opts.jobs, [&](std::size_t i) {
    try {
      auto rng = corruption_stream(opts.seed, i, opts.corruption);
      const Tensor x_test = corrupt(test.images[i], opts.corruption, rng);
      const std::uint64_t sample_seed = image_seed(opts.seed, i);
      GuidanceConfig plain_cfg = base;
      plain_cfg.keepers = {false, false};
      const PddaSampler plain(score, sched, plain_cfg, x_test, sample_seed);
      const std::size_t from = first_guided(base, T);
      const Tensor state = unguided_states(plain, T, {from}).at(from);
      for (std::size_t m = 0; m < n_modes; ++m) {
        GuidanceConfig cfg = base;
        cfg.projection = opts.modes[m];
        const PddaSampler sampler(score, sched, cfg, x_test, sample_seed);
        Trajectory traj;
        sampler.run(state, from, 0, &traj);
        for (const auto& step : traj.steps) {
          if (step.phi) per[m][i].push_back({i, step.t, *step.phi});
        }
      }
    } catch (const Error& e) {
      throw Error("diagnose: trajectory " + std::to_string(i) + ": " + e.what());
    }
  });

  DiagnoseResult out;
  out.modes = opts.modes;
  for (std::size_t m = 0; m < n_modes; ++m) {
    std::vector<PhiSample> all;
    for (auto& v : per[m]) all.insert(all.end(), v.begin(), v.end());
    double total = 0.0;
    for (const auto& s : all) total += s.phi;
    out.mean_phi.push_back(all.empty() ? 0.0 : total / static_cast<double>(all.size()));
    out.samples.push_back(std::move(all));
  }
  return out;
}

void write_diagnose_csv(std::ostream& os, const DiagnoseResult& result) {
  os << "mode,trajectory,t,phi\n";
  for (std::size_t m = 0; m < result.modes.size(); ++m) {
    for (const auto& s : result.samples[m]) {
      os << to_string(result.modes[m]) << ',' << s.trajectory << ',' << s.t << ','
         << format_double(s.phi) << '\n';
    }
  }
}

}  // namespace pdda
