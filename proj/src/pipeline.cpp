#include "dfr/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dfr/errors.hpp"

namespace dfr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Re-throws the in-flight dfr error as the same type with context prepended.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const WeightsError& e) {
    throw WeightsError(context + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const InternalError& e) {
    throw InternalError(context + ": " + e.what());
  }
}

bool report_finite(const LossReport& r) {
  return std::isfinite(r.total) && std::isfinite(r.content) && std::isfinite(r.style);
}

// Shortest round-trip decimal of a float, widened without float noise.
double json_float(float v) { return std::stod(fmt::format("{}", v)); }

nlohmann::json weights_json(const std::vector<float>& w) {
  auto out = nlohmann::json::array();
  for (float v : w) out.push_back(json_float(v));
  return out;
}

nlohmann::json selection_json(const LayerSelection& s) {
  return {{"content_layer", s.content_layer},
          {"style_layers", s.style_layers},
          {"style_layer_weights", weights_json(s.style_layer_weights)}};
}

double lambda_json(float lambda) { return json_float(lambda); }

nlohmann::json job_echo(const StylizationJob& job) {
  return {{"id", job.id},
          {"angle", degrees(job.rotation.angle())},
          {"lambda", lambda_json(job.rotation.lambda())},
          {"apply_to", to_string(job.rotation.apply_to())},
          {"alpha", json_float(job.loss_weights.alpha)},
          {"beta", json_float(job.loss_weights.beta)},
          {"lr", json_float(job.adam.lr)},
          {"beta1", json_float(job.adam.beta1)},
          {"beta2", json_float(job.adam.beta2)},
          {"eps", json_float(job.adam.eps)},
          {"pool", job.pool == PoolMode::kMax ? "max" : "average"},
          {"iterations", job.iterations},
          {"seed", job.seed},
          {"init", to_string(job.init)},
          {"sample_every", job.sample_every},
          {"width", job.content.width},
          {"height", job.content.height},
          {"selection", selection_json(job.selection)}};
}

void check_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError(fmt::format("output directory {} cannot be created: {}", dir.string(),
                              ec ? ec.message() : "not a directory"));
  }
  const auto probe = dir / ".dfr_write_probe";
  {
    std::ofstream f(probe);
    if (!f || !(f << "probe")) {
      throw IoError(fmt::format("output directory {} is not writable", dir.string()));
    }
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace

InitMode init_mode_from_string(std::string_view s) {
  if (s == "content") return InitMode::kContent;
  if (s == "noise") return InitMode::kNoise;
  throw ConfigError(fmt::format("init must be content or noise; got {}", s));
}

std::string_view to_string(InitMode m) {
  return m == InitMode::kContent ? "content" : "noise";
}

Tensor4 initial_image(const StylizationJob& job, const VggWeights& weights) {
  if (job.init == InitMode::kContent) return preprocess(job.content, weights);
  Image noise{job.content.width, job.content.height, 3, {}};
  noise.pixels.resize(job.content.pixels.size());
  std::mt19937_64 rng(job.seed);
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& p : noise.pixels) p = static_cast<std::uint8_t>(dist(rng));
  return preprocess(noise, weights);
}

JobResult run_job(const StylizationJob& job, const VggWeights& weights) {
  const auto start = Clock::now();
  int iteration = -1;
  try {
    if (job.iterations < 1) {
      throw ConfigError(fmt::format("iterations must be >= 1, got {}", job.iterations));
    }
    if (job.sample_every < 1) {
      throw ConfigError(fmt::format("sample_every must be >= 1, got {}", job.sample_every));
    }
    job.selection.validate();
    job.loss_weights.validate();

    const Tensor4 content = preprocess(job.content, weights);
    const Tensor4 style = preprocess(job.style, weights);
    const FeatureSet content_feats = extract_features(content, weights, job.selection, job.pool);
    const FeatureSet style_feats = extract_features(style, weights, job.selection, job.pool);
    const LossTargets targets =
        build_loss_targets(content_feats.features, style_feats.features, job.rotation);
    const GramMap grams = target_grams(targets.style, job.selection);

    Tensor4 x = initial_image(job, weights);
    Adam adam(x.shape(), job.adam);
    JobResult result;

    auto evaluate = [&](int it, bool record) {
      iteration = it;
      FeatureSet feats = extract_features(x, weights, job.selection, job.pool);
      TotalLoss loss =
          total_loss(feats.features, targets.content, grams, job.loss_weights, job.selection);
      if (!report_finite(loss.report)) {
        throw NumericError(fmt::format("non-finite loss (total {})", loss.report.total));
      }
      if (record) result.loss_curve.push_back({it, loss.report});
      return std::pair{std::move(feats), std::move(loss)};
    };

    for (int it = 0; it < job.iterations; ++it) {
      auto [feats, loss] = evaluate(it, it % job.sample_every == 0);
      const Tensor4 grad = backward_to_image(loss.grads, feats.tape, weights);
      adam.step(x, grad);
    }
    evaluate(job.iterations, true);
    iteration = -1;

    result.output = postprocess(x, weights);
    result.wall_time_s = seconds_since(start);
    result.config_echo = job_echo(job);
    return result;
  } catch (const Error&) {
    rethrow_with_context(iteration >= 0
                             ? fmt::format("job {} (iteration {})", job.id, iteration)
                             : fmt::format("job {}", job.id));
  }
}

std::string format_lambda(float lambda) {
  std::string s = fmt::format("{}", lambda);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string job_stem(const std::string& content_stem, const std::string& style_stem,
                     int angle, float lambda) {
  return fmt::format("{}_{}_a{}_l{}", content_stem, style_stem, angle, format_lambda(lambda));
}

void write_loss_curve(const std::vector<LossSample>& curve,
                      const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
  f << "iter,total,content,style\n";
  for (const auto& s : curve) {
    f << fmt::format("{},{},{},{}\n", s.iteration, s.report.total, s.report.content,
                     s.report.style);
  }
  if (!f) throw IoError(fmt::format("failed writing {}", path.string()));
}

GridSummary run_grid(const GridOptions& options, const VggWeights& weights) {
  const auto start = Clock::now();
  if (options.angles.empty() || options.lambdas.empty()) {
    throw ConfigError("angle and lambda lists must be non-empty");
  }
  if (options.parallelism < 1) {
    throw ConfigError(fmt::format("parallelism must be >= 1, got {}", options.parallelism));
  }
  if (options.iterations < 1) {
    throw ConfigError(fmt::format("iterations must be >= 1, got {}", options.iterations));
  }
  options.selection.validate();
  options.loss_weights.validate();

  std::vector<StylizationJob> jobs;
  for (int angle : options.angles) {
    for (float lambda : options.lambdas) {
      StylizationJob job;
      job.rotation = RotationConfig(angle_from_degrees(angle), lambda, options.apply_to);
      job.loss_weights = options.loss_weights;
      job.selection = options.selection;
      job.adam = options.adam;
      job.pool = options.pool;
      job.iterations = options.iterations;
      job.seed = options.seed;
      job.init = options.init;
      job.sample_every = options.sample_every;
      jobs.push_back(std::move(job));
    }
  }
  // Validates lr/eps before touching the filesystem.
  Adam probe(Shape4{}, options.adam);

  check_writable_dir(options.out_dir);

  const Image content = load_and_resize(options.content_path, options.width, options.height);
  const Image style = load_and_resize(options.style_path, options.width, options.height);
  const std::string content_stem = options.content_path.stem().string();
  const std::string style_stem = options.style_path.stem().string();

  GridSummary summary;
  summary.jobs.resize(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const int angle = degrees(jobs[i].rotation.angle());
    const float lambda = jobs[i].rotation.lambda();
    const std::string stem = job_stem(content_stem, style_stem, angle, lambda);
    jobs[i].id = stem;
    jobs[i].content = content;
    jobs[i].style = style;
    summary.jobs[i].angle = angle;
    summary.jobs[i].lambda = lambda;
    summary.jobs[i].image_file = options.out_dir / (stem + ".png");
    summary.jobs[i].curve_file = options.out_dir / (stem + ".csv");
  }

  std::vector<std::exception_ptr> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      if (abort) return;
      try {
        spdlog::info("starting {}", jobs[i].id);
        JobResult result = run_job(jobs[i], weights);
        save_png(result.output, summary.jobs[i].image_file);
        write_loss_curve(result.loss_curve, summary.jobs[i].curve_file);
        summary.jobs[i].wall_time_s = result.wall_time_s;
        summary.jobs[i].final_loss = result.loss_curve.back().report.total;
        spdlog::info("finished {} in {:.2f}s, final loss {}", jobs[i].id, result.wall_time_s,
                     summary.jobs[i].final_loss);
      } catch (...) {
        failures[i] = std::current_exception();
        abort = true;
      }
    }
  };
  {
    const auto workers = std::min<std::size_t>(options.parallelism, jobs.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  summary.wall_time_s = seconds_since(start);

  nlohmann::json manifest;
  manifest["jobs"] = nlohmann::json::array();
  for (const auto& j : summary.jobs) {
    manifest["jobs"].push_back({{"angle", j.angle},
                                {"lambda", lambda_json(j.lambda)},
                                {"file", j.image_file.filename().string()},
                                {"loss_curve", j.curve_file.filename().string()},
                                {"wall_time_s", j.wall_time_s},
                                {"final_loss", json_float(j.final_loss)}});
  }
  std::vector<double> lambdas;
  for (float l : options.lambdas) lambdas.push_back(lambda_json(l));
  manifest["config"] = {{"content", options.content_path.string()},
                        {"style", options.style_path.string()},
                        {"angles", options.angles},
                        {"lambdas", lambdas},
                        {"iterations", options.iterations},
                        {"requested_width", options.width},
                        {"requested_height", options.height},
                        {"width", content.width},
                        {"height", content.height},
                        {"alpha", json_float(options.loss_weights.alpha)},
                        {"beta", json_float(options.loss_weights.beta)},
                        {"lr", json_float(options.adam.lr)},
                        {"beta1", json_float(options.adam.beta1)},
                        {"beta2", json_float(options.adam.beta2)},
                        {"eps", json_float(options.adam.eps)},
                        {"init", to_string(options.init)},
                        {"seed", options.seed},
                        {"apply_to", to_string(options.apply_to)},
                        {"parallelism", options.parallelism},
                        {"pool", options.pool == PoolMode::kMax ? "max" : "average"},
                        {"sample_every", options.sample_every},
                        {"selection", selection_json(options.selection)},
                        {"weights_checksum", weights.source_checksum()}};
  manifest["wall_time_s"] = summary.wall_time_s;

  summary.manifest_file = options.out_dir / "manifest.json";
  std::ofstream f(summary.manifest_file, std::ios::trunc);
  if (!f || !(f << manifest.dump(2) << '\n')) {
    throw IoError(fmt::format("cannot write {}", summary.manifest_file.string()));
  }
  return summary;
}

}  // namespace dfr
