#pragma once

// End-to-end stylization: one optimization job per rotation config, and the
// (angle x lambda) grid runner behind the CLI.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfr/adam.hpp"
#include "dfr/image.hpp"
#include "dfr/losses.hpp"
#include "dfr/rotation.hpp"
#include "dfr/vgg.hpp"

namespace dfr {

enum class InitMode { kContent, kNoise };

InitMode init_mode_from_string(std::string_view s);
std::string_view to_string(InitMode m);

struct StylizationJob {
  std::string id = "job";
  Image content;
  Image style;
  RotationConfig rotation;
  LossWeights loss_weights;
  LayerSelection selection;
  AdamOptions adam;
  PoolMode pool = PoolMode::kMax;
  int iterations = 3000;
  std::uint64_t seed = 0;  // only used by InitMode::kNoise
  InitMode init = InitMode::kContent;
  int sample_every = 10;
};

struct LossSample {
  int iteration = 0;
  LossReport report;
};

struct JobResult {
  Image output;
  // Iteration 0, every sample_every iterations, and the final image
  // (iteration == iterations).
  std::vector<LossSample> loss_curve;
  double wall_time_s = 0.0;
  nlohmann::json config_echo;
};

// Throws the constituent error type with the job id and iteration prepended;
// NumericError when the loss becomes non-finite.
JobResult run_job(const StylizationJob& job, const VggWeights& weights);

// Starting point of the optimization in preprocessed space.
Tensor4 initial_image(const StylizationJob& job, const VggWeights& weights);

struct GridOptions {
  std::filesystem::path content_path;
  std::filesystem::path style_path;
  std::filesystem::path out_dir;
  std::vector<int> angles{0, 90, 180, 270};
  std::vector<float> lambdas{1.0f};
  int iterations = 3000;
  int width = 412;
  int height = 522;
  LossWeights loss_weights;
  AdamOptions adam;
  InitMode init = InitMode::kContent;
  std::uint64_t seed = 0;
  ApplyTo apply_to = ApplyTo::kBoth;
  int parallelism = 1;
  LayerSelection selection;
  PoolMode pool = PoolMode::kMax;
  int sample_every = 10;
};

struct GridJobSummary {
  int angle = 0;
  float lambda = 0.0f;
  std::filesystem::path image_file;
  std::filesystem::path curve_file;
  double wall_time_s = 0.0;
  float final_loss = 0.0f;
};

struct GridSummary {
  std::vector<GridJobSummary> jobs;  // angle-major, in the requested order
  double wall_time_s = 0.0;
  std::filesystem::path manifest_file;
};

// Shortest decimal form with at least one fractional digit ("1.0", "0.2").
std::string format_lambda(float lambda);

// {content}_{style}_a{angle}_l{lambda}
std::string job_stem(const std::string& content_stem, const std::string& style_stem,
                     int angle, float lambda);

// Writes the per-job CSV "iter,total,content,style".
void write_loss_curve(const std::vector<LossSample>& curve,
                      const std::filesystem::path& path);

// Runs |angles| * |lambdas| jobs on a pool of `parallelism` workers. All
// configuration and output-directory checks happen before any job starts.
GridSummary run_grid(const GridOptions& options, const VggWeights& weights);

}  // namespace dfr
