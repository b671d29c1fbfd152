// dfr: multimodal style transfer by deep feature rotation.
//
//   dfr run --content c.png --style s.png --weights vgg19.dfrw --out out/
//   dfr synth-weights --out random.dfrw [--seed N]
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dfr/errors.hpp"
#include "dfr/pipeline.hpp"
#include "dfr/vgg.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal neural style transfer with deep feature rotation"};
  app.require_subcommand(1);

  dfr::GridOptions grid;
  std::string weights_path;
  std::string init = "content";
  std::string apply_to = "both";
  std::string pool = "max";
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Stylize one content/style pair over an angle x lambda grid");
  run->add_option("--content", grid.content_path, "Content image (PNG/JPEG)")->required();
  run->add_option("--style", grid.style_path, "Style image (PNG/JPEG)")->required();
  run->add_option("--weights", weights_path, "DFRW weight file")->required();
  run->add_option("--out", grid.out_dir, "Output directory")->required();
  run->add_option("--angles", grid.angles, "Rotation angles (0,90,180,270)")
      ->delimiter(',')
      ->capture_default_str();
  run->add_option("--lambdas", grid.lambdas, "Rotation weights in [0,1]")
      ->delimiter(',')
      ->capture_default_str();
  run->add_option("--iterations", grid.iterations, "Adam iterations per job")
      ->capture_default_str();
  run->add_option("--width", grid.width, "Target width (snapped down to a multiple of 16)")
      ->capture_default_str();
  run->add_option("--height", grid.height, "Target height (snapped down to a multiple of 16)")
      ->capture_default_str();
  run->add_option("--alpha", grid.loss_weights.alpha, "Content weight")->capture_default_str();
  run->add_option("--beta", grid.loss_weights.beta, "Style weight")->capture_default_str();
  run->add_option("--lr", grid.adam.lr, "Adam learning rate")->capture_default_str();
  run->add_option("--init", init, "Initial image: content|noise")
      ->check(CLI::IsMember({"content", "noise"}))
      ->capture_default_str();
  run->add_option("--seed", grid.seed, "Seed for noise initialization")->capture_default_str();
  run->add_option("--apply-to", apply_to, "Rotate targets for both|style_only|content_only")
      ->check(CLI::IsMember({"both", "style_only", "content_only"}))
      ->capture_default_str();
  run->add_option("--parallelism", grid.parallelism, "Concurrent jobs")->capture_default_str();
  run->add_option("--pool", pool, "Pooling: max|average")
      ->check(CLI::IsMember({"max", "average"}))
      ->capture_default_str();
  run->add_option("--content-layer", grid.selection.content_layer)->capture_default_str();
  run->add_option("--style-layers", grid.selection.style_layers)->delimiter(',');
  run->add_option("--style-layer-weights", grid.selection.style_layer_weights)->delimiter(',');
  run->add_option("--sample-every", grid.sample_every, "Loss curve sampling interval")
      ->capture_default_str();
  run->add_flag("--quiet", quiet, "Only log warnings and errors");

  std::string synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand(
      "synth-weights", "Write He-initialised random VGG19 weights (for smoke tests)");
  synth->add_option("--out", synth_out, "Output DFRW file")->required();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) {
      dfr::save_weights(dfr::synthetic_vgg_weights(synth_seed), synth_out);
      return 0;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);
    if (grid.selection.style_layer_weights.size() != grid.selection.style_layers.size() &&
        run->count("--style-layer-weights") == 0) {
      grid.selection.style_layer_weights.assign(grid.selection.style_layers.size(), 1.0f);
    }
    grid.init = dfr::init_mode_from_string(init);
    grid.apply_to = dfr::apply_to_from_string(apply_to);
    grid.pool = pool == "max" ? dfr::PoolMode::kMax : dfr::PoolMode::kAverage;

    const dfr::VggWeights weights = dfr::load_weights(weights_path);
    const dfr::GridSummary summary = dfr::run_grid(grid, weights);
    std::cout << "wrote " << summary.jobs.size() << " image(s) and "
              << summary.manifest_file.string() << " in " << summary.wall_time_s << " s\n";
    return 0;
  } catch (const dfr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const dfr::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const dfr::Error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
}
