#include "cat/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>

#include "cat/checks.hpp"
#include "cat/complexity.hpp"
#include "cat/harness.hpp"
#include "cat/model_io.hpp"

namespace cat {
namespace {

struct Options {
  std::string config, weights, input, output, ref, test, filter;
  int height = 128, width = 128, steps = 500, crop = 0;
  std::uint64_t seed = 0;
  bool ensemble = false, y = false;
};

int analyze(const Options& o, std::ostream& out) {
  const ModelConfig config = load_config(o.config);
  out << report_render(model_flops(config, o.height, o.width));
  return 0;
}

int init(const Options& o, std::ostream& out) {
  const ModelConfig config = load_config(o.config);
  const ParamStore store = init_params(config, o.seed);
  save_weights(store, o.output);
  out << "wrote " << store.element_count() << " parameters to " << o.output << '\n';
  return 0;
}

int infer(const Options& o, std::ostream& out) {
  const ModelConfig config = load_config(o.config);
  const ParamStore store = load_weights_for(o.weights, config);
  ImageU8 img = load_image(o.input);
  if (img.channels == 3 && config.in_channels == 1) img = quantize(rgb_to_y(img));
  if (img.channels != config.in_channels) {
    throw ConfigError("input has " + std::to_string(img.channels) + " channels, config expects " +
                      std::to_string(config.in_channels));
  }
  const Restorer model = [&](const Tensor<float>& x) { return run_model(x, store, config); };
  const ImageU8 result = o.ensemble ? self_ensemble_infer(model, img) : infer_image(model, img);
  save_image(result, o.output);
  out << "wrote " << result.width << "x" << result.height << " image to " << o.output << '\n';
  return 0;
}

int overfit(const Options& o, std::ostream& out) {
  OverfitOptions opt;
  opt.steps = o.steps;
  opt.seed = o.seed;
  const OverfitResult r = run_overfit(opt, [&](int step, double loss) {
    char line[64];
    std::snprintf(line, sizeof line, "step %4d  loss %.6f\n", step, loss);
    out << line;
  });
  char line[96];
  std::snprintf(line, sizeof line, "reduction %.2f%% (%s)\n", 100 * r.reduction, r.passed ? "ok" : "below 90%");
  out << line;
  return r.passed ? 0 : 1;
}

int metrics(const Options& o, std::ostream& out) {
  const ImageU8 a = load_image(o.ref), b = load_image(o.test);
  const ChannelMode mode = o.y ? ChannelMode::Y : ChannelMode::RGB;
  char line[64];
  std::snprintf(line, sizeof line, "PSNR=%.4f SSIM=%.4f\n", psnr(a, b, mode, o.crop),
                ssim(a, b, mode, o.crop));
  out << line;
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-aggregation transformer restoration toolkit", "catir"};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) { return "catir: " + std::string(e.what()) + "\n"; });
  Options o;

  auto* an = app.add_subcommand("analyze", "FLOP and parameter report for a config");
  an->add_option("--config", o.config, "model config file")->required()->check(CLI::ExistingFile);
  an->add_option("--height", o.height, "input height")->check(CLI::PositiveNumber);
  an->add_option("--width", o.width, "input width")->check(CLI::PositiveNumber);

  auto* st = app.add_subcommand("selftest", "run the built-in acceptance checks");
  st->add_option("--filter", o.filter, "only checks whose name contains this");

  auto* in = app.add_subcommand("init", "write freshly initialised weights");
  in->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  in->add_option("--output", o.output)->required();
  in->add_option("--seed", o.seed);

  auto* inf = app.add_subcommand("infer", "restore one image");
  inf->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  inf->add_option("--weights", o.weights)->required()->check(CLI::ExistingFile);
  inf->add_option("--input", o.input)->required()->check(CLI::ExistingFile);
  inf->add_option("--output", o.output)->required();
  inf->add_flag("--ensemble", o.ensemble, "average over the 8 flips/rotations");

  auto* ov = app.add_subcommand("overfit", "train the tiny model on one patch");
  ov->add_option("--steps", o.steps)->check(CLI::PositiveNumber);
  ov->add_option("--seed", o.seed);

  auto* me = app.add_subcommand("metrics", "PSNR and SSIM between two images");
  me->add_option("--ref", o.ref)->required()->check(CLI::ExistingFile);
  me->add_option("--test", o.test)->required()->check(CLI::ExistingFile);
  me->add_flag("--y", o.y, "compare the BT.601 luma channel");
  me->add_option("--crop", o.crop, "pixels trimmed from each border")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*an) return analyze(o, out);
    if (*st) return checks::run_checks(o.filter, out) ? 0 : 1;
    if (*in) return init(o, out);
    if (*inf) return infer(o, out);
    if (*ov) return overfit(o, out);
    if (*me) return metrics(o, out);
  } catch (const std::exception& e) {
    err << "catir: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace cat
