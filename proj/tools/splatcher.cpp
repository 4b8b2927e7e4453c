// splatcher command-line front end.
//
//   splatcher render   <params-file> [key=value ...]
//   splatcher animate  <params-file> <scene-file> [key=value ...]
//   splatcher bench    <params-file> [--tiles a,b,c] [--workers x,y,z] [key=value ...]
//   splatcher mkfixture <out> --count N --seed S [--distribution gaussian|uniform]
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 internal error.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "splatcher/splatcher.hpp"

namespace {

using namespace splatcher;

FrameConfig load_base(const std::string& params, const std::vector<std::string>& overrides) {
  FrameConfig cfg = default_config();
  load_params(cfg, params);
  apply_overrides(cfg, overrides);
  return cfg;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (const auto& tok : split_value(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": `" + tok + "` is not an integer");
    }
    if (out.back() < 1) throw ConfigError(std::string(what) + " values must be >= 1");
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

void report(const PipelineStats& s, std::ostream& os) {
  os << "particles " << s.particles << ", chunks " << s.chunks << ", frames " << s.frames << '\n';
  for (std::size_t k = 0; k < kKernelNames.size(); ++k) {
    os << "  " << kKernelNames[k] << ": " << s.seconds[k] << " s\n";
  }
  os << "  read overlap: " << s.overlap_ratio() << ", log-clamped q: " << s.log_clamped << '\n';
  os << "  pool allocs " << s.allocator.allocs << ", fallbacks " << s.allocator.fallbacks << ", peak bytes "
     << s.allocator.peak_usage << '\n';
}

int cmd_render(const std::string& params, const std::vector<std::string>& overrides) {
  const FrameConfig cfg = load_base(params, overrides);
  validate(cfg);
  DatasetHandle handle = open_dataset(cfg.input);
  const QuantityScale scale = range_pass(handle, cfg);
  FrameRenderer renderer(cfg);
  const PipelineStats stats = render_to_file(renderer, cfg, handle, scale, cfg.output);
  if (!cfg.timing.empty()) write_timing_csv(cfg.timing, std::span<const PipelineStats>(&stats, 1));
  std::cerr << "wrote " << cfg.output << '\n';
  report(stats, std::cerr);
  return 0;
}

int cmd_animate(const std::string& params, const std::string& scene_path, const std::vector<std::string>& overrides) {
  const FrameConfig base = load_base(params, overrides);
  SceneSequence scene = load_scene(scene_path);
  const int frames = animation_length(base, scene);
  // Command-line values outrank the scene.
  std::erase_if(scene.tracks, [&](const SceneTrack& t) {
    return std::any_of(overrides.begin(), overrides.end(),
                       [&](const std::string& o) { return detail::trim(o.substr(0, o.find('='))) == t.key; });
  });
  const AnimationResult anim = run_animation(base, scene, frames);
  if (!base.timing.empty()) write_timing_csv(base.timing, anim.frames);
  std::cerr << "wrote " << anim.files.size() << " frames\naverage per frame:\n";
  report(anim.average(), std::cerr);
  return 0;
}

int cmd_bench(const std::string& params, const std::string& tiles, const std::string& workers,
              const std::vector<std::string>& overrides) {
  const FrameConfig cfg = load_base(params, overrides);
  validate(cfg);
  DatasetHandle handle = open_dataset(cfg.input);
  const auto tile_list = parse_int_list(tiles, "--tiles");
  const auto worker_list = parse_int_list(workers, "--workers");
  const auto rows = bench(cfg, handle, tile_list, worker_list);
  write_bench_csv(std::cout, rows);
  return 0;
}

int cmd_mkfixture(const std::string& out, std::size_t count, std::uint64_t seed, const std::string& dist) {
  const auto records = make_fixture(count, seed, parse_distribution(dist));
  write_dataset(out, records, kFixturePtypes);
  std::cerr << "wrote " << count << " particles to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatcher: tile-parallel particle splatting renderer"};
  app.require_subcommand(1);

  std::string params, scene, out, tiles = "20,40,80", workers = "1,2,4", dist = "gaussian";
  std::vector<std::string> overrides;
  std::size_t count = 0;
  std::uint64_t seed = 0;

  auto* render = app.add_subcommand("render", "render one frame");
  render->add_option("params", params, "parameter file")->required();
  render->add_option("overrides", overrides, "key=value overrides");

  auto* animate = app.add_subcommand("animate", "render a keyframed sequence");
  animate->add_option("params", params, "parameter file")->required();
  animate->add_option("scene", scene, "scene file")->required();
  animate->add_option("overrides", overrides, "key=value overrides");

  auto* benchcmd = app.add_subcommand("bench", "sweep tile size and worker count, print CSV");
  benchcmd->add_option("params", params, "parameter file")->required();
  benchcmd->add_option("--tiles", tiles, "comma-separated tile sizes");
  benchcmd->add_option("--workers", workers, "comma-separated worker counts");
  benchcmd->add_option("overrides", overrides, "key=value overrides");

  auto* mk = app.add_subcommand("mkfixture", "write a synthetic particle dataset");
  mk->add_option("out", out, "output dataset path")->required();
  mk->add_option("--count", count, "particle count")->required();
  mk->add_option("--seed", seed, "random seed")->required();
  mk->add_option("--distribution", dist, "gaussian or uniform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*render) return cmd_render(params, overrides);
    if (*animate) return cmd_animate(params, scene, overrides);
    if (*benchcmd) return cmd_bench(params, tiles, workers, overrides);
    if (*mk) return cmd_mkfixture(out, count, seed, dist);
  } catch (const splatcher::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 3;
}
