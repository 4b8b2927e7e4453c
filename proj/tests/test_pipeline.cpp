#include <gtest/gtest.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "splatcher/pipeline.hpp"

using namespace splatcher;
using test::TempDir;

namespace {

/// Whole-dataset single-chunk oracle: range taken straight from the records,
/// scalar colorize, brute-force render.
Image oracle_image(const FrameConfig& cfg) {
  const auto recs = test::read_all_records(cfg.input);
  Image img(cfg.width, cfg.height);
  if (recs.empty()) return img;
  float lo = recs[0].q, hi = recs[0].q, min_pos = std::numeric_limits<float>::infinity();
  for (const auto& r : recs) {
    lo = std::min(lo, r.q);
    hi = std::max(hi, r.q);
    if (r.q > 0) min_pos = std::min(min_pos, r.q);
  }
  QuantityScale scale{{lo, hi}, cfg.log, 0};
  if (cfg.log) {
    scale.log_floor = std::log10(min_pos);
    scale.range = {scale.log_floor, std::log10(hi)};
  }
  ParticleChunk c = ParticleChunk::create(recs.size());
  for (const auto& r : recs) {
    Particle p;
    p.x = r.x;
    p.y = r.y;
    p.z = r.z;
    p.r = r.r;
    p.q = r.q;
    p.ptype = r.ptype;
    p.active = r.r > 0;
    c.push_back(p);
  }
  prepare_quantity(c, scale, 0, c.size());
  transform_particles(c, build_transform(cfg.camera(), cfg.width, cfg.height, cfg.cutoff_factor));
  ColorTable colors;
  for (const auto& m : cfg.colormap) colors.maps.push_back(load_colormap(m));
  for (double b : cfg.brightness) colors.brightness.push_back(static_cast<float>(b));
  colors.weight_by_q = cfg.weight_by_q;
  colors.bind(kFixturePtypes);
  colorize_scalar(c, colors, 0, c.size());
  reference_render_into(c, SplatParams{static_cast<float>(cfg.sigma_factor), static_cast<float>(cfg.cutoff_factor)},
                        img);
  return img;
}

FrameResult render(const FrameConfig& cfg, FrameRenderer::Options opts = {}) {
  DatasetHandle h = open_dataset(cfg.input);
  const QuantityScale scale = range_pass(h, cfg);
  FrameRenderer r(cfg, std::move(opts));
  return r.run_frame(cfg, h, scale);
}

bool bitwise_equal(const Image& a, const Image& b) {
  const auto pa = a.pixels(), pb = b.pixels();
  if (pa.size() != pb.size()) return false;
  return std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(Rgb)) == 0;
}

double image_sum(const Image& img) {
  double s = 0;
  for (const Rgb& p : img.pixels()) s += p.r + p.g + p.b;
  return s;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(RunFrame, SingleChunkMatchesReference) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(20000, 1)));
  const FrameResult r = render(cfg);
  const Image ref = oracle_image(cfg);
  EXPECT_GT(image_sum(ref), 0.0);
  EXPECT_LE(test::max_relative_diff(r.image, ref, 1e-12), 1e-5);
  EXPECT_EQ(r.stats.particles, 20000u);
  EXPECT_EQ(r.stats.chunks, 1u);
  EXPECT_EQ(r.stats.frames, 1u);
  for (double s : r.stats.seconds) EXPECT_GE(s, 0.0);
}

TEST(RunFrame, ChunkCapacityDoesNotChangeImage) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(9000, 2)));
  cfg.log = true;
  const Image whole = render(cfg).image;
  for (int cap : {3000, 1000, 777}) {
    cfg.chunk_size = cap;
    const FrameResult r = render(cfg);
    EXPECT_EQ(r.stats.chunks, static_cast<std::uint64_t>((9000 + cap - 1) / cap));
    EXPECT_LE(test::max_relative_diff(r.image, whole, 1e-12), 1e-5) << cap;
  }
}

TEST(RunFrame, LogAndColormapsMatchReference) {
  TempDir dir;
  auto recs = make_fixture(5000, 3);
  recs[10].q = 0;
  recs[11].q = -2;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", recs), 96);
  {
    std::ofstream(dir / "a.map") << "0 0 0 0.5\n0.4 1 0 0\n0.7 1 1 0\n1 1 1 1\n";
    std::ofstream(dir / "b.map") << "0 0 0 0\n1 0.2 0.6 1\n";
  }
  cfg.colormap = {(dir / "a.map").string(), (dir / "b.map").string()};
  cfg.brightness = {1.5, 3.0};
  cfg.log = true;
  cfg.chunk_size = 1200;
  cfg.workers = 3;
  const FrameResult r = render(cfg);
  EXPECT_EQ(r.stats.log_clamped, 2u);
  EXPECT_LE(test::max_relative_diff(r.image, oracle_image(cfg), 1e-12), 1e-5);
}

TEST(RunFrame, WorkerCountIsBitwiseInvariantAtFixedChunking) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(20000, 4)));
  cfg.chunk_size = 6000;
  const Image one = render(cfg).image;
  EXPECT_TRUE(bitwise_equal(one, render(cfg).image));
  for (int w : {2, 4, 8}) {
    cfg.workers = w;
    EXPECT_TRUE(bitwise_equal(one, render(cfg).image)) << w;
  }
}

TEST(RunFrame, MultiworkerEquivalence) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(30000, 5)));
  DatasetHandle h = open_dataset(cfg.input);
  const QuantityScale scale = range_pass(h, cfg);
  const Image base = run_frame(cfg, h, scale).image;
  EXPECT_TRUE(bitwise_equal(run_multiworker(cfg, h, scale, 1).image, base));
  EXPECT_LE(test::max_relative_diff(run_multiworker(cfg, h, scale, 8).image, base, 1e-12), 1e-6);
  EXPECT_THROW((void)run_multiworker(cfg, h, scale, 0), ConfigError);
}

TEST(RunFrame, EmptyDatasetRendersBlack) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "e.splt", {}), 16);
  DatasetHandle h = open_dataset(cfg.input);
  const FrameResult r = run_frame(cfg, h, QuantityScale{});
  for (const Rgb& p : r.image.pixels()) EXPECT_EQ(p, Rgb{});
  EXPECT_EQ(r.stats.particles, 0u);
}

TEST(RunFrame, BadRecordAbortsWithoutHanging) {
  TempDir dir;
  auto recs = make_fixture(3000, 6);
  recs[2500].ptype = 7;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", recs), 32);
  cfg.chunk_size = 1000;
  DatasetHandle h = open_dataset(cfg.input);
  EXPECT_THROW((void)run_frame(cfg, h, QuantityScale{{0, 10}, false, 0}), IoError);
}

TEST(RunFrame, SlowReaderStillCompletesAndOverlaps) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(8000, 7)), 64);
  cfg.chunk_size = 1000;
  const Image fast = render(cfg).image;
  std::atomic<int> calls{0};
  FrameRenderer::Options opts;
  opts.after_read = [&](std::size_t index) {
    EXPECT_EQ(index, static_cast<std::size_t>(calls.load()));
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
  };
  const FrameResult slow = render(cfg, opts);
  EXPECT_EQ(calls.load(), 8);
  EXPECT_TRUE(bitwise_equal(slow.image, fast));
  EXPECT_GE(slow.stats.read_busy_seconds, 8 * 0.015);
  EXPECT_GT(slow.stats[Kernel::read], 0.0);
  const double ratio = slow.stats.overlap_ratio();
  EXPECT_GE(ratio, 0.0);
  EXPECT_LE(ratio, 1.0);
}

TEST(RunFrame, PoolsReusedAcrossFrames) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(5000, 8)), 64);
  cfg.workers = 2;
  DatasetHandle h = open_dataset(cfg.input);
  const QuantityScale scale = range_pass(h, cfg);
  FrameRenderer r(cfg);
  const Pool* first = r.pools().data();
  const Image a = r.run_frame(cfg, h, scale).image;
  const FrameResult b = r.run_frame(cfg, h, scale);
  EXPECT_EQ(r.pools().data(), first);
  EXPECT_TRUE(bitwise_equal(a, b.image));
  EXPECT_GT(b.stats.allocator.allocs, 0u);
  for (const Pool& p : r.pools()) EXPECT_EQ(p.stats().in_use, 0u);
}

TEST(RangePass, LogEndpoints) {
  TempDir dir;
  std::vector<ParticleRecord> recs;
  for (int q = 1; q <= 100; ++q) recs.push_back({0, 0, 0, 0.01f, static_cast<float>(q), 0});
  DatasetHandle h = open_dataset(test::write_fixture(dir, "q.splt", recs, 1));
  FrameConfig cfg;
  cfg.log = true;
  const QuantityScale s = range_pass(h, cfg);
  EXPECT_EQ(s.range, (FieldRange{0, 2}));
  EXPECT_EQ(h.cursor(), 0u);
  cfg.log = false;
  EXPECT_EQ(range_pass(h, cfg).range, (FieldRange{1, 100}));
}

TEST(RangePass, ChunkedEqualsUnchunked) {
  TempDir dir;
  DatasetHandle h = open_dataset(test::write_fixture(dir, "f.splt", make_fixture(10000, 9)));
  FrameConfig cfg;
  for (bool log : {false, true}) {
    cfg.log = log;
    cfg.chunk_size = 1 << 20;
    const QuantityScale whole = range_pass(h, cfg);
    for (int cap : {1, 7, 999, 4096}) {
      cfg.chunk_size = cap;
      const QuantityScale s = range_pass(h, cfg);
      EXPECT_EQ(std::bit_cast<std::uint32_t>(s.range.min), std::bit_cast<std::uint32_t>(whole.range.min));
      EXPECT_EQ(std::bit_cast<std::uint32_t>(s.range.max), std::bit_cast<std::uint32_t>(whole.range.max));
    }
  }
}

TEST(RangePass, EmptyDatasetIsAnError) {
  TempDir dir;
  DatasetHandle h = open_dataset(test::write_fixture(dir, "e.splt", {}));
  try {
    (void)range_pass(h, FrameConfig{});
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("no particles"), std::string::npos);
  }
}

TEST(Tonemap, Examples) {
  EXPECT_EQ(quantize(0.0f), 0);
  EXPECT_EQ(quantize(1.0f), 255);
  EXPECT_EQ(quantize(7.3f), 255);
  EXPECT_EQ(quantize(0.5f), 128);
  EXPECT_EQ(quantize(-1.0f), 0);
}

TEST(Tonemap, MatchesOracle) {
  std::mt19937 rng(61);
  std::uniform_real_distribution<float> u(-0.2f, 1.3f);
  Image img(37, 23);
  for (Rgb& p : img.pixels()) p = {u(rng), u(rng), u(rng)};
  const Rgb8Image out = tonemap(img);
  ASSERT_EQ(out.data.size(), 37u * 23u * 3u);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    const Rgb p = img.pixels()[i];
    const float ch[3] = {p.r, p.g, p.b};
    for (int c = 0; c < 3; ++c) {
      const float v = std::min(std::max(ch[c], 0.0f), 1.0f) * 255.0f;
      ASSERT_EQ(out.data[i * 3 + c], static_cast<std::uint8_t>(std::floor(static_cast<double>(v) + 0.5)));
    }
  }
}

TEST(Timing, CsvShape) {
  PipelineStats s;
  s[Kernel::render] = 0.25;
  s.particles = 42;
  std::ostringstream out;
  const PipelineStats frames[2] = {s, s};
  write_timing_csv(out, frames);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frame,kernel,seconds,particles");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 16);
  EXPECT_NE(out.str().find("1,render,0.250000000,42"), std::string::npos);
}

TEST(Animation, FramePathNaming) {
  EXPECT_EQ(frame_path("out/movie.ppm", 7).string(), "out/movie_00007.ppm");
  EXPECT_EQ(frame_path("movie", 123).string(), "movie_00123.ppm");
}

TEST(Animation, EmptySceneEqualsRunFrame) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(4000, 10)), 48);
  cfg.output = (dir / "anim.ppm").string();
  const AnimationResult a = run_animation(cfg, SceneSequence{});
  ASSERT_EQ(a.files.size(), 1u);
  EXPECT_EQ(a.files[0], dir / "anim_00000.ppm");
  FrameConfig single = cfg;
  single.output = (dir / "single.ppm").string();
  DatasetHandle h = open_dataset(cfg.input);
  const QuantityScale scale = range_pass(h, cfg);
  FrameRenderer r(single);
  (void)render_to_file(r, single, h, scale, single.output);
  EXPECT_EQ(file_bytes(a.files[0]), file_bytes(single.output));
}

TEST(Animation, OrbitIsDeterministicAndNotBlack) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(6000, 11)), 48);
  cfg.workers = 3;
  cfg.chunk_size = 2500;
  std::istringstream scene_text(
      "0 camera_pos linear 0 0 -3\n"
      "3 camera_pos linear 3 0 0\n"
      "6 camera_pos linear 0 0 3\n"
      "9 camera_pos linear -3 0 0\n");
  const SceneSequence scene = parse_scene(scene_text, "orbit");
  cfg.output = (dir / "a.ppm").string();
  const AnimationResult a = run_animation(cfg, scene);
  cfg.output = (dir / "b.ppm").string();
  const AnimationResult b = run_animation(cfg, scene);
  ASSERT_EQ(a.files.size(), 10u);
  ASSERT_EQ(b.files.size(), 10u);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto bytes = file_bytes(a.files[f]);
    EXPECT_EQ(bytes, file_bytes(b.files[f])) << f;
    std::size_t lit = 0;
    for (std::size_t i = 13; i < bytes.size(); ++i) lit += bytes[i] != 0;
    EXPECT_GT(lit, 0u) << f;
  }
  const PipelineStats avg = a.average();
  EXPECT_EQ(avg.frames, 10u);
  EXPECT_EQ(avg.particles, 60000u);
}

TEST(Animation, ErrorsNameTheFrame) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(100, 12)), 16);
  cfg.output = (dir / "x.ppm").string();
  std::istringstream text("0 input step f.splt\n2 input step missing.splt\n");
  SceneSequence scene = parse_scene(text, "s");
  scene.tracks[0].keyframes[0].tokens = {cfg.input};
  scene.tracks[0].keyframes[1].tokens = {(dir / "missing.splt").string()};
  try {
    (void)run_animation(cfg, scene);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
  }
}

TEST(Bench, SweepRowsAndBestFlag) {
  TempDir dir;
  FrameConfig cfg = test::small_config(test::write_fixture(dir, "f.splt", make_fixture(20000, 13)), 128);
  DatasetHandle h = open_dataset(cfg.input);
  const int tiles[] = {20, 40, 80};
  const int workers[] = {1, 2, 4};
  const auto rows = bench(cfg, h, tiles, workers, dir / "scratch.ppm");
  ASSERT_EQ(rows.size(), 9u);
  int best = 0;
  double best_total = 1e300;
  for (const auto& r : rows) {
    EXPECT_LE(r.stats.kernel_total(), r.total * 1.05 + 1e-4);
    EXPECT_EQ(r.stats.particles, 20000u);
    best += r.best;
    best_total = std::min(best_total, r.total);
  }
  EXPECT_EQ(best, 1);
  for (const auto& r : rows) {
    if (r.best) EXPECT_EQ(r.total, best_total);
  }
  std::ostringstream csv;
  write_bench_csv(csv, rows);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "tile_size,workers,read,transform,colorize,assign,render,composite,tonemap,write,total,best");
  EXPECT_FALSE(std::filesystem::exists(dir / "scratch.ppm"));
}
