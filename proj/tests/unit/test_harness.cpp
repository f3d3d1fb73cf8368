#include <doctest.h>

#include "metric_oracles.hpp"

#include "hfr/metrics.hpp"
#include "hfr/report.hpp"
#include "hfr/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hfr;
using namespace hfr::testing;

namespace {

Image uniform_image(int w, int h, double v, double alpha = 1.0) {
  Image img(w, h, 4, v);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(x, y, 3) = alpha;
  }
  return img;
}

}  // namespace

TEST_CASE("masked PSNR examples") {
  const Image a = uniform_image(16, 16, 0.5);
  CHECK(masked_psnr(a, a) == kPsnrCap);
  CHECK(masked_psnr(a, uniform_image(16, 16, 0.6)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK_THROWS_AS(masked_psnr(uniform_image(8, 8, 0.0, 0.0), uniform_image(8, 8, 0.0, 0.0)), MetricError);

  SUBCASE("transparent pixels are excluded") {
    Image b = uniform_image(16, 16, 0.6);
    Image c = a;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 8; ++x) {
        for (int ch = 0; ch < 4; ++ch) b.at(x, y, ch) = c.at(x, y, ch) = 0.0;
      }
    }
    CHECK(masked_psnr(b, c) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(masked_metrics(b, c).mask_coverage == doctest::Approx(0.5));
  }
  SUBCASE("alpha in either image admits the pixel") {
    Image b = uniform_image(4, 4, 0.0, 0.0);
    Image c = b;
    c.at(0, 0, 3) = 1.0;
    c.at(0, 0, 0) = 0.3;
    const auto mask = metric_mask(b, c);
    CHECK(mask[0] == 1);
    CHECK(std::count(mask.begin(), mask.end(), 1) == 1);
    CHECK(masked_psnr(b, c) == doctest::Approx(10.0 * std::log10(1.0 / (0.09 / 3.0))));
  }
}

TEST_CASE("masked metrics equal unmasked references on opaque images") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 12 + trial * 3, h = 20 - trial;
    const Image a = random_opaque_image(rng, w, h);
    Image b = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      if (i % 4 != 3) b.data[i] = std::clamp(b.data[i] + 0.1 * (rng.uniform() - 0.5), 0.0, 1.0);
    }
    CHECK(std::abs(masked_psnr(a, b) - reference_psnr(a, b)) < 1e-9);
    CHECK(std::abs(masked_ssim(a, b) - reference_ssim(a, b)) < 1e-9);
  }
}

TEST_CASE("masked metrics are symmetric") {
  Rng rng(12);
  const Image a = random_opaque_image(rng, 24, 24);
  const Image b = random_opaque_image(rng, 24, 24);
  CHECK(masked_psnr(a, b) == masked_psnr(b, a));
  CHECK(std::abs(masked_ssim(a, b) - masked_ssim(b, a)) < 1e-9);
}

TEST_CASE("masked SSIM examples") {
  Rng rng(13);
  const Image a = random_opaque_image(rng, 32, 32);
  CHECK(masked_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // Texture around mid-gray against its inversion.
  Image tex(32, 32, 4);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) tex.at(x, y, c) = 0.5 + 0.3 * std::sin(0.9 * x + 0.4 * y + c);
      tex.at(x, y, 3) = 1.0;
    }
  }
  Image inv = tex;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) inv.at(x, y, c) = 1.0 - tex.at(x, y, c);
    }
  }
  CHECK(masked_ssim(tex, inv) < 0.5);
  CHECK_THROWS_AS(masked_ssim(uniform_image(16, 16, 0, 0), uniform_image(16, 16, 0, 0)), MetricError);
}

TEST_CASE("percentiles") {
  const std::vector<double> one_to_ten{10, 3, 5, 1, 2, 4, 6, 8, 7, 9};
  const double p50[] = {50.0};
  CHECK(percentiles(one_to_ten, p50)[0] == 5.5);
  const std::vector<double> single{4.25};
  const double many[] = {0.0, 10.0, 50.0, 99.0, 100.0};
  for (double v : percentiles(single, many)) CHECK(v == 4.25);
  CHECK_THROWS(percentiles(std::vector<double>{}, p50));
  const double bad[] = {101.0};
  CHECK_THROWS(percentiles(one_to_ten, bad));

  SUBCASE("matches the sort-and-interpolate oracle and stays ordered") {
    Rng rng(14);
    const double ps[] = {0.0, 10.0, 25.0, 50.0, 90.0, 100.0};
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> v(1 + static_cast<std::size_t>(rng.uniform(0, 200)));
      for (auto& x : v) x = rng.uniform(-1e3, 1e3);
      const auto got = percentiles(v, ps);
      for (std::size_t i = 0; i < std::size(ps); ++i) CHECK(std::abs(got[i] - reference_percentile(v, ps[i])) <= 1e-12);
      CHECK(got[1] <= got[3]);
      CHECK(got[3] <= got[4]);
    }
  }
}

TEST_CASE("foveal crop") {
  Camera cam;
  cam.pose = Mat4::Identity();
  cam.fov_deg = 20.0;
  cam.width = cam.height = 64;
  Image img(64, 64, 4);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      img.at(x, y, 0) = x / 64.0;
      img.at(x, y, 1) = y / 64.0;
      img.at(x, y, 3) = 1.0;
    }
  }
  SUBCASE("full field of view returns the whole image") {
    const Image c = foveal_crop(img, Vec2(0.5, 0.5), 20.0, cam);
    CHECK(c.width == 64);
    CHECK(c.data == img.data);
  }
  SUBCASE("half angle gives the central region") {
    const Image c = foveal_crop(img, Vec2(0.5, 0.5), 10.0, cam);
    const int expect = static_cast<int>(std::lround(64.0 * std::tan(5.0 * M_PI / 180.0) / std::tan(10.0 * M_PI / 180.0)));
    CHECK(c.width == expect);
    CHECK(c.height == expect);
    const int off = (64 - expect) / 2;
    CHECK(c.at(0, 0, 0) == img.at(off, off, 0));
    CHECK(c.at(expect - 1, expect - 1, 1) == img.at(off + expect - 1, off + expect - 1, 1));
  }
  SUBCASE("crop past the border is clipped by the mask") {
    const Image c = foveal_crop(img, Vec2(1.0, 0.5), 10.0, cam);
    int transparent = 0;
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) transparent += c.at(x, y, 3) == 0.0;
    }
    CHECK(transparent == c.width * c.height / 2);
    CHECK(c.at(c.width - 1, c.height / 2, 3) == 0.0);
    CHECK(c.at(0, c.height / 2, 3) == 1.0);
  }
  CHECK_THROWS(foveal_crop(Image(8, 8, 4), Vec2(0.5, 0.5), 10.0, cam));
}

TEST_CASE("report round trip") {
  BenchmarkReport r;
  r.volume = "sphere";
  r.preset = "normal";
  r.display_resolution = 256;
  r.foveal_resolution = 128;
  r.foveal_fov_deg = 20.0;
  r.ground_truth_spp = 64;
  r.lpips = "not computed";
  Rng rng(15);
  for (std::size_t i = 0; i < 20; ++i) {
    FrameRecord f;
    f.index = i;
    f.frame_id = 100 + i;
    f.generation = 1 + i / 8;
    f.full = MaskedMetrics{rng.uniform(20, 40), rng.uniform(0.5, 1), rng.uniform()};
    if (i % 3) f.foveal = MaskedMetrics{rng.uniform(20, 40), rng.uniform(0.5, 1), 1.0};
    if (i % 2) f.peripheral_foveal = MaskedMetrics{rng.uniform(20, 40), rng.uniform(0.5, 1), 0.25};
    f.response_ms = rng.uniform(1, 100) + 1.0 / 3.0;
    f.server_render_ms = 0.1 * i;
    r.frames.push_back(f);
  }
  r.summary = summarize(r.frames);
  CHECK(parse_report(emit_report(r)) == r);
  CHECK(emit_report(parse_report(emit_report(r))) == emit_report(r));

  bool has_full = false, has_foveal = false;
  for (const auto& row : r.summary) {
    CHECK(row.p10 <= row.p50);
    CHECK(row.p50 <= row.p90);
    has_full |= row.name == "full_mpsnr" && row.samples == 20;
    has_foveal |= row.name == "foveal_mpsnr" && row.samples == 13;
  }
  CHECK(has_full);
  CHECK(has_foveal);

  const auto path = std::filesystem::temp_directory_path() / "hfr_report_roundtrip.json";
  write_report(r, path);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(parse_report(text) == r);
  std::filesystem::remove(path);

  CHECK_THROWS(parse_report("{\"frames\": 3}"));
}
