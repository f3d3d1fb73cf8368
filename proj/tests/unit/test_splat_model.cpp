#include <doctest.h>

#include "hfr/rng.hpp"
#include "hfr/splat_model.hpp"
#include "hfr/splat_render.hpp"

#include <cmath>
#include <random>

using namespace hfr;

namespace {

SplatModel random_model(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SplatModel m;
  m.generation = 7;
  m.settings_hash = 0x1234abcd5678ef90ull;
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian g;
    g.position = Vec3(u(rng), u(rng), u(rng)) * 10.0;
    g.log_scale = Vec3(u(rng), u(rng), u(rng)) - Vec3::Constant(1.0);
    g.rotation = Vec4(u(rng), u(rng), u(rng), u(rng)).normalized();
    g.opacity_logit = 3.0 * u(rng);
    g.rgb = (Vec3(u(rng), u(rng), u(rng)) + Vec3::Ones()) * 0.5;
    m.gaussians.push_back(g);
  }
  return m;
}

SplatFormatErrorKind error_kind(std::span<const std::uint8_t> bytes) {
  try {
    deserialize(bytes);
  } catch (const SplatFormatError& e) {
    return e.kind;
  }
  FAIL("expected a SplatFormatError");
  return SplatFormatErrorKind::Malformed;
}

}  // namespace

TEST_CASE("serialized size follows the record layout") {
  const SplatModel m = random_model(10000, 1);
  const auto bytes = serialize(m);
  CHECK(bytes.size() == kSplatHeaderBytes + 10000 * kSplatRecordBytes);
  CHECK(bytes.size() < 1000000);
  CHECK(kSplatRecordBytes == 23);
}

TEST_CASE("empty model cannot be serialized") {
  try {
    serialize(SplatModel{});
    FAIL("expected a SplatFormatError");
  } catch (const SplatFormatError& e) {
    CHECK(e.kind == SplatFormatErrorKind::Empty);
  }
}

TEST_CASE("round trip stays within one quantization step") {
  const SplatModel m = random_model(200, 2);
  double lo = 1e9, hi = -1e9;
  for (const auto& g : m.gaussians) {
    lo = std::min(lo, g.log_scale.minCoeff());
    hi = std::max(hi, g.log_scale.maxCoeff());
  }
  const double scale_step = (hi - lo) / 255.0;
  const SplatModel back = deserialize(serialize(m));
  CHECK(back.generation == m.generation);
  CHECK(back.settings_hash == m.settings_hash);
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Gaussian& a = m.gaussians[i];
    const Gaussian& b = back.gaussians[i];
    for (int k = 0; k < 3; ++k) CHECK(b.position[k] == static_cast<double>(static_cast<float>(a.position[k])));
    CHECK((b.log_scale - a.log_scale).cwiseAbs().maxCoeff() <= scale_step + 1e-6);
    CHECK(std::abs(b.opacity() - a.opacity()) <= kOpacityStep);
    CHECK((b.rgb - a.rgb).cwiseAbs().maxCoeff() <= kColorStep);
    CHECK(std::abs(b.rotation.norm() - 1.0) < 1e-6);
    // Same rotation up to sign, each component within one i8 step after renormalization.
    const double sign = a.rotation.dot(b.rotation) < 0.0 ? -1.0 : 1.0;
    CHECK((sign * b.rotation - a.rotation).cwiseAbs().maxCoeff() <= 2.0 / 127.0);
  }
}

TEST_CASE("single gaussian round trip") {
  SplatModel m;
  Gaussian g;
  g.position = Vec3(1.25, -2.5, 3.125);
  g.log_scale = Vec3(-1.0, -0.5, 0.25);
  g.opacity_logit = logit(0.7);
  g.rgb = Vec3(0.1, 0.5, 0.9);
  m.gaussians.push_back(g);
  const SplatModel back = deserialize(serialize(m));
  REQUIRE(back.size() == 1);
  CHECK(back.gaussians[0].position == g.position);
  CHECK((back.gaussians[0].log_scale - g.log_scale).cwiseAbs().maxCoeff() <= 1.25 / 255.0 + 1e-6);
  CHECK(std::abs(back.gaussians[0].opacity() - 0.7) <= kOpacityStep);
  CHECK((back.gaussians[0].rgb - g.rgb).cwiseAbs().maxCoeff() <= kColorStep);
  CHECK(back.gaussians[0].rotation.isApprox(Vec4(1, 0, 0, 0)));
}

TEST_CASE("double round trip equals single round trip") {
  const auto once = serialize(deserialize(serialize(random_model(500, 3))));
  const auto twice = serialize(deserialize(once));
  CHECK(once == twice);
}

TEST_CASE("format errors are distinct") {
  const auto good = serialize(random_model(3, 4));
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK(error_kind(b) == SplatFormatErrorKind::BadMagic);
  }
  SUBCASE("version mismatch") {
    auto b = good;
    b[4] = 9;
    CHECK(error_kind(b) == SplatFormatErrorKind::VersionMismatch);
  }
  SUBCASE("truncated records") {
    auto b = good;
    b.pop_back();
    CHECK(error_kind(b) == SplatFormatErrorKind::Truncated);
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + 10);
    CHECK(error_kind(b) == SplatFormatErrorKind::Truncated);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK(error_kind(b) == SplatFormatErrorKind::Malformed);
  }
}

TEST_CASE("viewer boost") {
  SplatModel m;
  Gaussian g;
  g.opacity_logit = 0.0;  // 0.5
  g.log_scale = Vec3(0.1, 0.2, 0.3);
  g.rgb = Vec3(0.4, 0.5, 0.6);
  m.gaussians.push_back(g);
  Gaussian dense = g;
  dense.opacity_logit = logit(0.95);
  m.gaussians.push_back(dense);

  const SplatModel same = apply_viewer_boost(m, 1.0, 1.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(same.gaussians[i].opacity_logit == m.gaussians[i].opacity_logit);
    CHECK(same.gaussians[i].log_scale == m.gaussians[i].log_scale);
  }

  const SplatModel boosted = apply_viewer_boost(m, 1.1, 1.1);
  CHECK(boosted.gaussians[0].opacity() == doctest::Approx(0.55).epsilon(1e-12));
  CHECK((boosted.gaussians[0].log_scale.array().exp() / g.log_scale.array().exp() - 1.1).abs().maxCoeff() < 1e-12);
  CHECK(boosted.gaussians[1].opacity() < 1.0);
  CHECK(std::isfinite(boosted.gaussians[1].opacity_logit));
  CHECK(boosted.gaussians[0].rgb == g.rgb);

  CHECK_THROWS(apply_viewer_boost(m, 0.0, 1.0));
}

TEST_CASE("identity boost renders identically") {
  const SplatModel m = random_model(50, 5);
  Camera cam;
  cam.pose = look_at(Vec3(0, 0, 40), Vec3::Zero());
  cam.fov_deg = 40;
  cam.width = cam.height = 24;
  const auto a = rasterize(m, cam, Vec3::Zero());
  const auto b = rasterize(apply_viewer_boost(m, 1.0, 1.0), cam, Vec3::Zero());
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.alpha.data == b.alpha.data);
}

TEST_CASE("settings hash tracks transfer function and clip planes") {
  const TransferFunction a({{0.0, Vec4::Zero()}, {1.0, Vec4::Ones()}});
  const TransferFunction b({{0.0, Vec4::Zero()}, {1.0, Vec4(1, 1, 1, 0.9)}});
  const std::vector<ClipPlane> none;
  const std::vector<ClipPlane> one{ClipPlane{Vec3::UnitX(), 0.5}};
  CHECK(compute_settings_hash(a, none) == compute_settings_hash(a, none));
  CHECK(compute_settings_hash(a, none) != compute_settings_hash(b, none));
  CHECK(compute_settings_hash(a, none) != compute_settings_hash(a, one));
}
