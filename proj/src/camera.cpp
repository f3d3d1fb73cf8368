#include "hfr/camera.hpp"

#include <stdexcept>

namespace hfr {

void Camera::validate() const {
  const Mat3 r = pose.topLeftCorner<3, 3>();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-5 || std::abs(r.determinant() - 1.0) > 1e-5) {
    throw std::invalid_argument("camera pose rotation must be orthonormal with det +1");
  }
  if (!(near > 0.0 && near < far)) throw std::invalid_argument("camera requires 0 < near < far");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("camera fov must be in (0, 180)");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera resolution must be positive");
}

Mat4 Camera::view() const {
  Mat4 v = Mat4::Identity();
  const Mat3 rt = pose.topLeftCorner<3, 3>().transpose();
  v.topLeftCorner<3, 3>() = rt;
  v.topRightCorner<3, 1>() = -rt * position();
  return v;
}

Mat4 Camera::projection() const {
  const double f = 1.0 / tan_half_fov();
  Mat4 p = Mat4::Zero();
  p(0, 0) = f / aspect();
  p(1, 1) = f;
  p(2, 2) = (far + near) / (near - far);
  p(2, 3) = 2.0 * far * near / (near - far);
  p(3, 2) = -1.0;
  return p;
}

Vec3 Camera::ray_direction(double px, double py) const {
  const double t = tan_half_fov();
  const Vec3 d_cam((2.0 * px / width - 1.0) * t * aspect(), (1.0 - 2.0 * py / height) * t, -1.0);
  return transform_dir(pose, d_cam).normalized();
}

std::optional<Vec2> Camera::project(const Vec3& world) const {
  const Vec3 c = transform_point(view(), world);
  const double z = -c.z();
  if (z <= 1e-12) return std::nullopt;
  const double f = focal_px();
  return Vec2(0.5 * width + f * c.x() / z, 0.5 * height - f * c.y() / z);
}

bool same_camera(const Camera& a, const Camera& b, double tol) {
  return a.width == b.width && a.height == b.height && std::abs(a.fov_deg - b.fov_deg) <= tol &&
         (a.pose - b.pose).cwiseAbs().maxCoeff() <= tol;
}

Camera make_foveal_camera(const Camera& display, const Vec2& center_uv, double fov_deg, int resolution) {
  const Vec2 px = uv_to_pixel(display, center_uv);
  const Vec3 dir = display.ray_direction(px.x(), px.y());
  const Vec3 up = display.pose.block<3, 1>(0, 1);
  Camera fov = display;
  fov.pose = look_at(display.position(), display.position() + dir, up);
  fov.fov_deg = fov_deg;
  fov.width = resolution;
  fov.height = resolution;
  return fov;
}

}  // namespace hfr
