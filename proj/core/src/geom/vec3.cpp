#include "dvq/geom/vec3.hpp"

#include <algorithm>

namespace dvq::geom {

Mat3 axis_angle_to_matrix(const Vec3& w) {
  const double s2 = norm2(w);
  // sin(t)/t and (1-cos(t))/t^2 as analytic functions of t^2, so the
  // map stays smooth through w = 0.
  double f, g;
  if (s2 < 1e-8) {
    f = 1.0 - s2 / 6.0 + s2 * s2 / 120.0;
    g = 0.5 - s2 / 24.0 + s2 * s2 / 720.0;
  } else {
    const double t = std::sqrt(s2);
    f = std::sin(t) / t;
    g = (1.0 - std::cos(t)) / s2;
  }
  Mat3 k{};
  k.m[0] = 0;     k.m[1] = -w.z;  k.m[2] = w.y;
  k.m[3] = w.z;   k.m[4] = 0;     k.m[5] = -w.x;
  k.m[6] = -w.y;  k.m[7] = w.x;   k.m[8] = 0;
  const Mat3 k2 = k * k;
  Mat3 r = Mat3::identity();
  for (int i = 0; i < 9; ++i) r.m[i] += f * k.m[i] + g * k2.m[i];
  return r;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  const double tr = r.m[0] + r.m[4] + r.m[8];
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  const double angle = std::acos(c);
  if (angle < 1e-12) return {};
  Vec3 axis{r.m[7] - r.m[5], r.m[2] - r.m[6], r.m[3] - r.m[1]};
  const double s = norm(axis);
  if (s > 1e-9) return axis * (angle / s);
  // angle near pi: recover the axis from the symmetric part
  Vec3 a{std::sqrt(std::max(0.0, (r.m[0] + 1.0) / 2.0)),
         std::sqrt(std::max(0.0, (r.m[4] + 1.0) / 2.0)),
         std::sqrt(std::max(0.0, (r.m[8] + 1.0) / 2.0))};
  // fix signs using the largest component
  int k = 0;
  if (a.y > a[k]) k = 1;
  if (a.z > a[k]) k = 2;
  if (k == 0) {
    a.y = (r.m[1] + r.m[3]) / (4 * a.x);
    a.z = (r.m[2] + r.m[6]) / (4 * a.x);
  } else if (k == 1) {
    a.x = (r.m[1] + r.m[3]) / (4 * a.y);
    a.z = (r.m[5] + r.m[7]) / (4 * a.y);
  } else {
    a.x = (r.m[2] + r.m[6]) / (4 * a.z);
    a.y = (r.m[5] + r.m[7]) / (4 * a.z);
  }
  return normalized(a) * angle;
}

Mat3 frame_from_axes(const Vec3& right, const Vec3& forward, const Vec3& up) {
  Mat3 r;
  r.m[0] = right.x; r.m[1] = forward.x; r.m[2] = up.x;
  r.m[3] = right.y; r.m[4] = forward.y; r.m[5] = up.y;
  r.m[6] = right.z; r.m[7] = forward.z; r.m[8] = up.z;
  return r;
}

}  // namespace dvq::geom
