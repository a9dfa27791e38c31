#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace prosim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using RefVec = Eigen::Ref<const Eigen::VectorXd>;
using RefMat = Eigen::Ref<const Eigen::MatrixXd>;

// Planar rotation acting on (x, z); positive pitch is counterclockwise
// with x to the right and z up.
inline Mat2 rot2(double pitch) {
  const double c = std::cos(pitch), s = std::sin(pitch);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

// d/dpitch of rot2(pitch) applied to v, i.e. a quarter-turn of v.
inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ModelError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ConstraintRankError : ModelError {
  std::string constraint_name;
  ConstraintRankError(const std::string& what, std::string name)
      : ModelError(what), constraint_name(std::move(name)) {}
};

struct SolverError : Error {
  using Error::Error;
};

struct SimError : Error {
  using Error::Error;
};

struct TimingError : Error {
  using Error::Error;
};

}  // namespace prosim
