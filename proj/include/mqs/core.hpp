#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mqs {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Base class of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// mesh construction / queries
struct NonConforming : Error { using Error::Error; };
struct DegenerateTriangle : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };

// quadrature
struct UnsupportedDegree : Error { using Error::Error; };

// finite element spaces
struct SingularJacobian : Error { using Error::Error; };
struct UnsupportedSpace : Error { using Error::Error; };

// material laws and spline fitting
struct InvalidParams : Error { using Error::Error; };
struct NotStrictlyIncreasing : Error { using Error::Error; };
struct MonotonicityViolation : Error { using Error::Error; };
struct MonotonicityFailure : Error { using Error::Error; };
struct UncertifiedMaterial : Error { using Error::Error; };

// assembly
struct QuadratureTooWeak : Error { using Error::Error; };
struct LocalSolveFailure : Error { using Error::Error; };

// linear solver
struct NotPositiveDefinite : Error { using Error::Error; };

// file I/O
struct UnsupportedVersion : Error { using Error::Error; };
struct MalformedSection : Error { using Error::Error; };
struct NonPlanar : Error { using Error::Error; };
struct FieldSizeMismatch : Error { using Error::Error; };

// z-component of the cross product of two in-plane vectors
inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// counter-clockwise rotation by pi/2
inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

// scalar curl of a vector field (rot v), and vector curl of a scalar field:
//   rot v  = dx v_y - dy v_x,      Curl a = (dy a, -dx a).
// These conventions make  (Curl a, v) = (a, rot v)  for compactly supported fields.

}  // namespace mqs
