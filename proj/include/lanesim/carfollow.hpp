#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lanesim/common.hpp"

namespace lanesim {

inline constexpr double kInfiniteGap = std::numeric_limits<double>::infinity();

// Acceleration bounds applied during integration, not inside the models.
inline constexpr double kMaxAccel = 4.0;    // m/s^2
inline constexpr double kMaxDecel = -9.0;   // m/s^2

struct IdmParams {
  double a = 1.4;      // max acceleration, m/s^2
  double b = 2.0;      // comfortable deceleration, m/s^2
  double v0 = 30.0;    // desired speed, m/s
  double T = 1.5;      // safe time headway, s
  double s0 = 2.0;     // jam distance, m
  double delta = 4.0;  // acceleration exponent
};

struct OvmParams {
  double V1 = 6.75;     // m/s
  double V2 = 7.91;     // m/s
  double C1 = 0.13;     // 1/m
  double C2 = 1.57;     // dimensionless
  double l_c = 5.0;     // vehicle length, m
  double kappa = 0.41;  // relaxation gain, 1/s
  double lambda = 0.5;  // velocity-difference gain, 1/s
};

// IDM acceleration. dv = v_ego - v_leader (positive when approaching).
// Free road: gap = kInfiniteGap, dv = 0.
inline double idm_accel(const IdmParams& p, double v, double gap, double dv) {
  if (!(gap > 0.0))
    throw std::domain_error("idm_accel: non-positive gap (vehicle overlap)");
  double s_star = p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a * p.b)));
  double interaction = std::isinf(gap) ? 0.0 : (s_star / gap) * (s_star / gap);
  return p.a * (1.0 - std::pow(v / p.v0, p.delta) - interaction);
}

// Optimal-velocity function, floored at zero.
inline double ovm_velocity(const OvmParams& p, double gap) {
  if (std::isinf(gap)) return std::max(0.0, p.V1 + p.V2);
  return std::max(0.0, p.V1 + p.V2 * std::tanh(p.C1 * (gap - p.l_c) - p.C2));
}

// Full velocity difference model: relaxation toward V(s) plus a velocity
// difference term.
inline double fvdm_accel(const OvmParams& p, double v, double gap, double dv) {
  if (!(gap > 0.0))
    throw std::domain_error("fvdm_accel: non-positive gap (vehicle overlap)");
  return p.kappa * (ovm_velocity(p, gap) - v) - p.lambda * dv;
}

enum class CarFollowModel { Idm, Fvdm };

struct CarFollowParams {
  CarFollowModel model = CarFollowModel::Idm;
  IdmParams idm;
  OvmParams ovm;
};

inline double accel(const CarFollowParams& p, double v, double gap, double dv) {
  return p.model == CarFollowModel::Idm ? idm_accel(p.idm, v, gap, dv)
                                        : fvdm_accel(p.ovm, v, gap, dv);
}

inline double free_speed(const CarFollowParams& p) {
  return p.model == CarFollowModel::Idm ? p.idm.v0 : std::max(0.0, p.ovm.V1 + p.ovm.V2);
}

// Speed at which accel(v, gap, 0) = 0 for a fixed gap. For FVDM this is the
// optimal velocity; for IDM it is solved by bisection (accel is strictly
// decreasing in v). Gaps at or below the jam distance pin the equilibrium to
// a standstill, including the blocked case gap <= 0.
inline double equilibrium_speed(const CarFollowParams& p, double gap) {
  if (p.model == CarFollowModel::Fvdm) return ovm_velocity(p.ovm, std::max(0.0, gap));
  if (std::isinf(gap)) return p.idm.v0;
  if (gap <= p.idm.s0) return 0.0;
  double lo = 0.0, hi = p.idm.v0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * p.idm.v0; ++i) {
    double mid = 0.5 * (lo + hi);
    (idm_accel(p.idm, mid, gap, 0.0) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline CarFollowParams carfollow_preset(const std::string& name) {
  CarFollowParams p;
  if (name == "idm") {
    p.model = CarFollowModel::Idm;
  } else if (name == "fvdm") {
    p.model = CarFollowModel::Fvdm;
  } else {
    throw ConfigError("unknown car-following preset '" + name + "'");
  }
  return p;
}

}  // namespace lanesim
