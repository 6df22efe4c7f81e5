#pragma once

namespace nolab {

/// Quintic smoothstep 6s^5 - 15s^4 + 10s^3, clamped to [0,1].
inline double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

inline double smooth_step_derivative(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 30.0 * s * s * (1.0 - s) * (1.0 - s);
}

}  // namespace nolab
