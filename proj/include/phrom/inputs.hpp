#pragma once

// Named scalar excitation signals used by the benchmark studies.

#include "phrom/errors.hpp"
#include "phrom/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace phrom {

/// u(t) ↦ length-m input vector.
using Input = std::function<Vector(double)>;

struct SignalSpec {
  std::string kind = "zero";  // zero | exp-sin | small-sin | sawtooth | constant | tabulated
  double amplitude = 1.0;
  double period = 1.0;
  // tabulated samples, linearly interpolated and held constant outside the table
  std::vector<double> times;
  std::vector<double> values;
};

inline double sawtooth(double t, double amplitude, double period) {
  const double s = t / period;
  return amplitude * 2.0 * (s - std::floor(s + 0.5));
}

inline std::function<double(double)> make_scalar_signal(const SignalSpec& spec) {
  if (spec.kind == "zero") return [](double) { return 0.0; };
  if (spec.kind == "exp-sin") return [](double t) { return std::exp(-t / 2.0) * std::sin(t * t); };
  if (spec.kind == "small-sin") return [](double t) { return 0.1 * std::sin(t); };
  if (spec.kind == "constant") return [a = spec.amplitude](double) { return a; };
  if (spec.kind == "sawtooth") {
    if (!(spec.period > 0.0)) throw ConfigError("sawtooth period must be positive");
    return [a = spec.amplitude, p = spec.period](double t) { return sawtooth(t, a, p); };
  }
  if (spec.kind == "tabulated") {
    if (spec.times.size() != spec.values.size() || spec.times.empty()) {
      throw ConfigError("tabulated signal needs matching nonempty times/values");
    }
    if (!std::is_sorted(spec.times.begin(), spec.times.end())) throw ConfigError("tabulated times must be sorted");
    auto ts = std::make_shared<const std::vector<double>>(spec.times);
    auto vs = std::make_shared<const std::vector<double>>(spec.values);
    return [ts, vs](double t) {
      const auto& T = *ts;
      const auto& V = *vs;
      if (t <= T.front()) return V.front();
      if (t >= T.back()) return V.back();
      const auto it = std::upper_bound(T.begin(), T.end(), t);
      const auto k = static_cast<std::size_t>(it - T.begin());
      const double w = (t - T[k - 1]) / (T[k] - T[k - 1]);
      return (1.0 - w) * V[k - 1] + w * V[k];
    };
  }
  throw ConfigError("unknown signal kind '" + spec.kind + "'");
}

/// Single-port input from a scalar signal.
inline Input make_input(const SignalSpec& spec) {
  return [s = make_scalar_signal(spec)](double t) { return Vector::Constant(1, s(t)); };
}

inline Input zero_input(Index m = 1) {
  return [m](double) { return Vector::Zero(m); };
}

}  // namespace phrom
