// Copyright 2026 The NIRM Trajectory Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Test-only oracles: central finite differences and tolerance checks. Nothing
// here calls into the engine's adjoint sweep.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "nirm/ad/parameter_set.hpp"

namespace nirm::testing {

using ad::ParameterSet;
using ad::Tensor;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline ParameterSet random_like(const ParameterSet& layout, std::mt19937_64& rng, double lo, double hi) {
  ParameterSet out = layout.zeros_like();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (double& v : out.at(i).values()) v = uniform(rng, lo, hi);
  }
  return out;
}

inline Tensor<double> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

/// Central-difference gradient of a scalar function of a parameter set.
inline ParameterSet fd_gradient(const std::function<double(const ParameterSet&)>& f, const ParameterSet& at,
                                double step) {
  ParameterSet grad = at.zeros_like();
  ParameterSet probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    for (std::size_t j = 0; j < at.at(i).size(); ++j) {
      const double x0 = at.at(i)[j];
      probe.at(i)[j] = x0 + step;
      const double up = f(probe);
      probe.at(i)[j] = x0 - step;
      const double down = f(probe);
      probe.at(i)[j] = x0;
      grad.at(i)[j] = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

inline bool close(double a, double b, double rtol, double atol) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

/// Empty string when every entry agrees, otherwise a description of the
/// first disagreement.
inline std::string compare(const ParameterSet& got, const ParameterSet& want, double rtol, double atol) {
  if (!got.same_layout(want)) return "layout mismatch";
  for (std::size_t i = 0; i < got.size(); ++i) {
    for (std::size_t j = 0; j < got.at(i).size(); ++j) {
      if (!close(got.at(i)[j], want.at(i)[j], rtol, atol)) {
        std::ostringstream os;
        os.precision(12);
        os << got.name(i) << "[" << j << "]: got " << got.at(i)[j] << " want " << want.at(i)[j];
        return os.str();
      }
    }
  }
  return {};
}

}  // namespace nirm::testing
