// Copyright 2026 The subnav Authors.
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

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace subnav {

using Vec3 = Eigen::Vector3d;

// The dynamics frame has +z pointing with gravity; world maps are stored
// +z-up. Positions and velocities convert by flipping z at the simulator
// boundary. Attitude and body rates never cross that boundary.
inline Vec3 world_from_dyn(const Vec3& p) { return {p.x(), p.y(), -p.z()}; }
inline Vec3 dyn_from_world(const Vec3& p) { return {p.x(), p.y(), -p.z()}; }

/// Base class for all subnav errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Dynamics produced a non-finite state (e.g. pitch at the Euler singularity).
class DynamicsSingularityError : public Error {
 public:
  explicit DynamicsSingularityError(const std::string& what) : Error(what) {}
};

/// Bad or inconsistent configuration value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// File could not be read/written or has an invalid format.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

/// Environment generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error(what) {}
};

}  // namespace subnav
