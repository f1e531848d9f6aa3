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

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subnav/common.hpp"

namespace subnav::world {

/// Planning failed for a reason the caller should report as task failure
/// (unreachable goal, corridor too tight), not as a crash.
class PlanningError : public Error {
 public:
  explicit PlanningError(const std::string& what) : Error(what) {}
};

/// Returned by sdf_query for points outside the grid volume. Environments
/// are enclosed, so out of bounds means deep inside the boundary walls.
inline constexpr double kOutOfBoundsSdf = -1.0e6;

// Occupancy grid. `origin` is the world position of the center of cell
// (0,0,0); cell (i,j,k) is centered at origin + resolution*(i,j,k) and the
// grid volume extends half a cell beyond the outermost centers. Storage is
// x-fastest: index = i + nx*(j + ny*k). The world frame is +z-up.
struct VoxelWorld {
  int nx = 0, ny = 0, nz = 0;
  double resolution = 0.5;
  Vec3 origin = Vec3::Zero();
  std::vector<uint8_t> occ;

  size_t index(int i, int j, int k) const {
    return static_cast<size_t>(i) + static_cast<size_t>(nx) * (static_cast<size_t>(j) + static_cast<size_t>(ny) * k);
  }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
  }
  bool occupied(int i, int j, int k) const { return occ[index(i, j, k)] != 0; }
  void set_occupied(int i, int j, int k, bool v = true) { occ[index(i, j, k)] = v ? 1 : 0; }

  Vec3 cell_center(int i, int j, int k) const {
    return origin + resolution * Vec3(i, j, k);
  }
  /// Cell containing a world point. Returns false if outside the volume.
  bool cell_of(const Vec3& p, int& i, int& j, int& k) const;

  size_t cell_count() const { return static_cast<size_t>(nx) * ny * nz; }
  double occupied_fraction() const;
};

// Signed distances at cell centers: positive in free space (distance to the
// nearest occupied cell center), negative inside obstacles (minus distance
// to the nearest free cell center).
struct SdfGrid {
  int nx = 0, ny = 0, nz = 0;
  double resolution = 0.5;
  Vec3 origin = Vec3::Zero();
  std::vector<double> value;

  size_t index(int i, int j, int k) const {
    return static_cast<size_t>(i) + static_cast<size_t>(nx) * (static_cast<size_t>(j) + static_cast<size_t>(ny) * k);
  }
  double at(int i, int j, int k) const { return value[index(i, j, k)]; }
  Vec3 cell_center(int i, int j, int k) const {
    return origin + resolution * Vec3(i, j, k);
  }
};

// 26-connected grid path. `length_m` is the exact metric length computed
// from the counts of axis/face-diagonal/corner-diagonal moves, so two
// equal-length paths always report bit-identical lengths.
struct GridPath {
  std::vector<Eigen::Vector3i> cells;
  double length_m = 0.0;
};

struct Sphere {
  Vec3 center;
  double radius;
};

// Ordered overlapping free spheres covering the grid path from the start
// position to (a sphere containing) the goal position.
struct SphereCorridor {
  std::vector<Sphere> spheres;
};

/// Enclosed 30x30x30 m world with a centered 14 m cube obstacle.
VoxelWorld gen_block(double resolution = 0.5);

/// Enclosed 30x30x30 m world with 23 full-height pillars of 2 m diameter at
/// seeded non-overlapping positions. Throws GenerationError if placement
/// fails after bounded retries.
VoxelWorld gen_pillars(uint64_t seed, double resolution = 0.5);

/// Exact Euclidean signed distance field at cell-center granularity.
SdfGrid compute_sdf(const VoxelWorld& w);

/// Cell occupied iff some originally-occupied cell center lies within
/// `radius` (equivalently: compute_sdf(w) <= radius).
VoxelWorld dilate(const VoxelWorld& w, double radius);

/// Metric-shortest 26-connected path between the cells containing `start`
/// and `goal`. Corner cutting past diagonally adjacent occupied cells is
/// forbidden. Ties broken by lexicographic (i,j,k). Throws PlanningError if
/// start/goal are blocked or no path exists.
GridPath astar(const VoxelWorld& dilated, const Vec3& start, const Vec3& goal);

/// Grow overlapping spheres along the path polyline (start position, cell
/// centers, goal position): each sphere's radius is the dilated-map SDF at
/// its center minus `margin`; the next center sits further along the
/// polyline by the previous radius. Throws PlanningError when a radius
/// falls to `margin` or the sphere cap is hit.
SphereCorridor build_corridor(const SdfGrid& sdf_dilated, const GridPath& path,
                              const Vec3& s_init, const Vec3& s_goal,
                              double margin = 0.05, int max_spheres = 64);

/// Planning-time dilation radius. Center-to-center dilation under-represents
/// the physical obstacle region by up to a half cell, so planning maps are
/// dilated a little beyond the vehicle radius.
inline double planning_dilation(double vehicle_radius, double resolution) {
  return vehicle_radius + 0.55 * resolution;
}

/// Trilinear interpolation of the cell-centered field; clamps the sample
/// lattice at the grid edge and returns kOutOfBoundsSdf outside the volume.
double sdf_query(const SdfGrid& g, const Vec3& point);

/// VOXELMAP v1 file: text header `VOXELMAP v1 nx ny nz resolution ox oy oz`
/// then row-major bit-packed occupancy (x fastest, LSB-first bytes).
void save_voxel(const VoxelWorld& w, const std::string& path);
VoxelWorld load_voxel(const std::string& path);

}  // namespace subnav::world
