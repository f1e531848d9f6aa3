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

#include "subnav/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "subnav/rng.hpp"

namespace subnav::world {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Distance reported when a grid has no feature cells at all (all free or
// all occupied).
constexpr double kNoFeatureDistance = 1.0e9;

}  // namespace

bool VoxelWorld::cell_of(const Vec3& p, int& i, int& j, int& k) const {
  const Vec3 q = (p - origin) / resolution;
  i = static_cast<int>(std::floor(q.x() + 0.5));
  j = static_cast<int>(std::floor(q.y() + 0.5));
  k = static_cast<int>(std::floor(q.z() + 0.5));
  return in_bounds(i, j, k);
}

double VoxelWorld::occupied_fraction() const {
  size_t n = 0;
  for (uint8_t v : occ) n += (v != 0);
  return static_cast<double>(n) / static_cast<double>(occ.size());
}

namespace {

VoxelWorld make_enclosed(double side_m, double resolution) {
  VoxelWorld w;
  w.resolution = resolution;
  w.nx = w.ny = w.nz = static_cast<int>(std::lround(side_m / resolution));
  w.origin = Vec3::Constant(resolution / 2.0);
  w.occ.assign(w.cell_count(), 0);
  for (int k = 0; k < w.nz; ++k)
    for (int j = 0; j < w.ny; ++j)
      for (int i = 0; i < w.nx; ++i)
        if (i == 0 || j == 0 || k == 0 || i == w.nx - 1 || j == w.ny - 1 || k == w.nz - 1)
          w.set_occupied(i, j, k);
  return w;
}

}  // namespace

VoxelWorld gen_block(double resolution) {
  VoxelWorld w = make_enclosed(30.0, resolution);
  const double lo = 15.0 - 7.0, hi = 15.0 + 7.0;
  for (int k = 0; k < w.nz; ++k)
    for (int j = 0; j < w.ny; ++j)
      for (int i = 0; i < w.nx; ++i) {
        const Vec3 c = w.cell_center(i, j, k);
        if (c.x() >= lo && c.x() <= hi && c.y() >= lo && c.y() <= hi &&
            c.z() >= lo && c.z() <= hi)
          w.set_occupied(i, j, k);
      }
  return w;
}

VoxelWorld gen_pillars(uint64_t seed, double resolution) {
  VoxelWorld w = make_enclosed(30.0, resolution);
  constexpr int kPillars = 23;
  constexpr double kRadius = 1.0;
  constexpr double kMinCenterDist = 2.5;  // 0.5 m clearance between footprints
  constexpr int kMaxAttempts = 20000;

  Rng rng = Rng::from_keys(seed, hash_key("pillars"));
  std::vector<Eigen::Vector2d> centers;
  int attempts = 0;
  while (static_cast<int>(centers.size()) < kPillars) {
    if (++attempts > kMaxAttempts) {
      throw GenerationError("pillar placement failed after bounded retries");
    }
    Eigen::Vector2d c(rng.uniform(2.0, 28.0), rng.uniform(2.0, 28.0));
    bool ok = true;
    for (const auto& o : centers) {
      if ((c - o).norm() < kMinCenterDist) {
        ok = false;
        break;
      }
    }
    if (ok) centers.push_back(c);
  }

  for (int j = 0; j < w.ny; ++j)
    for (int i = 0; i < w.nx; ++i) {
      const Vec3 cc = w.cell_center(i, j, 0);
      const Eigen::Vector2d p(cc.x(), cc.y());
      for (const auto& c : centers) {
        if ((p - c).norm() <= kRadius) {
          for (int k = 0; k < w.nz; ++k) w.set_occupied(i, j, k);
          break;
        }
      }
    }
  return w;
}

namespace {

// 1-D squared-distance transform (lower envelope of parabolas), exact.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (f[v[0]] == kInf) {
      v[0] = q;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    if (f[v[0]] == kInf) {
      d[q] = kInf;
      continue;
    }
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Exact squared Euclidean cell-unit distance to the nearest cell where
// feature(i,j,k) is true.
template <typename Pred>
std::vector<double> squared_edt(const VoxelWorld& w, Pred feature) {
  const int nx = w.nx, ny = w.ny, nz = w.nz;
  std::vector<double> dist(w.cell_count());
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        dist[w.index(i, j, k)] = feature(i, j, k) ? 0.0 : kInf;

  const int nmax = std::max({nx, ny, nz});
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  // x pass
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) f[i] = dist[w.index(i, j, k)];
      edt_1d(f, d, nx, v, z);
      for (int i = 0; i < nx; ++i) dist[w.index(i, j, k)] = d[i];
    }
  // y pass
  for (int k = 0; k < nz; ++k)
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) f[j] = dist[w.index(i, j, k)];
      edt_1d(f, d, ny, v, z);
      for (int j = 0; j < ny; ++j) dist[w.index(i, j, k)] = d[j];
    }
  // z pass
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      for (int k = 0; k < nz; ++k) f[k] = dist[w.index(i, j, k)];
      edt_1d(f, d, nz, v, z);
      for (int k = 0; k < nz; ++k) dist[w.index(i, j, k)] = d[k];
    }
  return dist;
}

}  // namespace

SdfGrid compute_sdf(const VoxelWorld& w) {
  SdfGrid g;
  g.nx = w.nx;
  g.ny = w.ny;
  g.nz = w.nz;
  g.resolution = w.resolution;
  g.origin = w.origin;
  g.value.resize(w.cell_count());

  const auto d2occ = squared_edt(w, [&](int i, int j, int k) { return w.occupied(i, j, k); });
  const auto d2free = squared_edt(w, [&](int i, int j, int k) { return !w.occupied(i, j, k); });

  for (size_t n = 0; n < g.value.size(); ++n) {
    if (w.occ[n]) {
      g.value[n] = (d2free[n] == kInf) ? -kNoFeatureDistance
                                       : -w.resolution * std::sqrt(d2free[n]);
    } else {
      g.value[n] = (d2occ[n] == kInf) ? kNoFeatureDistance
                                      : w.resolution * std::sqrt(d2occ[n]);
    }
  }
  return g;
}

VoxelWorld dilate(const VoxelWorld& w, double radius) {
  if (radius < 0) throw ConfigError("dilate: radius must be >= 0");
  const SdfGrid sdf = compute_sdf(w);
  VoxelWorld out = w;
  for (size_t n = 0; n < out.occ.size(); ++n) out.occ[n] = (sdf.value[n] <= radius) ? 1 : 0;
  return out;
}

namespace {

struct Move {
  int di, dj, dk;
  int sq;  // squared cell-unit length, in {1,2,3}
};

std::vector<Move> make_moves() {
  std::vector<Move> m;
  for (int dk = -1; dk <= 1; ++dk)
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int sq = di * di + dj * dj + dk * dk;
        if (sq > 0) m.push_back({di, dj, dk, sq});
      }
  return m;
}

// A diagonal move is allowed only if every axis-aligned "corner" cell it
// sweeps past is free.
bool move_clear(const VoxelWorld& w, int i, int j, int k, const Move& m) {
  if (m.sq == 1) return true;
  const int ds[3] = {m.di, m.dj, m.dk};
  for (int mask = 1; mask < 7; ++mask) {
    int o[3] = {0, 0, 0};
    for (int a = 0; a < 3; ++a)
      if (mask & (1 << a)) o[a] = ds[a];
    if (o[0] == ds[0] && o[1] == ds[1] && o[2] == ds[2]) continue;  // the target itself
    if (o[0] == 0 && o[1] == 0 && o[2] == 0) continue;
    const int ci = i + o[0], cj = j + o[1], ck = k + o[2];
    if (!w.in_bounds(ci, cj, ck) || w.occupied(ci, cj, ck)) return false;
  }
  return true;
}

double path_length_from_counts(double resolution, int64_t n1, int64_t n2, int64_t n3) {
  return resolution * (static_cast<double>(n1) +
                       static_cast<double>(n2) * std::sqrt(2.0) +
                       static_cast<double>(n3) * std::sqrt(3.0));
}

uint64_t lex_key(int i, int j, int k) {
  return (static_cast<uint64_t>(i) << 42) | (static_cast<uint64_t>(j) << 21) |
         static_cast<uint64_t>(k);
}

}  // namespace

GridPath astar(const VoxelWorld& w, const Vec3& start, const Vec3& goal) {
  int si, sj, sk, gi, gj, gk;
  if (!w.cell_of(start, si, sj, sk) || w.occupied(si, sj, sk))
    throw PlanningError("astar: start cell is blocked or outside the map");
  if (!w.cell_of(goal, gi, gj, gk) || w.occupied(gi, gj, gk))
    throw PlanningError("astar: goal cell is blocked or outside the map");

  static const std::vector<Move> moves = make_moves();
  const size_t ncells = w.cell_count();
  std::vector<double> g(ncells, kInf);
  std::vector<int64_t> parent(ncells, -1);
  std::vector<uint8_t> closed(ncells, 0);

  const Vec3 goal_c = w.cell_center(gi, gj, gk);
  auto heuristic = [&](int i, int j, int k) {
    return (w.cell_center(i, j, k) - goal_c).norm();
  };

  struct QEntry {
    double f;
    uint64_t lex;
    int i, j, k;
    bool operator>(const QEntry& o) const {
      if (f != o.f) return f > o.f;
      return lex > o.lex;
    }
  };
  std::priority_queue<QEntry, std::vector<QEntry>, std::greater<QEntry>> open;

  const size_t sidx = w.index(si, sj, sk);
  g[sidx] = 0.0;
  open.push({heuristic(si, sj, sk), lex_key(si, sj, sk), si, sj, sk});

  const size_t gidx = w.index(gi, gj, gk);
  while (!open.empty()) {
    const QEntry cur = open.top();
    open.pop();
    const size_t cidx = w.index(cur.i, cur.j, cur.k);
    if (closed[cidx]) continue;
    closed[cidx] = 1;
    if (cidx == gidx) break;

    for (const Move& m : moves) {
      const int ni = cur.i + m.di, nj = cur.j + m.dj, nk = cur.k + m.dk;
      if (!w.in_bounds(ni, nj, nk) || w.occupied(ni, nj, nk)) continue;
      if (!move_clear(w, cur.i, cur.j, cur.k, m)) continue;
      const size_t nidx = w.index(ni, nj, nk);
      if (closed[nidx]) continue;
      const double ng = g[cidx] + w.resolution * std::sqrt(static_cast<double>(m.sq));
      if (ng < g[nidx]) {
        g[nidx] = ng;
        parent[nidx] = static_cast<int64_t>(cidx);
        open.push({ng + heuristic(ni, nj, nk), lex_key(ni, nj, nk), ni, nj, nk});
      }
    }
  }

  if (!closed[gidx]) throw PlanningError("astar: goal unreachable");

  GridPath path;
  // Walk back to the start, then reverse.
  size_t idx = gidx;
  for (;;) {
    const int i = static_cast<int>(idx % w.nx);
    const int j = static_cast<int>((idx / w.nx) % w.ny);
    const int k = static_cast<int>(idx / (static_cast<size_t>(w.nx) * w.ny));
    path.cells.emplace_back(i, j, k);
    if (idx == sidx) break;
    idx = static_cast<size_t>(parent[idx]);
  }
  std::reverse(path.cells.begin(), path.cells.end());

  int64_t n1 = 0, n2 = 0, n3 = 0;
  for (size_t n = 1; n < path.cells.size(); ++n) {
    const Eigen::Vector3i d = path.cells[n] - path.cells[n - 1];
    const int sq = d.squaredNorm();
    if (sq == 1) ++n1;
    else if (sq == 2) ++n2;
    else ++n3;
  }
  path.length_m = path_length_from_counts(w.resolution, n1, n2, n3);
  return path;
}

SphereCorridor build_corridor(const SdfGrid& sdf_dilated, const GridPath& path,
                              const Vec3& s_init, const Vec3& s_goal,
                              double margin, int max_spheres) {
  if (path.cells.empty()) throw PlanningError("build_corridor: empty path");

  // Polyline: start position, cell centers, goal position.
  std::vector<Vec3> pts;
  pts.push_back(s_init);
  for (const auto& c : path.cells) {
    const Vec3 p = sdf_dilated.cell_center(c.x(), c.y(), c.z());
    if ((p - pts.back()).norm() > 1e-12) pts.push_back(p);
  }
  if ((s_goal - pts.back()).norm() > 1e-12) pts.push_back(s_goal);

  std::vector<double> cum(pts.size(), 0.0);
  for (size_t n = 1; n < pts.size(); ++n)
    cum[n] = cum[n - 1] + (pts[n] - pts[n - 1]).norm();
  const double total = cum.back();

  auto point_at = [&](double arc) -> Vec3 {
    if (arc <= 0.0) return pts.front();
    if (arc >= total) return pts.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), arc);
    const size_t n = static_cast<size_t>(it - cum.begin());
    const double seg = cum[n] - cum[n - 1];
    const double a = (arc - cum[n - 1]) / seg;
    return pts[n - 1] + a * (pts[n] - pts[n - 1]);
  };

  SphereCorridor corr;
  double arc = 0.0;
  for (;;) {
    if (static_cast<int>(corr.spheres.size()) >= max_spheres)
      throw PlanningError("build_corridor: sphere cap reached");
    const Vec3 center = point_at(arc);
    const double radius = sdf_query(sdf_dilated, center) - margin;
    if (radius <= margin)
      throw PlanningError("build_corridor: path too tight (sphere radius fell to margin)");
    corr.spheres.push_back({center, radius});
    if ((s_goal - center).norm() <= radius) break;
    arc = std::min(arc + radius, total);
  }
  return corr;
}

double sdf_query(const SdfGrid& g, const Vec3& point) {
  const Vec3 q = (point - g.origin) / g.resolution;
  // Grid volume: half a cell beyond the outermost cell centers.
  if (q.x() < -0.5 || q.y() < -0.5 || q.z() < -0.5 || q.x() > g.nx - 0.5 ||
      q.y() > g.ny - 0.5 || q.z() > g.nz - 0.5)
    return kOutOfBoundsSdf;

  const auto axis = [](double v, int n, int& i0, int& i1, double& t) {
    const double f = std::floor(v);
    i0 = static_cast<int>(f);
    t = v - f;
    i1 = i0 + 1;
    i0 = std::clamp(i0, 0, n - 1);
    i1 = std::clamp(i1, 0, n - 1);
  };
  int x0, x1, y0, y1, z0, z1;
  double tx, ty, tz;
  axis(q.x(), g.nx, x0, x1, tx);
  axis(q.y(), g.ny, y0, y1, ty);
  axis(q.z(), g.nz, z0, z1, tz);

  const double c000 = g.at(x0, y0, z0), c100 = g.at(x1, y0, z0);
  const double c010 = g.at(x0, y1, z0), c110 = g.at(x1, y1, z0);
  const double c001 = g.at(x0, y0, z1), c101 = g.at(x1, y0, z1);
  const double c011 = g.at(x0, y1, z1), c111 = g.at(x1, y1, z1);

  const double c00 = c000 * (1 - tx) + c100 * tx;
  const double c10 = c010 * (1 - tx) + c110 * tx;
  const double c01 = c001 * (1 - tx) + c101 * tx;
  const double c11 = c011 * (1 - tx) + c111 * tx;
  const double c0 = c00 * (1 - ty) + c10 * ty;
  const double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

void save_voxel(const VoxelWorld& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  char header[256];
  std::snprintf(header, sizeof(header), "VOXELMAP v1 %d %d %d %.17g %.17g %.17g %.17g\n",
                w.nx, w.ny, w.nz, w.resolution, w.origin.x(), w.origin.y(), w.origin.z());
  out << header;
  std::vector<uint8_t> bytes((w.cell_count() + 7) / 8, 0);
  for (size_t n = 0; n < w.cell_count(); ++n)
    if (w.occ[n]) bytes[n / 8] |= static_cast<uint8_t>(1u << (n % 8));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

VoxelWorld load_voxel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing VOXELMAP header: " + path);
  std::istringstream hs(line);
  std::string magic, version;
  VoxelWorld w;
  hs >> magic >> version >> w.nx >> w.ny >> w.nz >> w.resolution >> w.origin.x() >>
      w.origin.y() >> w.origin.z();
  if (!hs || magic != "VOXELMAP" || version != "v1")
    throw IoError("bad VOXELMAP header: " + path);
  if (w.nx < 1 || w.ny < 1 || w.nz < 1 || w.resolution <= 0)
    throw IoError("bad VOXELMAP dimensions: " + path);
  std::vector<uint8_t> bytes((w.cell_count() + 7) / 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("truncated VOXELMAP payload: " + path);
  w.occ.assign(w.cell_count(), 0);
  for (size_t n = 0; n < w.cell_count(); ++n)
    w.occ[n] = (bytes[n / 8] >> (n % 8)) & 1u;
  return w;
}

}  // namespace subnav::world
