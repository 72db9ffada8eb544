#pragma once

#include "ppgm/prox.hpp"
#include "ppgm/types.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace ppgm {

/// Uniform axis with `count` nodes on [lower, upper].
struct Axis {
  double lower = -1.0;
  double upper = 1.0;
  int count = 2;

  double step() const { return (upper - lower) / (count - 1); }
  /// Node coordinate; symmetric axes with odd count hit 0 exactly.
  double node(int i) const { return ((count - 1 - i) * lower + i * upper) / (count - 1); }
};

class SpaceGrid {
 public:
  SpaceGrid() = default;
  explicit SpaceGrid(std::vector<Axis> axes);

  /// [-radius, radius]^n with spacing as close to dx as an integer node count allows.
  static SpaceGrid cube(int n, double radius, double dx);

  int dim() const { return static_cast<int>(axes_.size()); }
  std::size_t size() const { return size_; }
  const Axis& axis(int j) const { return axes_[j]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t stride(int j) const { return strides_[j]; }

  Vec node(std::size_t flat) const;
  int index_along(std::size_t flat, int j) const { return static_cast<int>((flat / strides_[j]) % axes_[j].count); }

  bool contains(const Vec& x) const;
  bool operator==(const SpaceGrid& o) const;

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Vector-valued function sampled on time knots x space grid. Between nodes it
/// is multilinear in space and linear in time; outside the box it continues
/// linearly with the boundary-cell gradient.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(std::vector<double> times, SpaceGrid space, int components);

  const std::vector<double>& times() const { return times_; }
  const SpaceGrid& space() const { return space_; }
  int components() const { return comps_; }
  std::size_t time_count() const { return times_.size(); }

  double* data(std::size_t ti, std::size_t node) { return &values_[(ti * space_.size() + node) * comps_]; }
  const double* data(std::size_t ti, std::size_t node) const { return &values_[(ti * space_.size() + node) * comps_]; }
  Vec value(std::size_t ti, std::size_t node) const;
  void set(std::size_t ti, std::size_t node, const Vec& v);
  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }

  /// Evaluation at time knot ti.
  Vec eval_knot(std::size_t ti, const Vec& x) const;
  /// Evaluation at arbitrary t in [t_0, t_last].
  Vec eval(double t, const Vec& x) const;
  /// Spatial Jacobian (components x n) of the interpolant.
  Mat jacobian(double t, const Vec& x) const;

  bool same_layout(const GridFunction& o) const;

  /// Columnar text: t, x_1..x_n, v_1..v_c, with a comment header describing the grid.
  void write_csv(std::ostream& os, const std::vector<std::string>& header_lines = {},
                 const std::vector<std::string>& value_names = {}) const;
  static GridFunction read_csv(std::istream& is);
  void write_binary(std::ostream& os) const;
  static GridFunction read_binary(std::istream& is);

  bool operator==(const GridFunction& o) const;

 private:
  void locate_time(double t, std::size_t& i0, double& w) const;
  void interp(std::size_t ti, const Vec& x, Vec& out, Mat* jac) const;

  std::vector<double> times_;
  SpaceGrid space_;
  int comps_ = 0;
  std::vector<double> values_;
};

/// Uniform time knots 0 = t_0 < ... < t_N = horizon with N = ceil(horizon / dt).
std::vector<double> uniform_times(double horizon, double dt);

/// Feedback policy phi_t(x) on a grid; every stored action is feasible for ell.
class PolicyGrid {
 public:
  PolicyGrid() = default;
  PolicyGrid(GridFunction values, NonsmoothCost ell);

  static PolicyGrid from_function(std::vector<double> times, SpaceGrid space, int control_dim, NonsmoothCost ell,
                                  const std::function<Vec(double, const Vec&)>& fn);
  static PolicyGrid constant(std::vector<double> times, SpaceGrid space, const Vec& a, NonsmoothCost ell);

  /// Interpolated action, projected into A if extrapolation leaves it.
  Vec eval(double t, const Vec& x) const;

  const GridFunction& values() const { return values_; }
  GridFunction& mutable_values() { return values_; }
  const NonsmoothCost& cost() const { return ell_; }
  int control_dim() const { return values_.components(); }
  int state_dim() const { return values_.space().dim(); }

  /// Throws InfeasibleError naming the first infeasible node.
  void check_feasible(double tol = 1e-9) const;

 private:
  GridFunction values_;
  NonsmoothCost ell_;
};

struct PolicyNorms {
  double weighted_sup = 0.0;  // |phi|_0
  double lipschitz = 0.0;     // [phi]_1
  double center_bound = 0.0;  // sup_t |phi_t(0)|
};

/// max over nodes of |p - q| / (1 + |x|).
double weighted_sup_distance(const GridFunction& p, const GridFunction& q);
double weighted_sup_distance(const PolicyGrid& p, const PolicyGrid& q);
double weighted_sup_norm(const GridFunction& p);

/// Max over knots and cells of the spectral norm of the cell Jacobian, taken at
/// the cell corners (exact for multilinear pieces).
double lipschitz_seminorm(const GridFunction& p);
double lipschitz_seminorm(const PolicyGrid& p);

/// sup over time knots of |phi_t(0)|.
double center_bound(const PolicyGrid& p);

PolicyNorms policy_norms(const PolicyGrid& p);

}  // namespace ppgm
