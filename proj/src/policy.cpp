#include "ppgm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace ppgm {

SpaceGrid::SpaceGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > static_cast<size_t>(kMaxDim))
    throw DimensionError("space grid: dimension must lie in [1, 3]");
  size_ = 1;
  strides_.assign(axes_.size(), 1);
  // Last axis varies fastest.
  for (int j = static_cast<int>(axes_.size()) - 1; j >= 0; --j) {
    const Axis& a = axes_[j];
    if (a.count < 2 || !(a.upper > a.lower) || !std::isfinite(a.lower) || !std::isfinite(a.upper))
      throw InputError("space grid: each axis needs count >= 2 and lower < upper");
    strides_[j] = size_;
    size_ *= static_cast<size_t>(a.count);
  }
}

SpaceGrid SpaceGrid::cube(int n, double radius, double dx) {
  if (!(radius > 0.0) || !(dx > 0.0)) throw InputError("space grid: radius and dx must be > 0");
  const int cells = std::max(1, static_cast<int>(std::lround(2.0 * radius / dx)));
  return SpaceGrid(std::vector<Axis>(n, Axis{-radius, radius, cells + 1}));
}

Vec SpaceGrid::node(size_t flat) const {
  Vec x(dim());
  for (int j = 0; j < dim(); ++j) x(j) = axes_[j].node(index_along(flat, j));
  return x;
}

bool SpaceGrid::contains(const Vec& x) const {
  for (int j = 0; j < dim(); ++j)
    if (x(j) < axes_[j].lower || x(j) > axes_[j].upper) return false;
  return true;
}

bool SpaceGrid::operator==(const SpaceGrid& o) const {
  if (axes_.size() != o.axes_.size()) return false;
  for (size_t j = 0; j < axes_.size(); ++j)
    if (axes_[j].lower != o.axes_[j].lower || axes_[j].upper != o.axes_[j].upper || axes_[j].count != o.axes_[j].count)
      return false;
  return true;
}

std::vector<double> uniform_times(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw InputError("time grid: horizon and dt must be > 0");
  const auto steps = static_cast<size_t>(std::max(1.0, std::ceil(horizon / dt - 1e-9)));
  std::vector<double> t(steps + 1);
  for (size_t i = 0; i <= steps; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
  return t;
}

GridFunction::GridFunction(std::vector<double> times, SpaceGrid space, int components)
    : times_(std::move(times)), space_(std::move(space)), comps_(components) {
  if (times_.empty()) throw InputError("grid function: no time knots");
  for (size_t i = 1; i < times_.size(); ++i)
    if (!(times_[i] > times_[i - 1])) throw InputError("grid function: time knots must be strictly increasing");
  if (components < 1 || components > kMaxDim * kMaxDim) throw DimensionError("grid function: bad component count");
  values_.assign(times_.size() * space_.size() * static_cast<size_t>(comps_), 0.0);
}

Vec GridFunction::value(size_t ti, size_t node) const {
  return Eigen::Map<const Eigen::VectorXd>(data(ti, node), comps_);
}

void GridFunction::set(size_t ti, size_t node, const Vec& v) {
  if (v.size() != comps_) throw DimensionError("grid function: value has wrong dimension");
  std::copy(v.data(), v.data() + comps_, data(ti, node));
}

void GridFunction::interp(size_t ti, const Vec& x, Vec& out, Mat* jac) const {
  const int n = space_.dim();
  if (x.size() != n) throw DimensionError("grid function: point has wrong dimension");
  int cell[kMaxDim];
  double s[kMaxDim];
  double h[kMaxDim];
  Vec xc = x;
  bool outside = false;
  for (int j = 0; j < n; ++j) {
    const Axis& ax = space_.axis(j);
    h[j] = ax.step();
    if (xc(j) < ax.lower) xc(j) = ax.lower, outside = true;
    if (xc(j) > ax.upper) xc(j) = ax.upper, outside = true;
    int i = static_cast<int>(std::floor((xc(j) - ax.lower) / h[j]));
    i = std::clamp(i, 0, ax.count - 2);
    cell[j] = i;
    s[j] = (xc(j) - ax.node(i)) / h[j];
  }
  out = Vec::Zero(comps_);
  const bool need_jac = jac != nullptr || outside;
  Mat J;
  if (need_jac) J = Mat::Zero(comps_, n);
  size_t base = 0;
  for (int j = 0; j < n; ++j) base += static_cast<size_t>(cell[j]) * space_.stride(j);
  for (int c = 0; c < (1 << n); ++c) {
    size_t idx = base;
    double w = 1.0;
    for (int j = 0; j < n; ++j) {
      const bool up = (c >> j) & 1;
      idx += up ? space_.stride(j) : 0;
      w *= up ? s[j] : 1.0 - s[j];
    }
    const double* v = data(ti, idx);
    for (int q = 0; q < comps_; ++q) out(q) += w * v[q];
    if (need_jac) {
      for (int j = 0; j < n; ++j) {
        double dw = ((c >> j) & 1) ? 1.0 : -1.0;
        for (int l = 0; l < n; ++l)
          if (l != j) dw *= ((c >> l) & 1) ? s[l] : 1.0 - s[l];
        for (int q = 0; q < comps_; ++q) J(q, j) += dw / h[j] * v[q];
      }
    }
  }
  if (outside) out += J * (x - xc);
  if (jac) *jac = J;
}

Vec GridFunction::eval_knot(size_t ti, const Vec& x) const {
  Vec out;
  interp(ti, x, out, nullptr);
  return out;
}

void GridFunction::locate_time(double t, size_t& i0, double& w) const {
  const double t0 = times_.front(), t1 = times_.back();
  const double slack = 1e-12 * std::max(1.0, std::abs(t1 - t0));
  if (!(t >= t0 - slack && t <= t1 + slack)) {
    std::ostringstream os;
    os << "evaluation time " << t << " outside [" << t0 << ", " << t1 << "]";
    throw InputError(os.str());
  }
  if (times_.size() == 1) {
    i0 = 0;
    w = 0.0;
    return;
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  size_t i = static_cast<size_t>(std::distance(times_.begin(), it));
  i = std::clamp<size_t>(i, 1, times_.size() - 1) - 1;
  i0 = i;
  w = std::clamp((t - times_[i]) / (times_[i + 1] - times_[i]), 0.0, 1.0);
}

Vec GridFunction::eval(double t, const Vec& x) const {
  size_t i0;
  double w;
  locate_time(t, i0, w);
  Vec out = eval_knot(i0, x);
  if (w > 0.0) out = (1.0 - w) * out + w * eval_knot(i0 + 1, x);
  return out;
}

Mat GridFunction::jacobian(double t, const Vec& x) const {
  size_t i0;
  double w;
  locate_time(t, i0, w);
  Vec v;
  Mat j0, j1;
  interp(i0, x, v, &j0);
  if (w == 0.0) return j0;
  interp(i0 + 1, x, v, &j1);
  return (1.0 - w) * j0 + w * j1;
}

bool GridFunction::same_layout(const GridFunction& o) const {
  return comps_ == o.comps_ && times_ == o.times_ && space_ == o.space_;
}

bool GridFunction::operator==(const GridFunction& o) const { return same_layout(o) && values_ == o.values_; }

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr char kMagic[8] = {'P', 'P', 'G', 'M', 'G', 'R', 'I', 'D'};
constexpr std::uint32_t kBinaryVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("grid snapshot: truncated file");
  return v;
}

}  // namespace

void GridFunction::write_csv(std::ostream& os, const std::vector<std::string>& header_lines,
                             const std::vector<std::string>& value_names) const {
  for (const auto& h : header_lines) os << "# " << h << '\n';
  os << "# grid v1 n=" << space_.dim() << " components=" << comps_ << " times=" << times_.size() << '\n';
  for (int j = 0; j < space_.dim(); ++j)
    os << "# axis " << j << ' ' << fmt17(space_.axis(j).lower) << ' ' << fmt17(space_.axis(j).upper) << ' '
       << space_.axis(j).count << '\n';
  os << 't';
  for (int j = 0; j < space_.dim(); ++j) os << ",x" << j + 1;
  for (int q = 0; q < comps_; ++q)
    os << ',' << (q < static_cast<int>(value_names.size()) ? value_names[q] : "v" + std::to_string(q + 1));
  os << '\n';
  std::string line;
  for (size_t ti = 0; ti < times_.size(); ++ti) {
    const std::string ts = fmt17(times_[ti]);
    for (size_t k = 0; k < space_.size(); ++k) {
      line = ts;
      const Vec x = space_.node(k);
      for (int j = 0; j < space_.dim(); ++j) line += ',' + fmt17(x(j));
      const double* v = data(ti, k);
      for (int q = 0; q < comps_; ++q) line += ',' + fmt17(v[q]);
      os << line << '\n';
    }
  }
}

GridFunction GridFunction::read_csv(std::istream& is) {
  std::string line;
  int n = -1, comps = -1;
  size_t ntimes = 0;
  std::vector<Axis> axes;
  bool header_seen = false;
  std::vector<double> times;
  std::vector<double> values;
  size_t rows = 0, nodes = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string tag;
      ls >> tag;
      if (tag == "grid") {
        std::string ver, a, b, c;
        ls >> ver >> a >> b >> c;
        if (ver != "v1") throw InputError("grid csv: unsupported version " + ver);
        n = std::stoi(a.substr(a.find('=') + 1));
        comps = std::stoi(b.substr(b.find('=') + 1));
        ntimes = std::stoull(c.substr(c.find('=') + 1));
      } else if (tag == "axis") {
        int j;
        std::string lo, hi;
        int count;
        ls >> j >> lo >> hi >> count;
        axes.push_back(Axis{std::stod(lo), std::stod(hi), count});
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (n < 1 || comps < 1 || static_cast<int>(axes.size()) != n) throw InputError("grid csv: missing grid header");
      nodes = SpaceGrid(axes).size();
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != 1 + n + comps) throw InputError("grid csv: wrong column count");
    if (rows % nodes == 0) times.push_back(row[0]);
    values.insert(values.end(), row.begin() + 1 + n, row.end());
    ++rows;
  }
  if (!header_seen || times.size() != ntimes || rows != ntimes * nodes) throw InputError("grid csv: incomplete data");
  GridFunction g(std::move(times), SpaceGrid(axes), comps);
  g.values_ = std::move(values);
  return g;
}

void GridFunction::write_binary(std::ostream& os) const {
  os.write(kMagic, sizeof kMagic);
  put(os, kBinaryVersion);
  put(os, static_cast<std::int32_t>(space_.dim()));
  put(os, static_cast<std::int32_t>(comps_));
  put(os, static_cast<std::uint64_t>(times_.size()));
  for (const auto& a : space_.axes()) {
    put(os, a.lower);
    put(os, a.upper);
    put(os, static_cast<std::int32_t>(a.count));
  }
  os.write(reinterpret_cast<const char*>(times_.data()), static_cast<std::streamsize>(times_.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(values_.data()),
           static_cast<std::streamsize>(values_.size() * sizeof(double)));
}

GridFunction GridFunction::read_binary(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError("grid snapshot: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kBinaryVersion) throw InputError("grid snapshot: unsupported version " + std::to_string(version));
  const auto n = get<std::int32_t>(is);
  const auto comps = get<std::int32_t>(is);
  const auto nt = get<std::uint64_t>(is);
  if (n < 1 || n > kMaxDim || nt == 0 || nt > (1ull << 32)) throw InputError("grid snapshot: corrupt header");
  std::vector<Axis> axes;
  for (int j = 0; j < n; ++j) {
    Axis a;
    a.lower = get<double>(is);
    a.upper = get<double>(is);
    a.count = get<std::int32_t>(is);
    axes.push_back(a);
  }
  std::vector<double> times(nt);
  is.read(reinterpret_cast<char*>(times.data()), static_cast<std::streamsize>(nt * sizeof(double)));
  GridFunction g(std::move(times), SpaceGrid(axes), comps);
  is.read(reinterpret_cast<char*>(g.values_.data()), static_cast<std::streamsize>(g.values_.size() * sizeof(double)));
  if (!is) throw InputError("grid snapshot: truncated file");
  return g;
}

// ---------------------------------------------------------------------------

PolicyGrid::PolicyGrid(GridFunction values, NonsmoothCost ell) : values_(std::move(values)), ell_(std::move(ell)) {
  if (auto k = ell_.dimension(); k && *k != values_.components())
    throw DimensionError("policy: action dimension differs from the cost dimension");
  check_feasible();
}

PolicyGrid PolicyGrid::from_function(std::vector<double> times, SpaceGrid space, int control_dim, NonsmoothCost ell,
                                     const std::function<Vec(double, const Vec&)>& fn) {
  GridFunction g(std::move(times), std::move(space), control_dim);
  for (size_t ti = 0; ti < g.time_count(); ++ti)
    for (size_t k = 0; k < g.space().size(); ++k) g.set(ti, k, fn(g.times()[ti], g.space().node(k)));
  return PolicyGrid(std::move(g), std::move(ell));
}

PolicyGrid PolicyGrid::constant(std::vector<double> times, SpaceGrid space, const Vec& a, NonsmoothCost ell) {
  return from_function(std::move(times), std::move(space), static_cast<int>(a.size()), std::move(ell),
                       [&a](double, const Vec&) { return a; });
}

Vec PolicyGrid::eval(double t, const Vec& x) const {
  Vec a = values_.eval(t, x);
  if (!values_.space().contains(x) && !ell_.feasible(a, 0.0)) a = ell_.project_feasible(a);
  return a;
}

void PolicyGrid::check_feasible(double tol) const {
  const int k = values_.components();
  for (size_t ti = 0; ti < values_.time_count(); ++ti) {
    for (size_t node = 0; node < values_.space().size(); ++node) {
      const double* v = values_.data(ti, node);
      Vec a = Eigen::Map<const Eigen::VectorXd>(v, k);
      if (!a.allFinite() || !ell_.feasible(a, tol)) {
        std::ostringstream os;
        os << "policy: infeasible or non-finite action at time knot " << ti << ", node " << node << " (x = "
           << values_.space().node(node).transpose() << ")";
        throw InfeasibleError(os.str());
      }
    }
  }
}

double weighted_sup_distance(const GridFunction& p, const GridFunction& q) {
  if (!p.same_layout(q)) throw DimensionError("weighted sup distance: grids differ");
  const SpaceGrid& s = p.space();
  std::vector<double> weight(s.size());
  for (size_t k = 0; k < s.size(); ++k) weight[k] = 1.0 / (1.0 + s.node(k).norm());
  const int c = p.components();
  double best = 0.0;
  for (size_t ti = 0; ti < p.time_count(); ++ti) {
    for (size_t k = 0; k < s.size(); ++k) {
      const double* a = p.data(ti, k);
      const double* b = q.data(ti, k);
      double d2 = 0.0;
      for (int i = 0; i < c; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
      best = std::max(best, std::sqrt(d2) * weight[k]);
    }
  }
  return best;
}

double weighted_sup_distance(const PolicyGrid& p, const PolicyGrid& q) {
  return weighted_sup_distance(p.values(), q.values());
}

double weighted_sup_norm(const GridFunction& p) {
  GridFunction zero(p.times(), p.space(), p.components());
  return weighted_sup_distance(p, zero);
}

double lipschitz_seminorm(const GridFunction& p) {
  const SpaceGrid& s = p.space();
  const int n = s.dim();
  const int c = p.components();
  double best = 0.0;
  Mat J(c, n);
  for (size_t ti = 0; ti < p.time_count(); ++ti) {
    for (size_t base = 0; base < s.size(); ++base) {
      bool interior = true;
      for (int j = 0; j < n; ++j)
        if (s.index_along(base, j) >= s.axis(j).count - 1) interior = false;
      if (!interior) continue;
      // Jacobian at each corner: edge differences leaving that corner.
      for (int corner = 0; corner < (1 << n); ++corner) {
        size_t idx = base;
        for (int j = 0; j < n; ++j)
          if ((corner >> j) & 1) idx += s.stride(j);
        for (int j = 0; j < n; ++j) {
          const bool up = (corner >> j) & 1;
          const size_t lo = up ? idx - s.stride(j) : idx;
          const size_t hi = lo + s.stride(j);
          const double h = s.axis(j).step();
          const double* vl = p.data(ti, lo);
          const double* vh = p.data(ti, hi);
          for (int q = 0; q < c; ++q) J(q, j) = (vh[q] - vl[q]) / h;
        }
        best = std::max(best, op_norm(J));
        if (n == 1) break;
      }
    }
  }
  return best;
}

double lipschitz_seminorm(const PolicyGrid& p) { return lipschitz_seminorm(p.values()); }

double center_bound(const PolicyGrid& p) {
  const Vec origin = Vec::Zero(p.state_dim());
  double best = 0.0;
  for (size_t ti = 0; ti < p.values().time_count(); ++ti) best = std::max(best, p.values().eval_knot(ti, origin).norm());
  return best;
}

PolicyNorms policy_norms(const PolicyGrid& p) {
  return PolicyNorms{weighted_sup_norm(p.values()), lipschitz_seminorm(p), center_bound(p)};
}

}  // namespace ppgm
