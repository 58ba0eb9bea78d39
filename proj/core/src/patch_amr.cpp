#include "amrlab/patch_amr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace amrlab {

IndexBox IndexBox::coarsened(int r) const {
  auto fdiv = [r](int a) { return a >= 0 ? a / r : -((-a + r - 1) / r); };
  return {fdiv(ilo), fdiv(jlo), fdiv(ihi), fdiv(jhi), level - 1};
}

long TagGrid::count() const {
  long n = 0;
  for (char c : flag) n += c != 0;
  return n;
}

void ClusterParams::validate() const {
  if (!(efficiency > 0.0 && efficiency <= 1.0))
    throw std::invalid_argument("cluster efficiency must lie in (0, 1]");
  if (blocking < 1) throw std::invalid_argument("blocking factor must be >= 1");
  if (max_size < blocking || max_size % blocking != 0)
    throw std::invalid_argument("max_size must be a positive multiple of the blocking factor");
}

// ---------------------------------------------------------------------------
// Berger-Rigoutsos

namespace {

struct BlockBox {
  int i0, j0, i1, j1;
  int w() const { return i1 - i0 + 1; }
  int h() const { return j1 - j0 + 1; }
};

class Clusterer {
 public:
  Clusterer(const TagGrid& tags, const ClusterParams& p, const std::vector<char>* allowed)
      : p_(p), b_(p.blocking), nbx_(tags.nx / p.blocking), nby_(tags.ny / p.blocking) {
    count_.assign(std::size_t(nbx_) * nby_, 0);
    allowed_.assign(count_.size(), 1);
    if (allowed) {
      if (allowed->size() != count_.size())
        throw std::invalid_argument("berger_rigoutsos: allowed mask has the wrong size");
      allowed_ = *allowed;
    }
    for (int j = 0; j < tags.ny; ++j)
      for (int i = 0; i < tags.nx; ++i) {
        const std::size_t b = std::size_t(j / b_) * nbx_ + i / b_;
        if (tags.at(i, j) && allowed_[b]) ++count_[b];
      }
  }

  std::vector<IndexBox> run() {
    if (nbx_ > 0 && nby_ > 0) split({0, 0, nbx_ - 1, nby_ - 1});
    return std::move(out_);
  }

 private:
  long at(int i, int j) const { return count_[std::size_t(j) * nbx_ + i]; }

  bool shrink(BlockBox& b) const {
    int i0 = b.i1 + 1, i1 = b.i0 - 1, j0 = b.j1 + 1, j1 = b.j0 - 1;
    for (int j = b.j0; j <= b.j1; ++j)
      for (int i = b.i0; i <= b.i1; ++i)
        if (at(i, j) > 0) {
          i0 = std::min(i0, i);
          i1 = std::max(i1, i);
          j0 = std::min(j0, j);
          j1 = std::max(j1, j);
        }
    if (i1 < i0) return false;
    b = {i0, j0, i1, j1};
    return true;
  }

  void split(BlockBox box) {
    if (!shrink(box)) return;
    long tagged = 0;
    bool all_allowed = true;
    for (int j = box.j0; j <= box.j1; ++j)
      for (int i = box.i0; i <= box.i1; ++i) {
        tagged += at(i, j);
        all_allowed = all_allowed && allowed_[std::size_t(j) * nbx_ + i];
      }
    const double eff = double(tagged) / (double(box.w()) * box.h() * b_ * b_);
    const bool small = box.w() * b_ <= p_.max_size && box.h() * b_ <= p_.max_size;
    const bool unit = box.w() == 1 && box.h() == 1;
    if (small && all_allowed && (unit || eff >= p_.efficiency)) {
      out_.push_back({box.i0 * b_, box.j0 * b_, (box.i1 + 1) * b_ - 1, (box.j1 + 1) * b_ - 1, 0});
      return;
    }
    int axis = -1, cut = -1;  // left part ends at `cut`
    if (small || !all_allowed || eff < p_.efficiency) find_cut(box, axis, cut);
    if (axis < 0) {
      // Bisect the longest side.
      axis = box.w() >= box.h() ? 0 : 1;
      const int lo = axis == 0 ? box.i0 : box.j0;
      const int n = axis == 0 ? box.w() : box.h();
      cut = lo + n / 2 - 1;
    }
    BlockBox a = box, b = box;
    if (axis == 0) {
      a.i1 = cut;
      b.i0 = cut + 1;
    } else {
      a.j1 = cut;
      b.j0 = cut + 1;
    }
    split(a);
    split(b);
  }

  void find_cut(const BlockBox& box, int& axis, int& cut) const {
    std::vector<long> sig[2];
    sig[0].assign(box.w(), 0);
    sig[1].assign(box.h(), 0);
    for (int j = box.j0; j <= box.j1; ++j)
      for (int i = box.i0; i <= box.i1; ++i) {
        sig[0][i - box.i0] += at(i, j);
        sig[1][j - box.j0] += at(i, j);
      }
    // Holes: zero signature strictly inside, nearest the middle.
    double best = std::numeric_limits<double>::max();
    for (int a = 0; a < 2; ++a) {
      const int n = int(sig[a].size());
      for (int k = 1; k < n - 1; ++k)
        if (sig[a][k] == 0) {
          const double d = std::abs(k - 0.5 * (n - 1));
          if (d < best) {
            best = d;
            axis = a;
            cut = (a == 0 ? box.i0 : box.j0) + k - 1;
          }
        }
    }
    if (axis >= 0) return;
    // Inflection: strongest sign change of the second difference.
    long strength = 0;
    double center = std::numeric_limits<double>::max();
    for (int a = 0; a < 2; ++a) {
      const auto& s = sig[a];
      const int n = int(s.size());
      if (n < 4) continue;
      std::vector<long> lap(n, 0);
      for (int k = 1; k < n - 1; ++k) lap[k] = s[k + 1] - 2 * s[k] + s[k - 1];
      for (int k = 1; k < n - 2; ++k) {
        if ((lap[k] < 0 && lap[k + 1] > 0) || (lap[k] > 0 && lap[k + 1] < 0)) {
          const long st = std::abs(lap[k + 1] - lap[k]);
          const double d = std::abs(k + 0.5 - 0.5 * (n - 1));
          if (st > strength || (st == strength && d < center)) {
            strength = st;
            center = d;
            axis = a;
            cut = (a == 0 ? box.i0 : box.j0) + k;
          }
        }
      }
    }
  }

  const ClusterParams& p_;
  int b_, nbx_, nby_;
  std::vector<long> count_;
  std::vector<char> allowed_;
  std::vector<IndexBox> out_;
};

}  // namespace

std::vector<IndexBox> berger_rigoutsos(const TagGrid& tags, const ClusterParams& params,
                                       const std::vector<char>* allowed) {
  params.validate();
  if (tags.nx % params.blocking != 0 || tags.ny % params.blocking != 0)
    throw std::invalid_argument("berger_rigoutsos: domain not divisible by the blocking factor");
  if (tags.count() == 0) return {};
  return Clusterer(tags, params, allowed).run();
}

std::vector<IndexBox> enforce_proper_nesting(const std::vector<IndexBox>& fine_boxes,
                                             const std::vector<char>& mask, int nx, int ny) {
  if (mask.size() != std::size_t(nx) * ny)
    throw std::invalid_argument("enforce_proper_nesting: mask size mismatch");
  std::vector<IndexBox> out;
  ClusterParams exact{1.0, 1, std::max(2 * nx, 2 * ny)};
  for (const IndexBox& b : fine_boxes) {
    TagGrid tags(2 * nx, 2 * ny);
    bool all = true;
    for (int j = b.jlo; j <= b.jhi; ++j)
      for (int i = b.ilo; i <= b.ihi; ++i) {
        const bool ok = i >= 0 && j >= 0 && i < 2 * nx && j < 2 * ny &&
                        mask[std::size_t(j / 2) * nx + i / 2];
        tags.at(std::clamp(i, 0, 2 * nx - 1), std::clamp(j, 0, 2 * ny - 1)) |= ok;
        all = all && ok;
      }
    if (all) {
      out.push_back(b);
      continue;
    }
    for (IndexBox c : berger_rigoutsos(tags, exact)) {
      c.level = b.level;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<int> round_robin_assignment(std::size_t nboxes, int nranks) {
  if (nranks < 1) throw std::invalid_argument("round_robin_assignment: nranks must be >= 1");
  std::vector<int> owner(nboxes);
  for (std::size_t b = 0; b < nboxes; ++b) owner[b] = int(b % std::size_t(nranks));
  return owner;
}

// ---------------------------------------------------------------------------
// Stencils and FV models

double face_interp(const double* q, int order, double wind) {
  switch (order) {
    case 2: return 0.5 * (q[1] + q[2]);
    case 4: return 7.0 / 12.0 * (q[2] + q[1]) - 1.0 / 12.0 * (q[3] + q[0]);
    case 3: {
      const double c4 = 7.0 / 12.0 * (q[2] + q[1]) - 1.0 / 12.0 * (q[3] + q[0]);
      const double s = wind > 0.0 ? 1.0 : (wind < 0.0 ? -1.0 : 0.0);
      return c4 + s / 12.0 * ((q[3] - q[0]) - 3.0 * (q[2] - q[1]));
    }
    default: throw std::invalid_argument("face_interp: order must be 2, 3 or 4");
  }
}

Patch::Patch(const IndexBox& b, int nv, int ghosts) : box(b), nvars(nv), ng(ghosts) {
  data.assign(std::size_t(nv) * stride() * rows(), 0.0);
}

namespace {

// Gathers q_{m-2..m+1} around face m (axis 0: along i, axis 1: along j).
template <class Get>
inline void stencil(Get get, double* s) {
  for (int k = 0; k < 4; ++k) s[k] = get(k - 2);
}

}  // namespace

void FvAdvection::fluxes(const Patch& p, const LevelGeometry& geo, double t, int order,
                         std::vector<double>& fx, std::vector<double>& fy) const {
  const IndexBox& b = p.box;
  const int w = b.width(), h = b.height();
  fx.assign(std::size_t(h) * (w + 1), 0.0);
  fy.assign(std::size_t(h + 1) * w, 0.0);
  double s[4];
  for (int j = b.jlo; j <= b.jhi; ++j)
    for (int i = b.ilo; i <= b.ihi + 1; ++i) {
      const double u = wind_(geo.xlo + i * geo.dx, geo.yc(j), t).x;
      stencil([&](int k) { return p.at(0, i + k, j); }, s);
      fx[std::size_t(j - b.jlo) * (w + 1) + (i - b.ilo)] = u * face_interp(s, order, u);
    }
  for (int j = b.jlo; j <= b.jhi + 1; ++j)
    for (int i = b.ilo; i <= b.ihi; ++i) {
      const double v = wind_(geo.xc(i), geo.ylo + j * geo.dy, t).y;
      stencil([&](int k) { return p.at(0, i, j + k); }, s);
      fy[std::size_t(j - b.jlo) * w + (i - b.ilo)] = v * face_interp(s, order, v);
    }
}

double FvAdvection::max_speed(const Patch& p, const LevelGeometry& geo, double t) const {
  double c = 0.0;
  for (int j = p.box.jlo; j <= p.box.jhi; ++j)
    for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
      const Vec3 u = wind_(geo.xc(i), geo.yc(j), t);
      c = std::max(c, std::abs(u.x) / geo.dx + std::abs(u.y) / geo.dy);
    }
  return c;
}

void FvEuler::fluxes(const Patch& p, const LevelGeometry& geo, double, int order,
                     std::vector<double>& fx, std::vector<double>& fy) const {
  const IndexBox& b = p.box;
  const int w = b.width(), h = b.height();
  const int sw = p.stride(), sh = p.rows();
  // Specific quantities on the whole halo: u, v, theta, tracer ratio, p'.
  const std::size_t n = std::size_t(sw) * sh;
  std::vector<double> prim(5 * n);
  const double gamma = c_.gamma();
  for (int jj = 0; jj < sh; ++jj)
    for (int ii = 0; ii < sw; ++ii) {
      const int i = b.ilo - p.ng + ii, j = b.jlo - p.ng + jj;
      const BackgroundSample bg = bg_(geo.xc(i), geo.yc(j));
      const double rho = bg.rho + p.at(kRho, i, j);
      const double theta = bg.theta_density + p.at(kTheta, i, j);
      if (!(rho > 0.0) || !(theta > 0.0))
        throw std::domain_error("FvEuler: non-positive density or potential temperature");
      const std::size_t c = std::size_t(jj) * sw + ii;
      prim[c] = p.at(kMomX, i, j) / rho;
      prim[n + c] = p.at(kMomY, i, j) / rho;
      prim[2 * n + c] = theta / rho;
      prim[3 * n + c] = p.at(kTracer, i, j) / rho;
      prim[4 * n + c] = c_.p0 * std::pow(c_.R * theta / c_.p0, gamma) - bg.pressure;
    }
  auto pr = [&](int k, int i, int j) {
    return prim[k * n + std::size_t(j - b.jlo + p.ng) * sw + (i - b.ilo + p.ng)];
  };
  fx.assign(std::size_t(kEulerVars) * h * (w + 1), 0.0);
  fy.assign(std::size_t(kEulerVars) * (h + 1) * w, 0.0);
  double s[4];
  for (int axis = 0; axis < 2; ++axis) {
    const int mom = axis == 0 ? kMomX : kMomY;
    const int fw = axis == 0 ? w + 1 : w;
    const int fh = axis == 0 ? h : h + 1;
    std::vector<double>& f = axis == 0 ? fx : fy;
    for (int jf = 0; jf < fh; ++jf)
      for (int i_f = 0; i_f < fw; ++i_f) {
        const int i = b.ilo + i_f, j = b.jlo + jf;
        auto cell = [&](int k, int& ci, int& cj) {
          ci = axis == 0 ? i + k : i;
          cj = axis == 0 ? j : j + k;
        };
        int ci, cj;
        stencil([&](int k) { cell(k, ci, cj); return p.at(mom, ci, cj); }, s);
        // Only advected quantities are upwind-biased; mass flux and pressure
        // carry acoustic waves in both directions and stay centered.
        const int centered = order == 3 ? 4 : order;
        const double sign = s[1] + s[2];
        const double m = face_interp(s, centered, 0.0);
        double face[5];
        for (int k = 0; k < 5; ++k) {
          stencil([&](int kk) { cell(kk, ci, cj); return pr(k, ci, cj); }, s);
          face[k] = face_interp(s, k == 4 ? centered : order, sign);
        }
        const std::size_t stride = std::size_t(fh) * fw;
        const std::size_t at = std::size_t(jf) * fw + i_f;
        f[kRho * stride + at] = m;
        f[kMomX * stride + at] = m * face[0] + (axis == 0 ? face[4] : 0.0);
        f[kMomY * stride + at] = m * face[1] + (axis == 1 ? face[4] : 0.0);
        f[kTheta * stride + at] = m * face[2];
        f[kTracer * stride + at] = m * face[3];
      }
  }
}

void FvEuler::source(const Patch& p, const LevelGeometry&, std::vector<double>& s) const {
  const IndexBox& b = p.box;
  const int w = b.width(), h = b.height();
  s.assign(std::size_t(kEulerVars) * w * h, 0.0);
  for (int j = b.jlo; j <= b.jhi; ++j)
    for (int i = b.ilo; i <= b.ihi; ++i)
      s[(std::size_t(kMomY) * h + (j - b.jlo)) * w + (i - b.ilo)] = -p.at(kRho, i, j) * c_.g;
}

double FvEuler::max_speed(const Patch& p, const LevelGeometry& geo, double) const {
  double c = 0.0;
  for (int j = p.box.jlo; j <= p.box.jhi; ++j)
    for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
      const BackgroundSample bg = bg_(geo.xc(i), geo.yc(j));
      const double rho = bg.rho + p.at(kRho, i, j);
      const double pres = equation_of_state(bg.theta_density + p.at(kTheta, i, j), c_);
      const double a = std::sqrt(c_.gamma() * pres / rho);
      const double u = std::abs(p.at(kMomX, i, j)) / rho, v = std::abs(p.at(kMomY, i, j)) / rho;
      c = std::max(c, (u + a) / geo.dx + (v + a) / geo.dy);
    }
  return c;
}

// ---------------------------------------------------------------------------
// Hierarchy

void PatchConfig::validate() const {
  if (domain.nx < 1 || domain.ny < 1) throw std::invalid_argument("patch domain needs cells");
  if (!(domain.xhi > domain.xlo && domain.yhi > domain.ylo))
    throw std::invalid_argument("patch domain extents are empty");
  if (max_level < 0) throw std::invalid_argument("max_level must be >= 0");
  cluster.validate();
  policy.validate();
  if (cluster.blocking % 2 != 0 || cluster.max_size % 2 != 0)
    throw std::invalid_argument("blocking and max_size must be even (refinement ratio 2)");
  const int bc = cluster.blocking / 2;
  if (domain.nx % bc != 0 || domain.ny % bc != 0)
    throw std::invalid_argument("domain cells must be divisible by blocking/2");
  if (order < 2 || order > 4) throw std::invalid_argument("face interpolation order must be 2..4");
  if (ghosts < 2) throw std::invalid_argument("at least two ghost layers are required");
  if (nesting_width < 2) throw std::invalid_argument("nesting width must be >= 2");
}

PatchHierarchy::PatchHierarchy(PatchConfig config, std::shared_ptr<const FvPhysics> physics)
    : cfg_(std::move(config)), phys_(std::move(physics)) {
  cfg_.validate();
  if (!phys_) throw std::invalid_argument("PatchHierarchy: physics is required");
}

LevelGeometry PatchHierarchy::make_geometry(int l) const {
  LevelGeometry g;
  g.level = l;
  g.nx = cfg_.domain.nx << l;
  g.ny = cfg_.domain.ny << l;
  g.dx = (cfg_.domain.xhi - cfg_.domain.xlo) / g.nx;
  g.dy = (cfg_.domain.yhi - cfg_.domain.ylo) / g.ny;
  g.xlo = cfg_.domain.xlo;
  g.ylo = cfg_.domain.ylo;
  return g;
}

namespace {

inline int wrap_mod(int a, int n) { return ((a % n) + n) % n; }

// Maps (i, j) into [0,nx) x [0,ny) by periodic wrap or wall mirror.
inline void map_index(const LevelGeometry& g, const PatchDomain& d, int& i, int& j, bool& mx,
                      bool& my) {
  mx = my = false;
  if (i < 0 || i >= g.nx) {
    if (d.bx == PatchBoundary::kPeriodic) {
      i = wrap_mod(i, g.nx);
    } else {
      i = i < 0 ? -1 - i : 2 * g.nx - 1 - i;
      mx = true;
    }
  }
  if (j < 0 || j >= g.ny) {
    if (d.by == PatchBoundary::kPeriodic) {
      j = wrap_mod(j, g.ny);
    } else {
      j = j < 0 ? -1 - j : 2 * g.ny - 1 - j;
      my = true;
    }
  }
}

inline double van_leer(double a, double b) { return a * b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

}  // namespace

void PatchHierarchy::rebuild_maps(int l) {
  PatchLevel& L = levels_[l];
  L.owner.assign(std::size_t(L.geo.nx) * L.geo.ny, -1);
  for (std::size_t p = 0; p < L.patches.size(); ++p) {
    const IndexBox& b = L.patches[p].box;
    for (int j = b.jlo; j <= b.jhi; ++j)
      for (int i = b.ilo; i <= b.ihi; ++i) L.owner[std::size_t(j) * L.geo.nx + i] = int(p);
  }
  L.covered.assign(L.owner.size(), 0);
  if (l + 1 < num_levels()) {
    for (const Patch& fp : levels_[l + 1].patches) {
      const IndexBox c = fp.box.coarsened();
      for (int j = c.jlo; j <= c.jhi; ++j)
        for (int i = c.ilo; i <= c.ihi; ++i) L.covered[std::size_t(j) * L.geo.nx + i] = 1;
    }
  }
  if (l > 0) {
    PatchLevel& C = levels_[l - 1];
    C.covered.assign(std::size_t(C.geo.nx) * C.geo.ny, 0);
    for (const Patch& fp : L.patches) {
      const IndexBox c = fp.box.coarsened();
      for (int j = c.jlo; j <= c.jhi; ++j)
        for (int i = c.ilo; i <= c.ihi; ++i) C.covered[std::size_t(j) * C.geo.nx + i] = 1;
    }
  }
}

void PatchHierarchy::set_level_boxes(int l, const std::vector<IndexBox>& boxes) {
  PatchLevel L;
  L.geo = make_geometry(l);
  for (IndexBox b : boxes) {
    b.level = l;
    L.patches.emplace_back(b, phys_->nvars(), cfg_.ghosts);
  }
  if (int(levels_.size()) <= l) levels_.resize(l + 1);
  levels_[l] = std::move(L);
  levels_[l].t_old = levels_[l].t_new = time_;
  registers_.resize(levels_.size());
  rebuild_maps(l);
}

double PatchHierarchy::level_value(int l, int i, int j, int v, double t) const {
  const PatchLevel& L = levels_[l];
  bool mx, my;
  map_index(L.geo, cfg_.domain, i, j, mx, my);
  const int p = L.owner[std::size_t(j) * L.geo.nx + i];
  if (p < 0)
    throw std::runtime_error("ghost fill unsatisfiable: level " + std::to_string(l) + " cell (" +
                             std::to_string(i) + ", " + std::to_string(j) +
                             ") is not covered (nesting violated)");
  double sign = 1.0;
  if (mx) sign *= phys_->mirror_sign(v, 0);
  if (my) sign *= phys_->mirror_sign(v, 1);
  const double qn = L.patches[p].at(v, i, j);
  if (L.t_new == L.t_old || L.old.size() != L.patches.size() || t >= L.t_new) return sign * qn;
  const double a = (t - L.t_old) / (L.t_new - L.t_old);
  const double qo = L.old[p].at(v, i, j);
  return sign * ((1.0 - a) * qo + a * qn);
}

double PatchHierarchy::coarse_interp(int l, int fi, int fj, int v, double t) const {
  const int ci = fi >> 1, cj = fj >> 1;
  const double qc = level_value(l - 1, ci, cj, v, t);
  const double sx = van_leer(level_value(l - 1, ci + 1, cj, v, t) - qc,
                             qc - level_value(l - 1, ci - 1, cj, v, t));
  const double sy = van_leer(level_value(l - 1, ci, cj + 1, v, t) - qc,
                             qc - level_value(l - 1, ci, cj - 1, v, t));
  const double ox = (fi & 1) ? 0.25 : -0.25;
  const double oy = (fj & 1) ? 0.25 : -0.25;
  return qc + sx * ox + sy * oy;
}

void PatchHierarchy::fill_ghosts(int l, double t) {
  PatchLevel& L = levels_[l];
  const int nv = phys_->nvars();
  for (Patch& p : L.patches) {
    const IndexBox g = p.box.grown(p.ng);
    for (int j = g.jlo; j <= g.jhi; ++j)
      for (int i = g.ilo; i <= g.ihi; ++i) {
        if (p.box.contains(i, j)) continue;
        int mi = i, mj = j;
        bool mx, my;
        map_index(L.geo, cfg_.domain, mi, mj, mx, my);
        const int src = L.owner[std::size_t(mj) * L.geo.nx + mi];
        for (int v = 0; v < nv; ++v) {
          double sign = 1.0;
          if (mx) sign *= phys_->mirror_sign(v, 0);
          if (my) sign *= phys_->mirror_sign(v, 1);
          double val;
          if (src >= 0) {
            val = L.patches[src].at(v, mi, mj);
          } else if (l > 0) {
            val = coarse_interp(l, mi, mj, v, t);
          } else {
            throw std::runtime_error("ghost fill unsatisfiable on level 0");
          }
          p.at(v, i, j) = sign * val;
        }
      }
  }
}

std::uint64_t PatchHierarchy::face_key(int dir, int i, int j) const {
  return (std::uint64_t(dir) << 62) | (std::uint64_t(std::uint32_t(i)) << 31) |
         std::uint64_t(std::uint32_t(j));
}

void PatchHierarchy::advance_level(int l, double t, double dt) {
  PatchLevel& L = levels_[l];
  const int nv = phys_->nvars();
  const int order = cfg_.order;
  const bool has_finer = l + 1 < num_levels();
  const LevelGeometry& geo = L.geo;
  L.old = L.patches;
  L.t_old = t;
  L.t_new = t + dt;

  const double stage_time[3] = {t, t + dt, t + 0.5 * dt};
  const double stage_weight[3] = {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0};
  std::vector<double> fx, fy, src;

  auto cov = [&](const PatchLevel& P, int i, int j) {
    return P.covered[std::size_t(j) * P.geo.nx + i] != 0;
  };

  for (int s = 0; s < 3; ++s) {
    fill_ghosts(l, stage_time[s]);
    for (std::size_t pi = 0; pi < L.patches.size(); ++pi) {
      Patch& p = L.patches[pi];
      const Patch& p0 = L.old[pi];
      const IndexBox& b = p.box;
      const int w = b.width(), h = b.height();
      phys_->fluxes(p, geo, stage_time[s], order, fx, fy);
      phys_->source(p, geo, src);
      const std::size_t sx = std::size_t(h) * (w + 1), sy = std::size_t(h + 1) * w;
      const double wdt = stage_weight[s] * dt;

      // Flux registers.
      for (int dir = 0; dir < 2; ++dir) {
        const int fw = dir == 0 ? w + 1 : w, fh = dir == 0 ? h : h + 1;
        const int ncells = dir == 0 ? geo.nx : geo.ny;
        const bool periodic = (dir == 0 ? cfg_.domain.bx : cfg_.domain.by) == PatchBoundary::kPeriodic;
        const double len = dir == 0 ? geo.dy : geo.dx;
        const std::vector<double>& f = dir == 0 ? fx : fy;
        const std::size_t fs = dir == 0 ? sx : sy;
        for (int jf = 0; jf < fh; ++jf)
          for (int i_f = 0; i_f < fw; ++i_f) {
            const int i = b.ilo + i_f, j = b.jlo + jf;
            const int n = dir == 0 ? i : j;  // face index along dir
            if (!periodic && (n == 0 || n == ncells)) continue;
            // Coarse side: this level against level l+1.
            if (has_finer) {
              int ai = dir == 0 ? i - 1 : i, aj = dir == 0 ? j : j - 1;
              int bi = i, bj = j;
              ai = wrap_mod(ai, geo.nx);
              aj = wrap_mod(aj, geo.ny);
              bi = wrap_mod(bi, geo.nx);
              bj = wrap_mod(bj, geo.ny);
              const bool ca = cov(L, ai, aj), cb = cov(L, bi, bj);
              if (ca != cb) {
                const bool uncovered_in_patch = ca ? (n <= (dir == 0 ? b.ihi : b.jhi))
                                                   : (n - 1 >= (dir == 0 ? b.ilo : b.jlo));
                if (uncovered_in_patch) {
                  auto& r = registers_[l + 1][face_key(dir, bi, bj)];
                  r.resize(nv, 0.0);
                  for (int v = 0; v < nv; ++v)
                    r[v] -= wdt * len * f[v * fs + std::size_t(jf) * fw + i_f];
                }
              }
            }
            // Fine side: this level against level l-1.
            if (l > 0 && n % 2 == 0) {
              const PatchLevel& C = levels_[l - 1];
              const int ci = dir == 0 ? i / 2 : i >> 1, cj = dir == 0 ? j >> 1 : j / 2;
              int ai = dir == 0 ? ci - 1 : ci, aj = dir == 0 ? cj : cj - 1;
              ai = wrap_mod(ai, C.geo.nx);
              aj = wrap_mod(aj, C.geo.ny);
              const int bi = wrap_mod(ci, C.geo.nx), bj = wrap_mod(cj, C.geo.ny);
              const bool ca = cov(C, ai, aj), cb = cov(C, bi, bj);
              if (ca != cb) {
                const bool covered_in_patch = ca ? (n - 1 >= (dir == 0 ? b.ilo : b.jlo))
                                                 : (n <= (dir == 0 ? b.ihi : b.jhi));
                if (covered_in_patch) {
                  auto& r = registers_[l][face_key(dir, bi, bj)];
                  r.resize(nv, 0.0);
                  for (int v = 0; v < nv; ++v)
                    r[v] += wdt * len * f[v * fs + std::size_t(jf) * fw + i_f];
                }
              }
            }
          }
      }

      // Stage update.
      for (int v = 0; v < nv; ++v)
        for (int j = b.jlo; j <= b.jhi; ++j)
          for (int i = b.ilo; i <= b.ihi; ++i) {
            const int ii = i - b.ilo, jj = j - b.jlo;
            const double div =
                (fx[v * sx + std::size_t(jj) * (w + 1) + ii + 1] -
                 fx[v * sx + std::size_t(jj) * (w + 1) + ii]) / geo.dx +
                (fy[v * sy + std::size_t(jj + 1) * w + ii] - fy[v * sy + std::size_t(jj) * w + ii]) /
                    geo.dy;
            const double k = -div + src[(std::size_t(v) * h + jj) * w + ii];
            const double q0 = p0.at(v, i, j);
            double& q = p.at(v, i, j);
            if (s == 0) q = q0 + dt * k;
            else if (s == 1) q = 0.75 * q0 + 0.25 * (q + dt * k);
            else q = q0 / 3.0 + 2.0 / 3.0 * (q + dt * k);
          }
    }
  }

  if (has_finer) {
    advance_level(l + 1, t, 0.5 * dt);
    advance_level(l + 1, t + 0.5 * dt, 0.5 * dt);
    if (cfg_.reflux) apply_reflux(l + 1);
    registers_[l + 1].clear();
    average_down(l + 1);
  }
}

void PatchHierarchy::apply_reflux(int l) {
  PatchLevel& C = levels_[l - 1];
  const double vol = C.geo.dx * C.geo.dy;
  const int nv = phys_->nvars();
  // Deterministic order: sort keys.
  std::vector<std::uint64_t> keys;
  keys.reserve(registers_[l].size());
  for (const auto& kv : registers_[l]) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  for (std::uint64_t key : keys) {
    const std::vector<double>& r = registers_[l][key];
    const int dir = int(key >> 62);
    const int i = int((key >> 31) & 0x7FFFFFFFu), j = int(key & 0x7FFFFFFFu);
    const int ai = dir == 0 ? wrap_mod(i - 1, C.geo.nx) : i;
    const int aj = dir == 0 ? j : wrap_mod(j - 1, C.geo.ny);
    const std::size_t a = std::size_t(aj) * C.geo.nx + ai, b = std::size_t(j) * C.geo.nx + i;
    if (!C.covered[a]) {
      Patch& p = C.patches[C.owner[a]];
      for (int v = 0; v < nv; ++v) p.at(v, ai, aj) -= r[v] / vol;
    }
    if (!C.covered[b]) {
      Patch& p = C.patches[C.owner[b]];
      for (int v = 0; v < nv; ++v) p.at(v, i, j) += r[v] / vol;
    }
  }
}

void PatchHierarchy::average_down(int l) {
  PatchLevel& C = levels_[l - 1];
  const int nv = phys_->nvars();
  for (const Patch& fp : levels_[l].patches) {
    const IndexBox cb = fp.box.coarsened();
    for (int cj = cb.jlo; cj <= cb.jhi; ++cj)
      for (int ci = cb.ilo; ci <= cb.ihi; ++ci) {
        const int owner = C.owner[std::size_t(cj) * C.geo.nx + ci];
        if (owner < 0) throw std::runtime_error("average_down: fine cell without coarse parent");
        Patch& cp = C.patches[owner];
        for (int v = 0; v < nv; ++v)
          cp.at(v, ci, cj) = 0.25 * (fp.at(v, 2 * ci, 2 * cj) + fp.at(v, 2 * ci + 1, 2 * cj) +
                                     fp.at(v, 2 * ci, 2 * cj + 1) + fp.at(v, 2 * ci + 1, 2 * cj + 1));
      }
  }
}

void PatchHierarchy::advance(double dt0) {
  if (!(dt0 > 0.0)) throw std::invalid_argument("advance: dt must be positive");
  if (levels_.empty()) throw std::logic_error("advance: hierarchy not initialized");
  if (dt0 > stable_dt(cfg_.cfl_limit) * (1.0 + 1e-12)) ++cfl_warnings_;
  advance_level(0, time_, dt0);
  time_ += dt0;
  for (PatchLevel& L : levels_) {
    L.old.clear();
    L.t_old = L.t_new = time_;
  }
}

double PatchHierarchy::stable_dt(double cfl) const {
  double dt = std::numeric_limits<double>::infinity();
  for (int l = 0; l < num_levels(); ++l)
    for (const Patch& p : levels_[l].patches) {
      const double c = phys_->max_speed(p, levels_[l].geo, time_);
      if (c > 0.0) dt = std::min(dt, cfl / c * double(1 << l));
    }
  return dt;
}

std::vector<char> PatchHierarchy::nesting_mask(int l) const {
  const PatchLevel& L = levels_[l];
  std::vector<char> mask(std::size_t(L.geo.nx) * L.geo.ny, 0);
  if (l == 0) {
    std::fill(mask.begin(), mask.end(), 1);
    return mask;
  }
  const int w = cfg_.nesting_width;
  for (int j = 0; j < L.geo.ny; ++j)
    for (int i = 0; i < L.geo.nx; ++i) {
      if (L.owner[std::size_t(j) * L.geo.nx + i] < 0) continue;
      bool ok = true;
      for (int dj = -w; dj <= w && ok; ++dj)
        for (int di = -w; di <= w && ok; ++di) {
          int ii = i + di, jj = j + dj;
          const bool out_x = ii < 0 || ii >= L.geo.nx, out_y = jj < 0 || jj >= L.geo.ny;
          if ((out_x && cfg_.domain.bx == PatchBoundary::kWall) ||
              (out_y && cfg_.domain.by == PatchBoundary::kWall))
            continue;
          ii = wrap_mod(ii, L.geo.nx);
          jj = wrap_mod(jj, L.geo.ny);
          ok = L.owner[std::size_t(jj) * L.geo.nx + ii] >= 0;
        }
      mask[std::size_t(j) * L.geo.nx + i] = ok;
    }
  return mask;
}

namespace {

std::vector<IndexBox> chop(const IndexBox& b, int max_size) {
  std::vector<IndexBox> out;
  for (int j = b.jlo; j <= b.jhi; j += max_size)
    for (int i = b.ilo; i <= b.ihi; i += max_size)
      out.push_back({i, j, std::min(b.ihi, i + max_size - 1), std::min(b.jhi, j + max_size - 1),
                     b.level});
  return out;
}

}  // namespace

void PatchHierarchy::initialize(const PointInit& init, const TagIndicator& tag) {
  levels_.clear();
  registers_.clear();
  time_ = 0.0;
  set_level_boxes(0, chop({0, 0, cfg_.domain.nx - 1, cfg_.domain.ny - 1, 0}, cfg_.cluster.max_size));
  auto fill_from_init = [&](int l) {
    PatchLevel& L = levels_[l];
    std::vector<double> q(phys_->nvars());
    for (Patch& p : L.patches)
      for (int j = p.box.jlo; j <= p.box.jhi; ++j)
        for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
          init(L.geo.xc(i), L.geo.yc(j), q.data());
          for (int v = 0; v < phys_->nvars(); ++v) p.at(v, i, j) = q[v];
        }
  };
  fill_from_init(0);
  for (int l = 0; l < cfg_.max_level; ++l) {
    regrid(tag);
    for (int k = 1; k < num_levels(); ++k) fill_from_init(k);
    if (num_levels() <= l + 1) break;
  }
  for (int l = num_levels() - 1; l > 0; --l) average_down(l);
}

void PatchHierarchy::initialize_with_boxes(const PointInit& init,
                                           const std::vector<IndexBox>& level1) {
  levels_.clear();
  registers_.clear();
  time_ = 0.0;
  set_level_boxes(0, chop({0, 0, cfg_.domain.nx - 1, cfg_.domain.ny - 1, 0}, cfg_.cluster.max_size));
  if (!level1.empty()) {
    if (cfg_.max_level < 1) throw std::invalid_argument("initialize_with_boxes: max_level < 1");
    for (const IndexBox& b : level1)
      if (b.ilo % 2 || b.jlo % 2 || b.ihi % 2 == 0 || b.jhi % 2 == 0 || b.ilo < 0 || b.jlo < 0 ||
          b.ihi >= 2 * cfg_.domain.nx || b.jhi >= 2 * cfg_.domain.ny)
        throw std::invalid_argument("initialize_with_boxes: box not aligned to coarse cells");
    set_level_boxes(1, level1);
    rebuild_maps(0);
  }
  std::vector<double> q(phys_->nvars());
  for (int l = 0; l < num_levels(); ++l)
    for (Patch& p : levels_[l].patches)
      for (int j = p.box.jlo; j <= p.box.jhi; ++j)
        for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
          init(levels_[l].geo.xc(i), levels_[l].geo.yc(j), q.data());
          for (int v = 0; v < phys_->nvars(); ++v) p.at(v, i, j) = q[v];
        }
  if (num_levels() > 1) average_down(1);
}

void PatchHierarchy::regrid(const TagIndicator& tag) {
  if (levels_.empty()) throw std::logic_error("regrid: hierarchy not initialized");
  const int nv = phys_->nvars();
  const int bc = cfg_.cluster.blocking / 2;
  const ClusterParams coarse_params{cfg_.cluster.efficiency, bc, cfg_.cluster.max_size / 2};
  std::vector<PatchLevel> old_levels = levels_;
  for (PatchLevel& L : levels_) {
    L.old.clear();
    L.t_old = L.t_new = time_;
  }
  std::vector<double> q(nv);
  for (int l = 0; l < cfg_.max_level; ++l) {
    if (l >= num_levels()) break;
    PatchLevel& L = levels_[l];
    TagGrid tags(L.geo.nx, L.geo.ny);
    for (const Patch& p : L.patches)
      for (int j = p.box.jlo; j <= p.box.jhi; ++j)
        for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
          for (int v = 0; v < nv; ++v) q[v] = p.at(v, i, j);
          if (tag(q.data(), L.geo.xc(i), L.geo.yc(j)) > cfg_.policy.refine_above) tags.at(i, j) = 1;
        }
    // Square dilation by the buffer width.
    const int B = cfg_.policy.buffer_cells;
    if (B > 0) {
      TagGrid grown(L.geo.nx, L.geo.ny);
      for (int j = 0; j < L.geo.ny; ++j)
        for (int i = 0; i < L.geo.nx; ++i) {
          if (!tags.at(i, j)) continue;
          for (int dj = -B; dj <= B; ++dj)
            for (int di = -B; di <= B; ++di) {
              int ii = i + di, jj = j + dj;
              if (cfg_.domain.bx == PatchBoundary::kPeriodic) ii = wrap_mod(ii, L.geo.nx);
              if (cfg_.domain.by == PatchBoundary::kPeriodic) jj = wrap_mod(jj, L.geo.ny);
              if (ii < 0 || jj < 0 || ii >= L.geo.nx || jj >= L.geo.ny) continue;
              grown.at(ii, jj) = 1;
            }
        }
      tags = std::move(grown);
    }
    // Nesting region at blocking-unit granularity.
    const std::vector<char> mask = nesting_mask(l);
    const int nbx = L.geo.nx / bc, nby = L.geo.ny / bc;
    std::vector<char> allowed(std::size_t(nbx) * nby, 1);
    for (int j = 0; j < L.geo.ny; ++j)
      for (int i = 0; i < L.geo.nx; ++i)
        if (!mask[std::size_t(j) * L.geo.nx + i]) allowed[std::size_t(j / bc) * nbx + i / bc] = 0;
    std::vector<IndexBox> boxes = berger_rigoutsos(tags, coarse_params, &allowed);
    if (boxes.empty()) {
      levels_.resize(l + 1);
      registers_.resize(l + 1);
      rebuild_maps(l);
      break;
    }
    for (IndexBox& b : boxes) b = b.refined();
    std::sort(boxes.begin(), boxes.end(), [](const IndexBox& a, const IndexBox& b) {
      return a.jlo != b.jlo ? a.jlo < b.jlo : a.ilo < b.ilo;
    });
    set_level_boxes(l + 1, boxes);
    PatchLevel& F = levels_[l + 1];
    const PatchLevel* oldF = l + 1 < int(old_levels.size()) ? &old_levels[l + 1] : nullptr;
    for (Patch& p : F.patches)
      for (int j = p.box.jlo; j <= p.box.jhi; ++j)
        for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
          const int src = oldF ? oldF->owner[std::size_t(j) * F.geo.nx + i] : -1;
          for (int v = 0; v < nv; ++v)
            p.at(v, i, j) = src >= 0 ? oldF->patches[src].at(v, i, j)
                                     : coarse_interp(l + 1, i, j, v, time_);
        }
  }
}

double PatchHierarchy::integral(int var) const {
  double sum = 0.0;
  for (int l = 0; l < num_levels(); ++l)
    for_each_leaf_cell(l, [&](double, double, const double* q, double vol) { sum += q[var] * vol; });
  return sum;
}

void PatchHierarchy::for_each_leaf_cell(
    int l, const std::function<void(double, double, const double*, double)>& fn) const {
  const PatchLevel& L = levels_[l];
  const int nv = phys_->nvars();
  std::vector<double> q(nv);
  const double vol = L.geo.dx * L.geo.dy;
  for (const Patch& p : L.patches)
    for (int j = p.box.jlo; j <= p.box.jhi; ++j)
      for (int i = p.box.ilo; i <= p.box.ihi; ++i) {
        if (!L.covered.empty() && L.covered[std::size_t(j) * L.geo.nx + i]) continue;
        for (int v = 0; v < nv; ++v) q[v] = p.at(v, i, j);
        fn(L.geo.xc(i), L.geo.yc(j), q.data(), vol);
      }
}

std::vector<long> PatchHierarchy::cells_per_level() const {
  std::vector<long> n;
  for (const PatchLevel& L : levels_) {
    long c = 0;
    for (const Patch& p : L.patches) c += p.box.cells();
    n.push_back(c);
  }
  return n;
}

double PatchHierarchy::max_abs_deviation(int var, double value) const {
  double d = 0.0;
  for (const PatchLevel& L : levels_)
    for (const Patch& p : L.patches)
      for (int j = p.box.jlo; j <= p.box.jhi; ++j)
        for (int i = p.box.ilo; i <= p.box.ihi; ++i) d = std::max(d, std::abs(p.at(var, i, j) - value));
  return d;
}

bool PatchHierarchy::boxes_disjoint() const {
  for (const PatchLevel& L : levels_)
    for (std::size_t a = 0; a < L.patches.size(); ++a)
      for (std::size_t b = a + 1; b < L.patches.size(); ++b)
        if (L.patches[a].box.intersects(L.patches[b].box)) return false;
  return true;
}

bool PatchHierarchy::properly_nested() const {
  for (int l = 1; l < num_levels(); ++l) {
    const std::vector<char> mask = nesting_mask(l - 1);
    const PatchLevel& C = levels_[l - 1];
    for (const Patch& p : levels_[l].patches) {
      const IndexBox c = p.box.coarsened();
      for (int j = c.jlo; j <= c.jhi; ++j)
        for (int i = c.ilo; i <= c.ihi; ++i) {
          if (i < 0 || j < 0 || i >= C.geo.nx || j >= C.geo.ny) return false;
          if (!mask[std::size_t(j) * C.geo.nx + i]) return false;
        }
    }
  }
  return true;
}

}  // namespace amrlab
