#include "mpfio/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <numbers>

#include "mpfio/decomp.hpp"
#include "mpfio/error.hpp"
#include "mpfio/parallel.hpp"

namespace mpfio {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Complex cis(double phase) {
  double s, c;
  sincos(kTwoPi * phase, &s, &c);
  return {c, s};
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

void check_grid(const OperatorSpec& op, const SampledField& f) {
  if (!(f.grid() == op.grid)) throw InvalidArgument("evaluator: field is not on the operator grid");
}

// Retained frequencies of one factor together with their weights.
struct FactorFrequencies {
  int nd = 0;
  std::vector<std::size_t> global_offset;  // contribution to the global slot index
  std::vector<int> slots;                  // nd per entry, per-axis FFT slot
  std::vector<double> xi;                  // nd per entry
  std::vector<double> weight;              // truncation * LP * sector
  std::size_t size() const { return weight.size(); }
  std::span<const double> xi_at(std::size_t k) const {
    return {xi.data() + k * static_cast<std::size_t>(nd), static_cast<std::size_t>(nd)};
  }
};

void validate_request(const OperatorSpec& op, const ApplyRequest& req) {
  int d = op.grid.space().factors();
  if (!req.levels.empty() && static_cast<int>(req.levels.size()) != d)
    throw InvalidArgument("evaluator: level map needs one slot per factor");
  if (!req.sectors.empty() && static_cast<int>(req.sectors.size()) != d)
    throw InvalidArgument("evaluator: sector map needs one slot per factor");
  for (int i = 0; i < d; ++i) {
    auto ii = static_cast<std::size_t>(i);
    std::optional<int> j = req.levels.empty() ? std::nullopt : req.levels[ii];
    if (j && (*j < 0 || *j > op.levels[ii]))
      throw InvalidArgument("evaluator: level " + std::to_string(*j) + " out of range [0, " +
                            std::to_string(op.levels[ii]) + "] for factor " + std::to_string(i));
    if (!req.sectors.empty() && req.sectors[ii]) {
      if (!j) throw InvalidArgument("evaluator: sector index given without a level for factor " + std::to_string(i));
      AngularGrid g = direction_grid(op.grid.space().factor_dim(i), *j, op.sector_spacing_scale);
      if (*req.sectors[ii] >= g.size())
        throw InvalidArgument("evaluator: invalid sector index " + std::to_string(*req.sectors[ii]) +
                              " (level " + std::to_string(*j) + " has " + std::to_string(g.size()) + " sectors)");
    }
  }
}

double truncation_weight(const OperatorSpec& op, int i, double r) {
  int J = op.levels[static_cast<std::size_t>(i)];
  if (op.truncation == Truncation::sharp) return r <= std::ldexp(1.0, J + 1) ? 1.0 : 0.0;
  return lp_partial_sum(J, r);
}

double factor_weight(const OperatorSpec& op, const ApplyRequest& req, int i, std::span<const double> xi,
                     const SectorCutoffs* sectors) {
  double r = norm(xi);
  double w = truncation_weight(op, i, r);
  auto ii = static_cast<std::size_t>(i);
  if (w == 0.0) return 0.0;
  if (!req.levels.empty() && req.levels[ii]) w *= lp_weight(*req.levels[ii], r);
  if (w == 0.0) return 0.0;
  if (sectors) {
    std::size_t nu = *req.sectors[ii];
    // The xi = 0 node (only reachable at level 0) goes to sector 0 so that
    // the sectors still sum to the partial operator.
    if (r == 0.0) return nu == 0 ? w : 0.0;
    w *= sectors->weight(nu, xi);
  }
  return w;
}

std::vector<std::unique_ptr<SectorCutoffs>> make_sectors(const OperatorSpec& op, const ApplyRequest& req) {
  int d = op.grid.space().factors();
  std::vector<std::unique_ptr<SectorCutoffs>> out(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    auto ii = static_cast<std::size_t>(i);
    if (!req.sectors.empty() && req.sectors[ii])
      out[ii] = std::make_unique<SectorCutoffs>(
          direction_grid(op.grid.space().factor_dim(i), *req.levels[ii], op.sector_spacing_scale));
  }
  return out;
}

std::vector<FactorFrequencies> retained_frequencies(const OperatorSpec& op, const ApplyRequest& req) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  auto sectors = make_sectors(op, req);
  std::vector<FactorFrequencies> out(static_cast<std::size_t>(sp.factors()));
  for (int i = 0; i < sp.factors(); ++i) {
    FactorFrequencies& ff = out[static_cast<std::size_t>(i)];
    int off = sp.axis_offset(i), nd = sp.factor_dim(i);
    ff.nd = nd;
    std::vector<int> slot(static_cast<std::size_t>(nd));
    std::vector<double> xi(static_cast<std::size_t>(nd));
    std::size_t count = g.factor_node_count(i);
    for (std::size_t s = 0; s < count; ++s) {
      std::size_t rem = s;
      for (int a = nd - 1; a >= 0; --a) {
        auto p = static_cast<std::size_t>(g.points(off + a));
        slot[static_cast<std::size_t>(a)] = static_cast<int>(rem % p);
        rem /= p;
      }
      std::size_t goff = 0;
      for (int a = 0; a < nd; ++a) {
        xi[static_cast<std::size_t>(a)] = g.frequency_of_slot(off + a, slot[static_cast<std::size_t>(a)]);
        goff += g.stride(off + a) * static_cast<std::size_t>(slot[static_cast<std::size_t>(a)]);
      }
      double w = factor_weight(op, req, i, xi, sectors[static_cast<std::size_t>(i)].get());
      if (w == 0.0) continue;
      ff.global_offset.push_back(goff);
      ff.slots.insert(ff.slots.end(), slot.begin(), slot.end());
      ff.xi.insert(ff.xi.end(), xi.begin(), xi.end());
      ff.weight.push_back(w);
    }
  }
  return out;
}

double factor_frequency_cell(const LatticeGrid& g, int i) {
  double v = 1.0;
  int off = g.space().axis_offset(i);
  for (int a = off; a < off + g.space().factor_dim(i); ++a) v /= g.period(a);
  return v;
}

// Cartesian product iteration over the per-factor retained lists.
template <class Body>
void for_each_combo(const std::vector<FactorFrequencies>& ff, Body&& body) {
  std::size_t d = ff.size();
  for (const auto& f : ff)
    if (f.size() == 0) return;
  std::vector<std::size_t> k(d, 0);
  for (;;) {
    body(k);
    std::size_t c = d;
    while (c-- > 0) {
      if (++k[c] < ff[c].size()) break;
      k[c] = 0;
      if (c == 0) return;
    }
  }
}

// Per-factor x-cutoff values for separable symbols.
std::vector<std::vector<double>> factor_cutoffs(const OperatorSpec& op) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(sp.factors()));
  for (int i = 0; i < sp.factors(); ++i) {
    std::vector<double> x(static_cast<std::size_t>(sp.factor_dim(i)));
    auto& c = out[static_cast<std::size_t>(i)];
    c.resize(g.factor_node_count(i));
    for (std::size_t s = 0; s < c.size(); ++s) {
      g.factor_point(i, s, x);
      c[s] = op.symbol.factor(i).cutoff(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------- direct path

struct DirectPlan {
  bool separable = false;  // symbol split as cutoff(x) * multiplier(xi)
  bool linear = false;     // phase split as x.xi + psi(xi), psi folded into coef
  bool factor_tables = false;
  std::vector<FactorFrequencies> ff;
  std::vector<std::uint32_t> combo_index;
  std::vector<std::size_t> global;
  std::vector<Complex> coef;               // weight * multiplier * e^{2 pi i psi} * dxi
  std::vector<std::uint16_t> axis_slot;    // n per entry, for the linear tables
  std::vector<std::vector<Complex>> axis_table;    // per axis: [node k][slot q] = e^{2 pi i x_k xi_q}
  std::vector<std::vector<Complex>> factor_table;  // per factor: [x sub][entry] = e^{2 pi i Phi_i}
  std::vector<std::vector<double>> cutoff;
};

constexpr std::size_t kFactorTableBudget = std::size_t{1} << 23;

DirectPlan plan_direct(const OperatorSpec& op, const ApplyRequest& req) {
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  const int d = sp.factors();
  const int n = sp.total_dim();
  DirectPlan p;
  p.separable = req.use_structure && op.symbol.is_separable();
  p.linear = req.use_structure && op.phase.linear_in_x();
  p.ff = retained_frequencies(op, req);
  if (p.separable) p.cutoff = factor_cutoffs(op);

  // Per-factor coefficient pieces.
  std::vector<std::vector<Complex>> piece(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const auto& ff = p.ff[static_cast<std::size_t>(i)];
    auto& pc = piece[static_cast<std::size_t>(i)];
    pc.resize(ff.size());
    double dxi = factor_frequency_cell(g, i);
    for (std::size_t k = 0; k < ff.size(); ++k) {
      Complex c = ff.weight[k] * dxi;
      if (p.separable) c *= op.symbol.factor(i).multiplier(ff.xi_at(k));
      if (p.linear) c *= cis(op.phase.factor(i).frequency_part(ff.xi_at(k)));
      pc[k] = c;
    }
  }

  for_each_combo(p.ff, [&](const std::vector<std::size_t>& k) {
    Complex c = 1.0;
    std::size_t gl = 0;
    for (int i = 0; i < d; ++i) {
      auto ii = static_cast<std::size_t>(i);
      c *= piece[ii][k[ii]];
      gl += p.ff[ii].global_offset[k[ii]];
      p.combo_index.push_back(static_cast<std::uint32_t>(k[ii]));
    }
    p.coef.push_back(c);
    p.global.push_back(gl);
    if (p.linear)
      for (int i = 0; i < d; ++i) {
        const auto& ff = p.ff[static_cast<std::size_t>(i)];
        for (int a = 0; a < ff.nd; ++a)
          p.axis_slot.push_back(static_cast<std::uint16_t>(ff.slots[k[static_cast<std::size_t>(i)] * static_cast<std::size_t>(ff.nd) + static_cast<std::size_t>(a)]));
      }
  });

  if (p.linear) {
    p.axis_table.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      int N = g.points(a);
      auto& t = p.axis_table[static_cast<std::size_t>(a)];
      t.resize(static_cast<std::size_t>(N) * static_cast<std::size_t>(N));
      for (int kx = 0; kx < N; ++kx)
        for (int q = 0; q < N; ++q)
          t[static_cast<std::size_t>(kx) * static_cast<std::size_t>(N) + static_cast<std::size_t>(q)] =
              cis(g.coordinate(a, kx) * g.frequency_of_slot(a, q));
    }
  } else if (req.use_structure) {
    std::size_t total = 0;
    for (int i = 0; i < d; ++i) total += g.factor_node_count(i) * p.ff[static_cast<std::size_t>(i)].size();
    if (total <= kFactorTableBudget) {
      p.factor_tables = true;
      p.factor_table.resize(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        const auto& ff = p.ff[static_cast<std::size_t>(i)];
        auto& t = p.factor_table[static_cast<std::size_t>(i)];
        std::size_t nx = g.factor_node_count(i), m = ff.size();
        t.resize(nx * m);
        const PhaseFactor& phi = op.phase.factor(i);
        parallel_for(nx, [&](std::size_t b, std::size_t e) {
          std::vector<double> x(static_cast<std::size_t>(ff.nd));
          for (std::size_t s = b; s < e; ++s) {
            g.factor_point(i, s, x);
            for (std::size_t k = 0; k < m; ++k) t[s * m + k] = cis(phi.value(x, ff.xi_at(k)));
          }
        }, 4);
      }
    }
  }
  return p;
}

// Evaluates cutoff(x) and the per-entry kernel factor e(x, k) * sigma'(x, k)
// for one node through a small visitor so forward and adjoint share it.
struct NodeContext {
  const OperatorSpec& op;
  const DirectPlan& p;
  std::vector<int> idx;
  std::vector<std::size_t> sub;
  std::vector<double> x, xi;
  std::vector<const Complex*> rows;

  NodeContext(const OperatorSpec& o, const DirectPlan& pl)
      : op(o), p(pl), idx(static_cast<std::size_t>(o.grid.axes())),
        sub(static_cast<std::size_t>(o.grid.space().factors())), x(static_cast<std::size_t>(o.grid.axes())),
        xi(static_cast<std::size_t>(o.grid.axes())), rows(std::max(idx.size(), sub.size())) {}

  // Returns the cutoff; 0 means the node contributes nothing.
  double bind(std::size_t node) {
    const LatticeGrid& g = op.grid;
    const int d = g.space().factors();
    g.unravel(node, idx);
    g.node_point(node, x);
    for (int i = 0; i < d; ++i) sub[static_cast<std::size_t>(i)] = g.factor_node(node, i);
    double cut = 1.0;
    if (p.separable)
      for (int i = 0; i < d; ++i) cut *= p.cutoff[static_cast<std::size_t>(i)][sub[static_cast<std::size_t>(i)]];
    if (cut == 0.0) return 0.0;
    if (p.linear) {
      for (int a = 0; a < g.axes(); ++a)
        rows[static_cast<std::size_t>(a)] = p.axis_table[static_cast<std::size_t>(a)].data() +
                                            static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]) *
                                                static_cast<std::size_t>(g.points(a));
    } else if (p.factor_tables) {
      for (int i = 0; i < d; ++i)
        rows[static_cast<std::size_t>(i)] = p.factor_table[static_cast<std::size_t>(i)].data() +
                                            sub[static_cast<std::size_t>(i)] * p.ff[static_cast<std::size_t>(i)].size();
    }
    return cut;
  }

  void fill_xi(std::size_t e) {
    const ProductSpace& sp = op.grid.space();
    for (int i = 0; i < sp.factors(); ++i) {
      const auto& ff = p.ff[static_cast<std::size_t>(i)];
      auto k = p.combo_index[e * static_cast<std::size_t>(sp.factors()) + static_cast<std::size_t>(i)];
      auto src = ff.xi_at(k);
      std::copy(src.begin(), src.end(), xi.begin() + sp.axis_offset(i));
    }
  }

  // e^{2 pi i Phi'} sigma' for entry e (excluding the cutoff and coef).
  Complex kernel(std::size_t e) {
    const int n = op.grid.axes();
    const int d = op.grid.space().factors();
    Complex v;
    if (p.linear) {
      const std::uint16_t* s = p.axis_slot.data() + e * static_cast<std::size_t>(n);
      v = rows[0][s[0]];
      for (int a = 1; a < n; ++a) v *= rows[static_cast<std::size_t>(a)][s[a]];
    } else if (p.factor_tables) {
      const std::uint32_t* c = p.combo_index.data() + e * static_cast<std::size_t>(d);
      v = rows[0][c[0]];
      for (int i = 1; i < d; ++i) v *= rows[static_cast<std::size_t>(i)][c[i]];
    } else {
      fill_xi(e);
      v = cis(op.phase.value(x, xi));
    }
    if (!p.separable) {
      if (p.linear || p.factor_tables) fill_xi(e);
      v *= op.symbol.eval(x, xi);
    }
    return v;
  }
};

// Fast inner loop for the common case of linear phase, separable symbol, n <= 2.
Complex linear_sum(const DirectPlan& p, const Complex* r0, const Complex* r1, const Complex* G, int n) {
  const std::size_t m = p.coef.size();
  const std::uint16_t* s = p.axis_slot.data();
  double re = 0.0, im = 0.0;
  if (n == 1) {
    for (std::size_t e = 0; e < m; ++e) {
      const Complex a = r0[s[e]];
      re += G[e].real() * a.real() - G[e].imag() * a.imag();
      im += G[e].real() * a.imag() + G[e].imag() * a.real();
    }
  } else {
    for (std::size_t e = 0; e < m; ++e) {
      const Complex a = r0[s[2 * e]], b = r1[s[2 * e + 1]];
      const double er = a.real() * b.real() - a.imag() * b.imag();
      const double ei = a.real() * b.imag() + a.imag() * b.real();
      re += G[e].real() * er - G[e].imag() * ei;
      im += G[e].real() * ei + G[e].imag() * er;
    }
  }
  return {re, im};
}

SampledField direct_forward(const OperatorSpec& op, const SampledField& f, const ApplyRequest& req) {
  DirectPlan p = plan_direct(op, req);
  std::vector<Complex> spec = forward_transform(f);
  std::vector<Complex> G(p.coef.size());
  for (std::size_t e = 0; e < G.size(); ++e) G[e] = p.coef[e] * spec[p.global[e]];
  SampledField out(op.grid);
  const int n = op.grid.axes();
  const bool fast = p.linear && p.separable && n <= 2;
  parallel_for(op.grid.node_count(), [&](std::size_t b, std::size_t e) {
    NodeContext ctx(op, p);
    for (std::size_t node = b; node < e; ++node) {
      double cut = ctx.bind(node);
      if (cut == 0.0) continue;
      Complex acc;
      if (fast) {
        acc = linear_sum(p, ctx.rows[0], n > 1 ? ctx.rows[1] : nullptr, G.data(), n);
      } else {
        for (std::size_t k = 0; k < G.size(); ++k) acc += G[k] * ctx.kernel(k);
      }
      out[node] = cut * acc;
    }
  }, 16);
  return out;
}

SampledField direct_adjoint(const OperatorSpec& op, const SampledField& g, const ApplyRequest& req) {
  DirectPlan p = plan_direct(op, req);
  const LatticeGrid& grid = op.grid;
  // Bind every node once; keep only nodes with nonzero cutoff and data.
  std::vector<std::size_t> nodes;
  std::vector<Complex> gv;
  {
    NodeContext ctx(op, p);
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
      double cut = ctx.bind(node);
      if (cut == 0.0 || g[node] == Complex(0.0)) continue;
      nodes.push_back(node);
      gv.push_back(cut * g[node]);
    }
  }
  std::vector<Complex> H(p.coef.size());
  parallel_for(p.coef.size(), [&](std::size_t b, std::size_t e) {
    NodeContext ctx(op, p);
    std::vector<Complex> acc(e - b);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      ctx.bind(nodes[t]);
      for (std::size_t k = b; k < e; ++k) acc[k - b] += std::conj(ctx.kernel(k)) * gv[t];
    }
    for (std::size_t k = b; k < e; ++k) H[k] = acc[k - b];
  }, 64);
  std::vector<Complex> S(grid.node_count());
  for (std::size_t k = 0; k < H.size(); ++k) S[p.global[k]] = std::conj(p.coef[k]) * H[k];
  SampledField out = inverse_transform(grid, S);
  out *= grid.cell_volume() / grid.frequency_cell_volume();
  return out;
}

// ---------------------------------------------------------------- multiplier path

std::vector<Complex> multiplier_spectrum(const OperatorSpec& op, const ApplyRequest& req, bool conjugate) {
  const LatticeGrid& g = op.grid;
  const int d = g.space().factors();
  auto ff = retained_frequencies(op, req);
  std::vector<std::vector<Complex>> piece(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const auto& f = ff[static_cast<std::size_t>(i)];
    auto& pc = piece[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < f.size(); ++k)
      pc.push_back(f.weight[k] * op.symbol.factor(i).multiplier(f.xi_at(k)) *
                   cis(op.phase.factor(i).frequency_part(f.xi_at(k))));
  }
  std::vector<Complex> M(g.node_count());
  for_each_combo(ff, [&](const std::vector<std::size_t>& k) {
    Complex c = 1.0;
    std::size_t gl = 0;
    for (int i = 0; i < d; ++i) {
      auto ii = static_cast<std::size_t>(i);
      c *= piece[ii][k[ii]];
      gl += ff[ii].global_offset[k[ii]];
    }
    M[gl] = conjugate ? std::conj(c) : c;
  });
  return M;
}

std::vector<double> node_cutoffs(const OperatorSpec& op) {
  auto cut = factor_cutoffs(op);
  const LatticeGrid& g = op.grid;
  std::vector<double> c(g.node_count(), 1.0);
  for (std::size_t node = 0; node < c.size(); ++node)
    for (int i = 0; i < g.space().factors(); ++i) c[node] *= cut[static_cast<std::size_t>(i)][g.factor_node(node, i)];
  return c;
}

SampledField multiplier_forward(const OperatorSpec& op, const SampledField& f, const ApplyRequest& req) {
  std::vector<Complex> spec = forward_transform(f);
  std::vector<Complex> M = multiplier_spectrum(op, req, false);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= M[k];
  SampledField out = inverse_transform(op.grid, spec);
  auto c = node_cutoffs(op);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= c[k];
  return out;
}

SampledField multiplier_adjoint(const OperatorSpec& op, const SampledField& g, const ApplyRequest& req) {
  SampledField h = g;
  auto c = node_cutoffs(op);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] *= c[k];
  std::vector<Complex> spec = forward_transform(h);
  std::vector<Complex> M = multiplier_spectrum(op, req, true);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= M[k];
  return inverse_transform(op.grid, spec);
}

// ---------------------------------------------------------------- factorized path

SampledField factorized_forward(const OperatorSpec& op, const SampledField& f, const ApplyRequest& req) {
  if (!op.symbol.is_factorized()) throw InvalidArgument("apply_factorized: symbol is not tensor-factorizable");
  const LatticeGrid& g = op.grid;
  const int d = g.space().factors();
  auto ff = retained_frequencies(op, req);
  std::vector<Complex> spec = forward_transform(f);

  // Tensor over retained per-factor indices, factor 0 slowest.
  std::vector<std::size_t> shape;
  for (const auto& x : ff) shape.push_back(x.size());
  std::vector<Complex> cur;
  cur.reserve(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()));
  for_each_combo(ff, [&](const std::vector<std::size_t>& k) {
    std::size_t gl = 0;
    for (int i = 0; i < d; ++i) gl += ff[static_cast<std::size_t>(i)].global_offset[k[static_cast<std::size_t>(i)]];
    cur.push_back(spec[gl]);
  });
  if (cur.empty()) return SampledField(g);

  const double radius = op.symbol.support_radius();
  for (int i = 0; i < d; ++i) {
    auto ii = static_cast<std::size_t>(i);
    const auto& fi = ff[ii];
    const PhaseFactor& phi = op.phase.factor(i);
    const SymbolFactor& sig = op.symbol.factor(i);
    const double dxi = factor_frequency_cell(g, i);
    std::size_t P = 1, S = 1;
    for (int q = 0; q < i; ++q) P *= g.factor_node_count(q);
    for (int q = i + 1; q < d; ++q) S *= shape[static_cast<std::size_t>(q)];
    const std::size_t M = fi.size(), X = g.factor_node_count(i);
    std::vector<Complex> next(P * X * S);
    parallel_for(X, [&](std::size_t b, std::size_t e) {
      std::vector<double> x(static_cast<std::size_t>(fi.nd));
      std::vector<Complex> row(M);
      for (std::size_t xs = b; xs < e; ++xs) {
        g.factor_point(i, xs, x);
        double cut = 1.0;
        if (sig.separable())
          cut = sig.cutoff(x);
        else if (norm(x) > radius)
          cut = 0.0;
        if (cut == 0.0) continue;
        for (std::size_t m = 0; m < M; ++m) {
          Complex s = sig.separable() ? sig.multiplier(fi.xi_at(m)) : sig.joint(x, fi.xi_at(m));
          row[m] = cut * fi.weight[m] * dxi * s * cis(phi.value(x, fi.xi_at(m)));
        }
        for (std::size_t pp = 0; pp < P; ++pp) {
          Complex* dst = next.data() + (pp * X + xs) * S;
          const Complex* src = cur.data() + pp * M * S;
          for (std::size_t m = 0; m < M; ++m) {
            const Complex a = row[m];
            const Complex* srow = src + m * S;
            for (std::size_t s = 0; s < S; ++s) dst[s] += a * srow[s];
          }
        }
      }
    }, 1);
    cur.swap(next);
  }
  return SampledField(g, std::move(cur));
}

ApplyRequest partial_request(const LevelMap& levels, const SectorMap& sectors, ApplyPath path) {
  ApplyRequest r;
  r.levels = levels;
  r.sectors = sectors;
  r.path = path;
  return r;
}

}  // namespace

// ---------------------------------------------------------------- public API

int max_truncation_level(const LatticeGrid& grid, int factor) {
  double fmax = grid.factor_max_frequency(factor);
  if (fmax < 2.0) throw InvalidArgument("grid resolves no dyadic level (max frequency below 2)");
  int J = static_cast<int>(std::floor(std::log2(fmax))) - 1;
  while (std::ldexp(1.0, J + 2) <= fmax) ++J;
  while (std::ldexp(1.0, J + 1) > fmax) --J;
  return J;
}

OperatorSpec make_operator(SymbolSpec symbol, PhaseSpec phase, LatticeGrid grid, std::vector<int> levels,
                           Truncation truncation) {
  const ProductSpace& sp = grid.space();
  if (!(symbol.space() == sp) || !(phase.space() == sp))
    throw InvalidArgument("make_operator: symbol, phase and grid must share one product space");
  if (static_cast<int>(levels.size()) != sp.factors())
    throw InvalidArgument("make_operator: need one truncation level per factor");
  for (int i = 0; i < sp.factors(); ++i) {
    int J = levels[static_cast<std::size_t>(i)];
    if (J < 0) throw InvalidArgument("make_operator: truncation level must be >= 0");
    if (std::ldexp(1.0, J + 1) > grid.factor_max_frequency(i))
      throw InvalidArgument("make_operator: truncation level " + std::to_string(J) + " exceeds grid resolution on factor " +
                            std::to_string(i) + " (2^(J+1) > " + std::to_string(grid.factor_max_frequency(i)) + ")");
  }
  return OperatorSpec{std::move(symbol), std::move(phase), std::move(grid), std::move(levels), truncation, 1.0};
}

OperatorSpec make_operator(SymbolSpec symbol, PhaseSpec phase, LatticeGrid grid, int level, Truncation truncation) {
  std::vector<int> levels;
  for (int i = 0; i < grid.space().factors(); ++i) levels.push_back(level < 0 ? max_truncation_level(grid, i) : level);
  return make_operator(std::move(symbol), std::move(phase), std::move(grid), std::move(levels), truncation);
}

bool supports_factorized(const OperatorSpec& op) { return op.symbol.is_factorized(); }

bool supports_multiplier(const OperatorSpec& op) { return op.phase.linear_in_x() && op.symbol.is_separable(); }

ApplyPath resolve_path(const OperatorSpec& op, ApplyPath requested) {
  if (requested != ApplyPath::automatic) return requested;
  if (supports_multiplier(op)) return ApplyPath::multiplier;
  if (supports_factorized(op) && op.grid.space().factors() > 1) return ApplyPath::factorized;
  return ApplyPath::direct;
}

SampledField evaluate(const OperatorSpec& op, const SampledField& f, const ApplyRequest& request) {
  check_grid(op, f);
  validate_request(op, request);
  switch (resolve_path(op, request.path)) {
    case ApplyPath::multiplier:
      if (!supports_multiplier(op))
        throw InvalidArgument("multiplier path needs a phase linear in x and a separable symbol");
      return multiplier_forward(op, f, request);
    case ApplyPath::factorized: return factorized_forward(op, f, request);
    default: return direct_forward(op, f, request);
  }
}

SampledField evaluate_adjoint(const OperatorSpec& op, const SampledField& g, const ApplyRequest& request) {
  check_grid(op, g);
  validate_request(op, request);
  ApplyPath path = resolve_path(op, request.path);
  if (path == ApplyPath::multiplier) {
    if (!supports_multiplier(op))
      throw InvalidArgument("multiplier path needs a phase linear in x and a separable symbol");
    return multiplier_adjoint(op, g, request);
  }
  return direct_adjoint(op, g, request);
}

SampledField apply(const OperatorSpec& op, const SampledField& f) { return evaluate(op, f, ApplyRequest{}); }

SampledField apply_adjoint(const OperatorSpec& op, const SampledField& g) {
  return evaluate_adjoint(op, g, ApplyRequest{});
}

SampledField apply_factorized(const OperatorSpec& op, const SampledField& f) {
  if (!supports_factorized(op)) throw InvalidArgument("apply_factorized: symbol is not tensor-factorizable");
  return evaluate(op, f, partial_request({}, {}, ApplyPath::factorized));
}

SampledField apply_partial(const OperatorSpec& op, const SampledField& f, const LevelMap& levels) {
  return evaluate(op, f, partial_request(levels, {}, ApplyPath::direct));
}

SampledField apply_sector(const OperatorSpec& op, const SampledField& f, const LevelMap& levels,
                          const SectorMap& sectors) {
  return evaluate(op, f, partial_request(levels, sectors, ApplyPath::direct));
}

Complex kernel_value(const OperatorSpec& op, const LevelMap& levels, const SectorMap& sectors,
                     std::span<const double> x, std::span<const double> y) {
  ApplyRequest req = partial_request(levels, sectors, ApplyPath::direct);
  validate_request(op, req);
  const ProductSpace& sp = op.grid.space();
  if (static_cast<int>(x.size()) != sp.total_dim() || static_cast<int>(y.size()) != sp.total_dim())
    throw InvalidArgument("kernel_value: coordinate dimension mismatch");
  auto ff = retained_frequencies(op, req);
  const double dxi = op.grid.frequency_cell_volume();
  std::vector<double> xi(static_cast<std::size_t>(sp.total_dim()));
  Complex acc;
  for_each_combo(ff, [&](const std::vector<std::size_t>& k) {
    double w = dxi;
    for (int i = 0; i < sp.factors(); ++i) {
      auto ii = static_cast<std::size_t>(i);
      auto src = ff[ii].xi_at(k[ii]);
      std::copy(src.begin(), src.end(), xi.begin() + sp.axis_offset(i));
      w *= ff[ii].weight[k[ii]];
    }
    double yx = 0.0;
    for (std::size_t a = 0; a < xi.size(); ++a) yx += y[a] * xi[a];
    acc += w * op.symbol.eval(x, xi) * cis(op.phase.value(x, xi) - yx);
  });
  return acc;
}

double truncation_defect(const OperatorSpec& op, const SampledField& f) {
  check_grid(op, f);
  std::vector<Complex> spec = forward_transform(f);
  const LatticeGrid& g = op.grid;
  const ProductSpace& sp = g.space();
  std::vector<int> idx(static_cast<std::size_t>(g.axes()));
  std::vector<double> outside, total;
  outside.reserve(spec.size());
  total.reserve(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    g.unravel(k, idx);
    double m = std::norm(spec[k]);
    bool in = true;
    for (int i = 0; i < sp.factors() && in; ++i) {
      double r2 = 0.0;
      for (int a = sp.axis_offset(i); a < sp.axis_offset(i) + sp.factor_dim(i); ++a) {
        double xi = g.frequency_of_slot(a, idx[static_cast<std::size_t>(a)]);
        r2 += xi * xi;
      }
      in = std::sqrt(r2) <= std::ldexp(1.0, op.levels[static_cast<std::size_t>(i)] - 1);
    }
    total.push_back(m);
    outside.push_back(in ? 0.0 : m);
  }
  double t = pairwise_sum(total);
  return t == 0.0 ? 0.0 : pairwise_sum(outside) / t;
}

double frequency_weight(const OperatorSpec& op, const ApplyRequest& request, std::span<const double> xi) {
  validate_request(op, request);
  auto sectors = make_sectors(op, request);
  const ProductSpace& sp = op.grid.space();
  double w = 1.0;
  for (int i = 0; i < sp.factors() && w != 0.0; ++i)
    w *= factor_weight(op, request, i,
                       xi.subspan(static_cast<std::size_t>(sp.axis_offset(i)), static_cast<std::size_t>(sp.factor_dim(i))),
                       sectors[static_cast<std::size_t>(i)].get());
  return w;
}

}  // namespace mpfio
