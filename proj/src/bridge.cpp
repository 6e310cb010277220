#include "metastab/bridge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>

#include "metastab/error.hpp"

namespace metastab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;
const cplx kI{0.0, 1.0};

std::vector<cplx> spectral_of(const GridField2D& f) { return forward_transform(f).storage(); }

GridField2D physical_of(std::vector<cplx> spec, Extents e) {
  return inverse_transform(GridField2D(e, Domain::torus, Space::spectral, std::move(spec)));
}

std::size_t at(Extents e, int k1, int k2) {
  return static_cast<std::size_t>(mode_slot(k1, e.n1)) * e.n2 + mode_slot(k2, e.n2);
}

void require_kind(const FieldPair& fp, FieldKind k, const char* what) {
  if (fp.kind != k) throw ConfigurationError(std::string(what) + ": wrong field kind");
}

// Torus coefficients (q^, p^) of the lattice fields described by fp.
struct QP {
  std::vector<cplx> q, p;
  Extents e;
};

QP qp_coefficients(const FieldPair& fp) {
  QP out;
  out.e = fp.extents();
  const Extents e = out.e;
  const auto a = spectral_of(fp.a);
  out.q.assign(e.size(), 0.0);
  out.p.assign(e.size(), 0.0);
  if (fp.kind == FieldKind::xi_eta) {
    const auto b = spectral_of(fp.b);
    const double scale = std::max(1.0, [&] {
      double s = 0.0;
      for (const auto& c : a) s += std::abs(c);
      return s;
    }());
    for (int i1 = 0; i1 < e.n1; ++i1) {
      const int k1 = signed_mode(i1, e.n1);
      for (int i2 = 0; i2 < e.n2; ++i2) {
        const std::size_t i = static_cast<std::size_t>(i1) * e.n2 + i2;
        out.q[i] = (a[i] + b[i]) / kSqrt2;
        if (k1 != 0) {
          out.p[i] = (a[i] - b[i]) / (kSqrt2 * kI * kPi * static_cast<double>(k1));
        } else if (std::abs(a[i] - b[i]) > 1e-10 * scale) {
          throw ConstraintError("gauge violation: xi - eta has a nonzero y1-mean");
        }
      }
    }
  } else {
    for (int i1 = 0; i1 < e.n1; ++i1) {
      for (int i2 = 0; i2 < e.n2; ++i2) {
        const std::size_t i = static_cast<std::size_t>(i1) * e.n2 + i2;
        const cplx m = std::conj(a[at(e, -signed_mode(i1, e.n1), -signed_mode(i2, e.n2))]);
        out.q[i] = (a[i] + m) / kSqrt2;
        out.p[i] = kI * (a[i] - m) / kSqrt2;
      }
    }
  }
  return out;
}

// Lattice coefficients Q^_k = (sqrt N/2) mu^aq sum_{K = k} q^_K, likewise P.
void fold_to_lattice(const QP& c, const LatticeParams& params, FieldScaling s, std::vector<cplx>& Qh,
                     std::vector<cplx>& Ph) {
  const Extents L = params.extents();
  Qh.assign(L.size(), 0.0);
  Ph.assign(L.size(), 0.0);
  const double base = 0.5 * std::sqrt(static_cast<double>(L.size()));
  const double fq = base * std::pow(params.mu(), s.aq), fp = base * std::pow(params.mu(), s.ap);
  for (int i1 = 0; i1 < c.e.n1; ++i1) {
    const int k1 = signed_mode(i1, c.e.n1);
    for (int i2 = 0; i2 < c.e.n2; ++i2) {
      const int k2 = signed_mode(i2, c.e.n2);
      const std::size_t i = static_cast<std::size_t>(i1) * c.e.n2 + i2;
      const std::size_t j = at(L, k1, k2);
      Qh[j] += fq * c.q[i];
      Ph[j] += fp * c.p[i];
    }
  }
}

LatticeState lattice_from_coefficients(std::vector<cplx> Qh, std::vector<cplx> Ph, const LatticeParams& params,
                                       double t) {
  const Extents L = params.extents();
  dft2d(Qh, L.n1, L.n2, +1);
  dft2d(Ph, L.n1, L.n2, +1);
  const double s = 1.0 / std::sqrt(static_cast<double>(L.size()));
  LatticeState st = LatticeState::zero(params);
  for (std::size_t i = 0; i < L.size(); ++i) {
    st.Q[i] = Qh[i].real() * s;
    st.P[i] = Ph[i].real() * s;
  }
  st.t = t;
  return st;
}

std::vector<cplx> translate(std::vector<cplx> v, Extents e, double shift) {
  // f(y1 - shift): multiply by exp(-i pi k1 shift).
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const cplx ph = std::polar(1.0, -kPi * signed_mode(i1, e.n1) * shift);
    for (int i2 = 0; i2 < e.n2; ++i2) v[static_cast<std::size_t>(i1) * e.n2 + i2] *= ph;
  }
  return v;
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kp: return "KP";
    case Regime::kdv: return "KdV";
    case Regime::mkdv: return "mKdV";
    case Regime::nls1d: return "NLS1D";
    case Regime::nls2d: return "NLS2D";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "KP") return Regime::kp;
  if (s == "KdV") return Regime::kdv;
  if (s == "mKdV") return Regime::mkdv;
  if (s == "NLS1D") return Regime::nls1d;
  if (s == "NLS2D") return Regime::nls2d;
  throw ConfigurationError("unknown regime '" + s + "' (expected KP, KdV, mKdV, NLS1D or NLS2D)");
}

LatticeModel lattice_model(Regime r) {
  return r == Regime::nls1d || r == Regime::nls2d ? LatticeModel::kg : LatticeModel::etl;
}

NormalForm normal_form(Regime r) {
  switch (r) {
    case Regime::kp: return NormalForm::kp2;
    case Regime::kdv: return NormalForm::kdv;
    case Regime::mkdv: return NormalForm::mkdv;
    case Regime::nls1d: return NormalForm::nls1d;
    case Regime::nls2d: return NormalForm::nls2d;
  }
  return NormalForm::kdv;
}

int energy_exponent(Regime r) { return r == Regime::kp || r == Regime::kdv ? 4 : 2; }

int horizon_exponent(Regime r) { return lattice_model(r) == LatticeModel::etl ? 3 : 2; }

double default_gamma(Regime r) {
  switch (r) {
    case Regime::kp: return 0.4;
    case Regime::kdv: return 1.0;
    case Regime::mkdv: return 1.0;
    case Regime::nls1d: return 0.5;
    case Regime::nls2d: return 0.5;
  }
  return 1.0;
}

FieldScaling FieldScaling::of(Regime r) {
  if (r == Regime::kp || r == Regime::kdv) return {2, 1};
  if (r == Regime::mkdv) return {1, 0};
  return {1, 1};
}

std::optional<std::string> regime_window_violation(Regime r, double sigma, double gamma) {
  if (!(gamma > 0.0)) return std::string("gamma > 0 violated");
  switch (r) {
    case Regime::kp:
      // The realized sigma of an integer lattice is only close to 2.
      if (std::abs(sigma - 2.0) > 0.02) return std::string("sigma = 2 violated");
      if (!(gamma < 0.5)) return std::string("gamma < 1/2 violated");
      break;
    case Regime::kdv:
      if (!(sigma > 2.0)) return std::string("2 < sigma violated");
      if (!(sigma < 7.0)) return std::string("sigma < 7 violated");
      if (!(sigma + 2.0 * gamma < std::min(4.0 * sigma - 5.0, 7.0)))
        return std::string("sigma+2*gamma < min(4*sigma-5, 7) violated");
      break;
    case Regime::mkdv:
      if (!(sigma > 2.0)) return std::string("sigma > 2 violated");
      break;
    case Regime::nls1d:
      if (!(sigma > 1.0)) return std::string("1 < sigma violated");
      if (!(sigma < 7.0)) return std::string("sigma < 7 violated");
      if (!(sigma + 2.0 * gamma < std::min(4.0 * sigma - 1.0, 7.0)))
        return std::string("sigma+2*gamma < min(4*sigma-1, 7) violated");
      break;
    case Regime::nls2d:
      if (std::abs(sigma - 1.0) > 1e-12) return std::string("sigma = 1 violated");
      break;
  }
  return std::nullopt;
}

// ---- coordinate changes ----

FieldPair qp_to_xieta(const GridField2D& q, const GridField2D& p) {
  if (q.extents() != p.extents()) throw ConfigurationError("qp_to_xieta: extents differ");
  const Extents e = q.extents();
  auto qh = spectral_of(q), ph = spectral_of(p);
  std::vector<cplx> xi(e.size()), eta(e.size());
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const cplx d = kI * kPi * static_cast<double>(signed_mode(i1, e.n1));
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * e.n2 + i2;
      xi[i] = (qh[i] + d * ph[i]) / kSqrt2;
      eta[i] = (qh[i] - d * ph[i]) / kSqrt2;
    }
  }
  FieldPair fp;
  fp.kind = FieldKind::xi_eta;
  fp.a = physical_of(std::move(xi), e);
  fp.b = physical_of(std::move(eta), e);
  for (auto& v : fp.a.values()) v = v.real();
  for (auto& v : fp.b.values()) v = v.real();
  return fp;
}

std::pair<GridField2D, GridField2D> xieta_to_qp(const FieldPair& fp) {
  require_kind(fp, FieldKind::xi_eta, "xieta_to_qp");
  auto c = qp_coefficients(fp);
  auto q = physical_of(std::move(c.q), c.e);
  auto p = physical_of(std::move(c.p), c.e);
  for (auto& v : q.values()) v = v.real();
  for (auto& v : p.values()) v = v.real();
  return {std::move(q), std::move(p)};
}

FieldPair qp_to_psi(const GridField2D& q, const GridField2D& p) {
  if (q.extents() != p.extents()) throw ConfigurationError("qp_to_psi: extents differ");
  FieldPair fp = FieldPair::zero(q.extents(), FieldKind::psi);
  for (std::size_t i = 0; i < q.extents().size(); ++i) {
    const cplx v = (q.values()[i].real() - kI * p.values()[i].real()) / kSqrt2;
    fp.a.values()[i] = v;
    fp.b.values()[i] = std::conj(v);
  }
  return fp;
}

std::pair<GridField2D, GridField2D> psi_to_qp(const FieldPair& fp) {
  require_kind(fp, FieldKind::psi, "psi_to_qp");
  GridField2D q(fp.extents(), Domain::torus), p(fp.extents(), Domain::torus);
  for (std::size_t i = 0; i < fp.extents().size(); ++i) {
    const cplx v = fp.a.values()[i];
    q.values()[i] = kSqrt2 * v.real();
    p.values()[i] = -kSqrt2 * v.imag();
  }
  return {std::move(q), std::move(p)};
}

FieldPair comoving(const FieldPair& lab, double tau) {
  require_kind(lab, FieldKind::xi_eta, "comoving");
  const Extents e = lab.extents();
  FieldPair out = lab;
  // xi(tau, y) = xi~(y1 - tau): undo with a shift of -tau; eta moves the other way.
  out.a = physical_of(translate(spectral_of(lab.a), e, -tau), e);
  out.b = physical_of(translate(spectral_of(lab.b), e, tau), e);
  for (auto& v : out.a.values()) v = v.real();
  for (auto& v : out.b.values()) v = v.real();
  return out;
}

FieldPair envelope(const FieldPair& lab, double t) {
  require_kind(lab, FieldKind::psi, "envelope");
  FieldPair out = lab;
  const cplx rot = std::polar(1.0, -t);
  for (std::size_t i = 0; i < lab.extents().size(); ++i) {
    out.a.values()[i] = lab.a.values()[i] * rot;
    out.b.values()[i] = std::conj(out.a.values()[i]);
  }
  return out;
}

LatticeState build_approx_etl(const FieldPair& fp, const LatticeParams& params, double t, FieldScaling scaling) {
  require_kind(fp, FieldKind::xi_eta, "build_approx_etl");
  const double tau = params.mu() * t;
  FieldPair lab = comoving(fp, -tau);
  auto c = qp_coefficients(lab);
  std::vector<cplx> Qh, Ph;
  fold_to_lattice(c, params, scaling, Qh, Ph);
  return lattice_from_coefficients(std::move(Qh), std::move(Ph), params, t);
}

LatticeState build_approx_kg(const FieldPair& fp, const LatticeParams& params, double t) {
  require_kind(fp, FieldKind::psi, "build_approx_kg");
  FieldPair lab = envelope(fp, -t);
  auto c = qp_coefficients(lab);
  std::vector<cplx> Qh, Ph;
  fold_to_lattice(c, params, {1, 1}, Qh, Ph);
  return lattice_from_coefficients(std::move(Qh), std::move(Ph), params, t);
}

FieldPair pde_data_from_lattice(const LatticeState& state, const LatticeParams& params, Extents grid, FieldKind kind,
                                FieldScaling scaling) {
  const Extents L = params.extents();
  std::vector<cplx> Qh(state.Q.begin(), state.Q.end()), Ph(state.P.begin(), state.P.end());
  dft2d(Qh, L.n1, L.n2, -1);
  dft2d(Ph, L.n1, L.n2, -1);
  // Unitary coefficients divided by (sqrt N/2) mu^a.
  const double unit = 1.0 / std::sqrt(static_cast<double>(L.size()));
  const double base = 0.5 * std::sqrt(static_cast<double>(L.size()));
  const double gq = unit / (base * std::pow(params.mu(), scaling.aq));
  const double gp = unit / (base * std::pow(params.mu(), scaling.ap));
  std::vector<cplx> q(grid.size()), p(grid.size());
  const int h1 = (grid.n1 - 1) / 2, h2 = (grid.n2 - 1) / 2;
  for (int k1 = -std::min(params.N1, h1); k1 <= std::min(params.N1, h1); ++k1) {
    for (int k2 = -std::min(params.N2, h2); k2 <= std::min(params.N2, h2); ++k2) {
      q[at(grid, k1, k2)] = gq * Qh[at(L, k1, k2)];
      p[at(grid, k1, k2)] = gp * Ph[at(L, k1, k2)];
    }
  }
  auto qf = physical_of(std::move(q), grid);
  auto pf = physical_of(std::move(p), grid);
  for (auto& v : qf.values()) v = v.real();
  for (auto& v : pf.values()) v = v.real();
  if (kind == FieldKind::psi) return qp_to_psi(qf, pf);
  // p's k1 = 0 modes do not enter (xi, eta): the zero-mean gauge.
  return qp_to_xieta(qf, pf);
}

ModeSpectrum spectrum_from_pde(const FieldPair& fp, const LatticeParams& params, FieldScaling scaling) {
  auto c = qp_coefficients(fp);
  std::vector<cplx> Qh, Ph;
  fold_to_lattice(c, params, scaling, Qh, Ph);
  const Extents L = params.extents();
  std::vector<double> E(L.size());
  const bool etl = params.model == LatticeModel::etl;
  for (int i1 = 0; i1 < L.n1; ++i1) {
    for (int i2 = 0; i2 < L.n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * L.n2 + i2;
      const double w2 = params.omega2(signed_mode(i1, L.n1), signed_mode(i2, L.n2));
      const double qq = std::norm(Qh[i]), pp = std::norm(Ph[i]);
      E[i] = etl ? 0.5 * (w2 * pp + qq) : 0.5 * (pp + w2 * qq);
    }
  }
  return ModeSpectrum(params, std::move(E), 0.0);
}

double spec_energy_from_pde(const FieldPair& fp, const LatticeParams& params, std::array<int, 2> k,
                            FieldScaling scaling) {
  if (std::abs(k[0]) > params.N1 || std::abs(k[1]) > params.N2) return 0.0;
  return spectrum_from_pde(fp, params, scaling).specific(k[0], k[1]);
}

// ---- fits ----

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigurationError("fit_line needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigurationError("fit_line: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.rms_residual = std::sqrt(ss / n);
  f.slope_stderr = x.size() > 2 ? std::sqrt(ss / (n - 2.0) / sxx) : 0.0;
  return f;
}

double localization_bound(const LocalizationFit& f, double r, double mu, int p, double gamma) {
  return f.c1 * std::pow(mu, p) * std::exp(-f.rho * r) + f.c2 * std::pow(mu, p + gamma);
}

namespace {

// ln E(r) - ln(exp(a - rho r) + exp(b)) for parameters (a, rho, b).
struct EnvelopeResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  EnvelopeResidual(const std::vector<double>& r, const std::vector<double>& lnE) : r(r), lnE(lnE) {}
  int inputs() const { return 3; }
  int values() const { return static_cast<int>(r.size()); }

  static double model(const Eigen::VectorXd& x, double r) {
    const double u = x(0) - x(1) * r, v = x(2);
    return std::max(u, v) + std::log1p(std::exp(-std::abs(u - v)));
  }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < r.size(); ++i) f(i) = lnE[i] - model(x, r[i]);
    return 0;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double wgt = 1.0 / (1.0 + std::exp(x(2) - (x(0) - x(1) * r[i])));
      J(i, 0) = -wgt;
      J(i, 1) = r[i] * wgt;
      J(i, 2) = -(1.0 - wgt);
    }
    return 0;
  }

  const std::vector<double>& r;
  const std::vector<double>& lnE;
};

}  // namespace

LocalizationFit fit_localization(const std::vector<double>& fit_spectrum, const std::vector<std::vector<double>>& all,
                                 int N1, int N2, double mu, int p, double gamma) {
  const std::size_t w = static_cast<std::size_t>(N2) + 1;
  if (fit_spectrum.size() != (static_cast<std::size_t>(N1) + 1) * w)
    throw ConfigurationError("fit_localization: spectrum size does not match lattice");
  const int smax = static_cast<int>(std::ceil(std::hypot(N1, N2))) + 1;
  std::vector<double> env(smax + 1, 0.0);
  for (int k1 = 0; k1 <= N1; ++k1)
    for (int k2 = 0; k2 <= N2; ++k2) {
      const int s = static_cast<int>(std::lround(std::hypot(k1, k2)));
      env[s] = std::max(env[s], fit_spectrum[k1 * w + k2]);
    }
  // The bound decreases in r, so compare with the smallest decreasing majorant.
  for (int s = smax - 1; s >= 0; --s) env[s] = std::max(env[s], env[s + 1]);
  std::vector<int> shells;
  for (int s = 1; s <= smax; ++s)
    if (env[s] > 0.0) shells.push_back(s);
  LocalizationFit fit;
  if (shells.size() < 3) return fit;
  // Floor: median envelope over the upper half of the occupied shells.
  std::vector<double> upper;
  for (std::size_t i = shells.size() / 2; i < shells.size(); ++i) upper.push_back(env[shells[i]]);
  std::nth_element(upper.begin(), upper.begin() + upper.size() / 2, upper.end());
  const double floor = upper[upper.size() / 2];
  // Fitted shells: the decay down to the floor and as many shells again.
  int s_end = shells.back();
  for (int s : shells)
    if (env[s] <= 10.0 * floor) {
      s_end = s;
      break;
    }
  std::vector<double> xs, ys, line_x, line_y;
  for (int s : shells) {
    if (s > 2 * s_end) break;
    xs.push_back(s);
    ys.push_back(std::log(env[s]));
    if (s < s_end) {
      line_x.push_back(s);
      line_y.push_back(std::log(env[s]));
    }
  }
  if (line_x.size() < 2 || xs.size() < 4) return fit;
  const LineFit start = fit_line(line_x, line_y);
  EnvelopeResidual f(xs, ys);
  Eigen::VectorXd x(3);
  x << start.intercept, -start.slope, std::log(floor);
  Eigen::LevenbergMarquardt<EnvelopeResidual> lm(f);
  lm.parameters.maxfev = 2000;
  lm.minimize(x);
  fit.rho = x(1);
  fit.shells_used = static_cast<int>(xs.size());
  Eigen::VectorXd res(xs.size());
  f(x, res);
  const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
  fit.residual = std::sqrt(res.squaredNorm() / static_cast<double>(xs.size())) / (*hi - *lo);
  fit.c1 = std::exp(x(0)) / std::pow(mu, p);
  fit.c2 = std::exp(x(2)) / std::pow(mu, p + gamma);
  double ratio = 0.0;
  for (const auto& spec : all) {
    for (int k1 = 0; k1 <= N1; ++k1)
      for (int k2 = 0; k2 <= N2; ++k2) {
        const double b = localization_bound(fit, std::hypot(k1, k2), mu, p, gamma);
        ratio = std::max(ratio, spec[k1 * w + k2] / b);
      }
  }
  fit.bound_ratio = ratio;
  if (ratio > 1.0) {
    fit.c1 *= ratio;
    fit.c2 *= ratio;
  }
  return fit;
}

double high_mode_fraction(const std::vector<double>& folded, int N1, int N2, double cutoff) {
  const std::size_t w = static_cast<std::size_t>(N2) + 1;
  double hi = 0.0, tot = 0.0;
  for (int k1 = 0; k1 <= N1; ++k1)
    for (int k2 = 0; k2 <= N2; ++k2) {
      const double e = folded[k1 * w + k2];
      tot += e;
      if (k1 + k2 > cutoff) hi += e;
    }
  return tot > 0.0 ? hi / tot : 0.0;
}

// ---- comparison ----

double ErrorReport::max_sup_error() const {
  double m = 0.0;
  for (double v : sup_error) m = std::max(m, v);
  return m;
}

const SpectrumSnapshot* ErrorReport::snapshot_at(double t) const {
  for (const auto& s : spectra)
    if (std::abs(s.t - t) <= 1e-9 * std::max(1.0, std::abs(t))) return &s;
  return nullptr;
}

namespace {

// sup |Q - Qa| + sup |P - Pa|, with P compared modulo its mean along each j1
// line (the k1 = 0 modes), which the continuum description leaves undetermined.
double sup_error(const LatticeState& s, const LatticeState& a, const LatticeParams& params, bool etl) {
  const int n1 = params.n1(), n2 = params.n2();
  double eq = 0.0, ep = 0.0;
  std::vector<double> mean(n2, 0.0);
  if (etl) {
    for (int i1 = 0; i1 < n1; ++i1)
      for (int i2 = 0; i2 < n2; ++i2) {
        const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
        mean[i2] += s.P[i] - a.P[i];
      }
    for (auto& m : mean) m /= n1;
  }
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i2 = 0; i2 < n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      eq = std::max(eq, std::abs(s.Q[i] - a.Q[i]));
      ep = std::max(ep, std::abs(s.P[i] - a.P[i] - mean[i2]));
    }
  return eq + ep;
}

}  // namespace

ErrorReport run_comparison(const RegimeSpec& spec, const LatticeParams& params, const ComparisonOptions& opts) {
  const auto clock_start = std::chrono::steady_clock::now();
  const Regime r = spec.regime;
  if (params.model != lattice_model(r))
    throw ConfigurationError(to_string(r) + " runs need the " + to_string(lattice_model(r)) + " lattice");
  if (auto v = regime_window_violation(r, params.sigma(), spec.gamma))
    throw ValidationError(to_string(r) + " window: " + *v + " (sigma=" + std::to_string(params.sigma()) + ")");
  if (opts.samples < 2) throw ConfigurationError("run_comparison needs at least two samples");
  if (!(opts.C0 > 0.0) || !(opts.T0 > 0.0)) throw ConfigurationError("C0 and T0 must be positive");

  const bool etl = params.model == LatticeModel::etl;
  const double mu = params.mu();
  const int p = energy_exponent(r);
  const FieldScaling scaling = FieldScaling::of(r);
  const double T = opts.T0 / std::pow(mu, horizon_exponent(r));

  ErrorReport rep;
  rep.regime = to_string(r);
  rep.N1 = params.N1;
  rep.N2 = params.N2;
  rep.mu = mu;
  rep.sigma = params.sigma();
  rep.p = p;
  rep.alpha = params.alpha;
  rep.beta = params.beta;
  rep.C0 = opts.C0;
  rep.T0 = opts.T0;
  rep.gamma_target = spec.gamma;
  const Scheme scheme = opts.scheme.value_or(default_scheme(params));
  rep.scheme = to_string(scheme);

  // Lattice steps: the default dt, shortened so that samples fall on steps.
  const double dt_max = opts.dt.value_or(default_dt(params));
  const long long intervals = opts.samples - 1;
  const long long per = std::max(1LL, static_cast<long long>(std::ceil(T / intervals / dt_max - 1e-9)));
  const double dt = T / static_cast<double>(intervals * per);
  rep.dt = dt;

  if (opts.harmonics < 1) throw ConfigurationError("harmonics must be at least 1");
  LatticeState lat = single_mode_data_with_energy(params, opts.k0, opts.C0 * std::pow(mu, p));
  for (int m = 2; m <= opts.harmonics; ++m) {
    const std::array<int, 2> km{m * opts.k0[0], m * opts.k0[1]};
    if (km[0] > params.N1 || km[1] > params.N2) break;
    const double e = opts.C0 * std::pow(mu, p) *
                     std::exp(-opts.harmonic_decay * (m - 1) * std::hypot(opts.k0[0], opts.k0[1]));
    const auto h = single_mode_data_with_energy(params, km, e);
    for (std::size_t i = 0; i < lat.Q.size(); ++i) {
      lat.Q[i] += h.Q[i];
      lat.P[i] += h.P[i];
    }
  }
  const double H0 = total_energy(lat, params);
  LatticeIntegrator integ(params, scheme);

  NormalFormCoefficients coeffs;
  switch (r) {
    case Regime::kp: coeffs = NormalFormCoefficients::kp2(mu, params.alpha, params.sigma()); break;
    case Regime::kdv: coeffs = NormalFormCoefficients::kdv(mu, params.alpha); break;
    case Regime::mkdv: coeffs = NormalFormCoefficients::mkdv(mu, params.beta); break;
    case Regime::nls1d:
    case Regime::nls2d:
      coeffs = opts.stated_nls_dispersion ? NormalFormCoefficients::nls(mu, params.beta)
                                          : NormalFormCoefficients::nls_lattice(mu, params.beta);
      break;
  }
  const NormalForm form = normal_form(r);
  NormalFormSolver solver(form, coeffs, opts.pde_grid);
  FieldPair fp0 = pde_data_from_lattice(lat, params, opts.pde_grid, solver.kind(), scaling);
  if (form == NormalForm::kp2) {
    // Lattice modes with k1 = 0 carry no (xi, eta) content in the KP description.
    auto a = forward_transform(fp0.a), b = forward_transform(fp0.b);
    for (int i2 = 1; i2 < opts.pde_grid.n2; ++i2) a.at(0, i2) = b.at(0, i2) = 0.0;
    fp0.a = inverse_transform(a);
    fp0.b = inverse_transform(b);
  }
  SpectralPair pde = solver.to_spectral(fp0);
  // PDE time: tau = mu t (ETL) or t (KG); slow time is mu^2 tau.
  const double pde_per_t = etl ? mu : 1.0;
  const double pde_dt = 1.0 / (opts.pde_steps_per_unit * mu * mu);

  const double low_cut = (2.0 + spec.delta) * std::abs(std::log(mu)) / spec.rho;
  std::vector<double> snapshot_t;
  for (double f : opts.snapshot_fractions) snapshot_t.push_back(f * T);

  std::vector<std::vector<double>> folded_all;
  std::vector<double> final_folded;
  for (long long m = 0; m <= intervals; ++m) {
    if (m > 0) {
      integ.advance(lat, dt, per);
      lat.t = T * static_cast<double>(m) / static_cast<double>(intervals);
      check_finite(lat);
      solver.advance_to(pde, pde_per_t * lat.t, pde_dt);
    }
    const double t = lat.t;
    FieldPair lab = solver.to_fields(pde);
    LatticeState approx = etl ? build_approx_etl(comoving(lab, pde.tau), params, t, scaling)
                              : build_approx_kg(envelope(lab, t), params, t);
    rep.times.push_back(t);
    rep.sup_error.push_back(sup_error(lat, approx, params, etl));
    rep.energy_drift = std::max(rep.energy_drift, std::abs(total_energy(lat, params) - H0) / std::abs(H0));

    const ModeSpectrum ms = mode_energies(lat, params);
    auto folded = ms.folded_table();
    // Leading-order per-mode correspondence on the low-mode window.
    const auto xa = forward_transform(lab.a).storage();
    const auto xb = etl ? forward_transform(lab.b).storage() : std::vector<cplx>{};
    double gap_max = 0.0;
    std::vector<ModeGap> gaps;
    const Extents g = opts.pde_grid;
    const int lim = static_cast<int>(std::floor(low_cut));
    for (int k1 = -std::min(lim, params.N1); k1 <= std::min(lim, params.N1); ++k1) {
      for (int k2 = -std::min(lim, params.N2); k2 <= std::min(lim, params.N2); ++k2) {
        if (std::abs(k1) + std::abs(k2) > low_cut) continue;
        if (2 * std::abs(k1) >= g.n1 || 2 * std::abs(k2) >= g.n2) continue;
        const double lead =
            etl ? std::pow(mu, 2 * scaling.aq) * (std::norm(xa[at(g, k1, k2)]) + std::norm(xb[at(g, k1, k2)])) / 2.0
                : mu * mu * (std::norm(xa[at(g, k1, k2)]) + std::norm(xa[at(g, -k1, -k2)])) / 2.0;
        const double gap = std::abs(ms.specific(k1, k2) - lead);
        gap_max = std::max(gap_max, gap);
        if (m == intervals && k1 >= 0 && k2 >= 0) gaps.push_back({k1, k2, gap});
      }
    }
    rep.max_mode_gap.push_back(gap_max);
    if (m == intervals) rep.per_mode_gap = std::move(gaps);

    for (double ts : snapshot_t)
      if (std::abs(ts - t) <= 1e-9 * std::max(1.0, T)) rep.spectra.push_back({t, folded});
    if (m == intervals) final_folded = folded;
    folded_all.push_back(std::move(folded));

    if (opts.budget_seconds > 0.0 && m > 0 && m < intervals) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
      const double projected = elapsed * static_cast<double>(intervals) / static_cast<double>(m);
      if (projected > opts.budget_seconds) {
        rep.status = "aborted";
        rep.runtime_s = elapsed;
        return rep;
      }
    }
  }

  const auto lf = fit_localization(final_folded, folded_all, params.N1, params.N2, mu, p, spec.gamma);
  rep.rho_fit = lf.rho;
  rep.c1_fit = lf.c1;
  rep.c2_fit = lf.c2;
  rep.fit_residual = lf.residual;
  rep.bound_ratio = lf.bound_ratio;
  const double cutoff = lf.rho > 0.0 ? 2.0 * std::abs(std::log(mu)) / lf.rho : 0.0;
  for (const auto& f : folded_all)
    rep.high_mode_fraction.push_back(lf.rho > 0.0 ? high_mode_fraction(f, params.N1, params.N2, cutoff) : 1.0);
  // High modes beyond the window of the analytic estimate, scaled by mu^8.
  double hi = 0.0;
  const std::size_t w = static_cast<std::size_t>(params.N2) + 1;
  for (const auto& f : folded_all)
    for (int k1 = 0; k1 <= params.N1; ++k1)
      for (int k2 = 0; k2 <= params.N2; ++k2)
        if (k1 + k2 > low_cut) hi = std::max(hi, f[k1 * w + k2]);
  rep.high_mode_scaled = hi / std::pow(mu, 8);
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return rep;
}

LineFit fit_gamma(const std::vector<ErrorReport>& scan) {
  std::vector<double> x, y;
  for (const auto& r : scan) {
    x.push_back(std::log(r.mu));
    y.push_back(std::log(r.max_sup_error()));
  }
  return fit_line(x, y);
}

}  // namespace metastab
