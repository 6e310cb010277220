#include "metastab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "metastab/error.hpp"

namespace metastab {

namespace {

// Calls f(i, lap_i) for every site with lap the 5-point Laplacian of `in`.
template <class F>
inline void for_each_laplacian(const double* in, int n1, int n2, F&& f) {
  const std::size_t w = static_cast<std::size_t>(n2);
  for (int i1 = 0; i1 < n1; ++i1) {
    const double* c = in + i1 * w;
    const double* u = in + ((i1 + n1 - 1) % n1) * w;
    const double* d = in + ((i1 + 1) % n1) * w;
    const std::size_t base = i1 * w;
    f(base, u[0] + d[0] + c[w - 1] + c[1] - 4.0 * c[0]);
    for (std::size_t i = 1; i + 1 < w; ++i) f(base + i, u[i] + d[i] + c[i - 1] + c[i + 1] - 4.0 * c[i]);
    f(base + w - 1, u[w - 1] + d[w - 1] + c[w - 2] + c[0] - 4.0 * c[w - 1]);
  }
}

void require_model(const LatticeParams& p, LatticeModel m, const char* op) {
  if (p.model != m) throw ConfigurationError(std::string(op) + ": regime mismatch, lattice is " + to_string(p.model));
}

void require_shape(const LatticeState& s, const LatticeParams& p) {
  if (s.Q.size() != p.sites() || s.P.size() != p.sites())
    throw ConfigurationError("lattice state does not match " + std::to_string(p.n1()) + "x" + std::to_string(p.n2()));
}

constexpr double kSuzukiP = 0.41449077179437573714;  // 1/(4 - 4^{1/3})

const double kLeapfrog[] = {1.0};
const double kSuzuki4[] = {kSuzukiP, kSuzukiP, 1.0 - 4.0 * kSuzukiP, kSuzukiP, kSuzukiP};
// Kahan and Li, nine-stage sixth-order symmetric composition.
const double kKahanLi6[] = {0.39216144400731413928,  0.33259913678935943860, -0.70624617255763935981,
                            0.08221359629355080023,  0.79854399093482996340, 0.08221359629355080023,
                            -0.70624617255763935981, 0.33259913678935943860, 0.39216144400731413928};

}  // namespace

std::string to_string(LatticeModel m) { return m == LatticeModel::etl ? "ETL" : "KG"; }

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::leapfrog: return "leapfrog";
    case Scheme::suzuki4: return "suzuki4";
    case Scheme::kahan_li6: return "kahan_li6";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "leapfrog") return Scheme::leapfrog;
  if (s == "suzuki4") return Scheme::suzuki4;
  if (s == "kahan_li6") return Scheme::kahan_li6;
  throw ConfigurationError("unknown integrator scheme '" + s + "'");
}

std::span<const double> composition_weights(Scheme s) {
  switch (s) {
    case Scheme::leapfrog: return kLeapfrog;
    case Scheme::suzuki4: return kSuzuki4;
    case Scheme::kahan_li6: return kKahanLi6;
  }
  return kLeapfrog;
}

LatticeParams LatticeParams::make(LatticeModel model, int N1, int N2, double alpha, double beta, bool allow_linear) {
  if (N1 < 1 || N2 < 1) throw ConfigurationError("lattice sizes must be positive");
  if (N1 > N2) throw ConfigurationError("lattice needs N1 <= N2");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ConfigurationError("potential coefficients must be finite");
  if (model == LatticeModel::kg && !(beta > 0.0) && !(allow_linear && beta == 0.0))
    throw ConfigurationError("KG lattice needs beta > 0");
  LatticeParams p;
  p.model = model;
  p.N1 = N1;
  p.N2 = N2;
  p.alpha = model == LatticeModel::etl ? alpha : 0.0;
  p.beta = beta;
  p.m = 1.0;
  return p;
}

int LatticeParams::n2_for_sigma(int N1, double sigma) {
  if (N1 < 1 || !(sigma >= 1.0)) throw ConfigurationError("n2_for_sigma needs N1 >= 1 and sigma >= 1");
  const double v = std::pow(N1 + 0.5, sigma) - 0.5;
  if (v > 1e8) throw ConfigurationError("requested lattice is too large");
  return static_cast<int>(std::lround(v));
}

double LatticeParams::sigma() const { return std::log(N2 + 0.5) / std::log(N1 + 0.5); }

double LatticeParams::omega2(int k1, int k2) const {
  const double w = -delta1_symbol(k1, k2, {N1, N2});
  return model == LatticeModel::etl ? w : m * m + w;
}

double LatticeParams::omega_max() const { return std::sqrt(omega2(N1, N2)); }

LatticeState LatticeState::zero(const LatticeParams& params) {
  LatticeState s;
  s.Q.assign(params.sites(), 0.0);
  s.P.assign(params.sites(), 0.0);
  return s;
}

LatticeRhs etl_rhs(const LatticeState& state, const LatticeParams& params) {
  require_model(params, LatticeModel::etl, "etl_rhs");
  require_shape(state, params);
  LatticeRhs r{std::vector<double>(params.sites()), std::vector<double>(params.sites())};
  for_each_laplacian(state.P.data(), params.n1(), params.n2(), [&](std::size_t i, double lap) { r.dQ[i] = -lap; });
  const double a = params.alpha, b = params.beta;
  for (std::size_t i = 0; i < r.dP.size(); ++i) {
    const double q = state.Q[i];
    r.dP[i] = -(q + q * q * (a + b * q));
  }
  return r;
}

LatticeRhs kg_rhs(const LatticeState& state, const LatticeParams& params) {
  require_model(params, LatticeModel::kg, "kg_rhs");
  require_shape(state, params);
  LatticeRhs r{state.P, std::vector<double>(params.sites())};
  const double m2 = params.m * params.m, b = params.beta;
  for_each_laplacian(state.Q.data(), params.n1(), params.n2(), [&](std::size_t i, double lap) {
    const double q = state.Q[i];
    r.dP[i] = lap - m2 * q - b * q * q * q;
  });
  return r;
}

double default_dt(const LatticeParams& params) {
  if (params.model == LatticeModel::etl) return params.mu() / 10.0;
  return std::min(0.05, 1.0 / (4.0 * params.omega_max()));
}

Scheme default_scheme(const LatticeParams& params) {
  return params.model == LatticeModel::etl ? Scheme::suzuki4 : Scheme::kahan_li6;
}

LatticeIntegrator::LatticeIntegrator(const LatticeParams& params, Scheme scheme) : params_(params), scheme_(scheme) {}

void LatticeIntegrator::kick(LatticeState& s, double h) {
  const double a = params_.alpha, b = params_.beta;
  double* P = s.P.data();
  const double* Q = s.Q.data();
  if (params_.model == LatticeModel::etl) {
    const std::size_t n = s.P.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double q = Q[i];
      P[i] -= h * (q + q * q * (a + b * q));
    }
  } else {
    const double m2 = params_.m * params_.m;
    for_each_laplacian(Q, params_.n1(), params_.n2(), [&](std::size_t i, double lap) {
      const double q = Q[i];
      P[i] += h * (lap - m2 * q - b * q * q * q);
    });
  }
}

void LatticeIntegrator::drift(LatticeState& s, double h) {
  double* Q = s.Q.data();
  const double* P = s.P.data();
  if (params_.model == LatticeModel::etl) {
    for_each_laplacian(P, params_.n1(), params_.n2(), [&](std::size_t i, double lap) { Q[i] -= h * lap; });
  } else {
    const std::size_t n = s.Q.size();
    for (std::size_t i = 0; i < n; ++i) Q[i] += h * P[i];
  }
}

void LatticeIntegrator::kick_drift_etl(LatticeState& s, double hk, double hd) {
  // Row-fused kick then drift. Drifting row i needs the kicked momenta of rows
  // i-1, i, i+1, so kicks run one row ahead; the wrap rows are kicked first.
  const int n1 = params_.n1(), n2 = params_.n2();
  const std::size_t w = static_cast<std::size_t>(n2);
  const double a = params_.alpha, b = params_.beta;
  double* __restrict Q = s.Q.data();
  double* __restrict P = s.P.data();
  auto kick_row = [&](int r) {
    double* __restrict p = P + r * w;
    const double* __restrict q = Q + r * w;
    for (std::size_t i = 0; i < w; ++i) {
      const double x = q[i];
      p[i] -= hk * (x + x * x * (a + b * x));
    }
  };
  auto drift_row = [&](int r) {
    const double* __restrict c = P + r * w;
    const double* __restrict u = P + ((r + n1 - 1) % n1) * w;
    const double* __restrict d = P + ((r + 1) % n1) * w;
    double* __restrict q = Q + r * w;
    q[0] -= hd * (u[0] + d[0] + c[w - 1] + c[1] - 4.0 * c[0]);
    for (std::size_t i = 1; i + 1 < w; ++i) q[i] -= hd * (u[i] + d[i] + c[i - 1] + c[i + 1] - 4.0 * c[i]);
    q[w - 1] -= hd * (u[w - 1] + d[w - 1] + c[w - 2] + c[0] - 4.0 * c[w - 1]);
  };
  kick_row(n1 - 1);
  kick_row(0);
  for (int r = 0; r < n1; ++r) {
    if (r + 1 < n1 - 1) kick_row(r + 1);
    drift_row(r);
  }
}

void LatticeIntegrator::advance(LatticeState& state, double dt, long long steps) {
  require_shape(state, params_);
  if (steps <= 0) return;
  const auto w = composition_weights(scheme_);
  const std::size_t s = w.size();
  // kick(w0 dt/2) drift(w0 dt) kick((w0+w1) dt/2) ... drift(w_last dt) kick(w_last dt/2),
  // with the closing kick of one step fused into the opening kick of the next.
  const double t0 = state.t;
  const bool etl = params_.model == LatticeModel::etl;
  double pending = 0.5 * w[0] * dt;
  for (long long n = 0; n < steps; ++n) {
    for (std::size_t i = 0; i < s; ++i) {
      if (etl) {
        kick_drift_etl(state, pending, w[i] * dt);
      } else {
        kick(state, pending);
        drift(state, w[i] * dt);
      }
      const double next = i + 1 < s ? w[i + 1] : (n + 1 < steps ? w[0] : 0.0);
      pending = 0.5 * (w[i] + next) * dt;
    }
  }
  kick(state, pending);
  state.t = t0 + static_cast<double>(steps) * dt;
}

LatticeState step_leapfrog(const LatticeState& state, const LatticeParams& params, double dt) {
  if (!(dt != 0.0) || !std::isfinite(dt)) throw ConfigurationError("step_leapfrog needs a finite nonzero dt");
  LatticeState out = state;
  LatticeIntegrator integ(params, Scheme::leapfrog);
  integ.advance(out, dt, 1);
  check_finite(out);
  return out;
}

void check_finite(const LatticeState& state) {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (std::any_of(state.Q.begin(), state.Q.end(), bad) || std::any_of(state.P.begin(), state.P.end(), bad))
    throw NumericalBlowup("lattice state is not finite", state.t);
}

ModeSpectrum::ModeSpectrum(const LatticeParams& params, std::vector<double> E, double t)
    : N1_(params.N1), N2_(params.N2), t_(t), scale_(1.0 / ((params.N1 + 0.5) * (params.N2 + 0.5))), E_(std::move(E)) {
  if (E_.size() != params.sites()) throw ConfigurationError("spectrum size does not match lattice");
}

double ModeSpectrum::energy(int k1, int k2) const {
  if (std::abs(k1) > N1_ || std::abs(k2) > N2_) throw ConfigurationError("mode outside the lattice");
  return E_[static_cast<std::size_t>(mode_slot(k1, 2 * N1_ + 1)) * (2 * N2_ + 1) + mode_slot(k2, 2 * N2_ + 1)];
}

double ModeSpectrum::specific(int k1, int k2) const { return energy(k1, k2) * scale_; }

double ModeSpectrum::folded(int k1, int k2) const {
  if (k1 < 0 || k2 < 0) throw ConfigurationError("folded spectrum is indexed on nonnegative modes");
  double e = energy(k1, k2);
  if (k1 > 0) e += energy(-k1, k2);
  if (k2 > 0) e += energy(k1, -k2);
  if (k1 > 0 && k2 > 0) e += energy(-k1, -k2);
  return e * scale_;
}

std::vector<double> ModeSpectrum::folded_table() const {
  std::vector<double> out(static_cast<std::size_t>(N1_ + 1) * (N2_ + 1));
  for (int k1 = 0; k1 <= N1_; ++k1)
    for (int k2 = 0; k2 <= N2_; ++k2) out[static_cast<std::size_t>(k1) * (N2_ + 1) + k2] = folded(k1, k2);
  return out;
}

double ModeSpectrum::total_energy() const {
  double s = 0.0;
  for (double e : E_) s += e;
  return s;
}

ModeSpectrum mode_energies(const LatticeState& state, const LatticeParams& params) {
  require_shape(state, params);
  const int n1 = params.n1(), n2 = params.n2();
  std::vector<cplx> q(state.Q.begin(), state.Q.end()), p(state.P.begin(), state.P.end());
  dft2d(q, n1, n2, -1);
  dft2d(p, n1, n2, -1);
  const double inv_n = 1.0 / static_cast<double>(params.sites());
  std::vector<double> E(params.sites());
  // omega^2 separates into per-axis parts.
  std::vector<double> w1(n1), w2(n2);
  for (int i = 0; i < n1; ++i) w1[i] = -delta1_symbol(signed_mode(i, n1), 0, {params.N1, params.N2});
  for (int i = 0; i < n2; ++i) w2[i] = -delta1_symbol(0, signed_mode(i, n2), {params.N1, params.N2});
  const bool etl = params.model == LatticeModel::etl;
  const double m2 = params.m * params.m;
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      const double qq = std::norm(q[i]) * inv_n, pp = std::norm(p[i]) * inv_n;
      const double w = w1[i1] + w2[i2];
      E[i] = etl ? 0.5 * (w * pp + qq) : 0.5 * (pp + (m2 + w) * qq);
    }
  }
  return ModeSpectrum(params, std::move(E), state.t);
}

double quadratic_energy(const LatticeState& state, const LatticeParams& params) {
  require_shape(state, params);
  double s = 0.0;
  if (params.model == LatticeModel::etl) {
    for_each_laplacian(state.P.data(), params.n1(), params.n2(), [&](std::size_t i, double lap) {
      const double q = state.Q[i];
      s += 0.5 * (q * q - state.P[i] * lap);
    });
  } else {
    const double m2 = params.m * params.m;
    for_each_laplacian(state.Q.data(), params.n1(), params.n2(), [&](std::size_t i, double lap) {
      const double q = state.Q[i], p = state.P[i];
      s += 0.5 * (p * p - q * lap + m2 * q * q);
    });
  }
  return s;
}

double total_energy(const LatticeState& state, const LatticeParams& params) {
  double s = quadratic_energy(state, params);
  const double a = params.model == LatticeModel::etl ? params.alpha : 0.0, b = params.beta;
  if (a != 0.0 || b != 0.0) {
    double nl = 0.0;
    for (double q : state.Q) {
      const double q3 = q * q * q;
      nl += q3 * (a / 3.0 + b * q / 4.0);
    }
    s += nl;
  }
  return s;
}

LatticeState single_mode_data_with_energy(const LatticeParams& params, std::array<int, 2> k0, double specific_energy,
                                          double phase) {
  const int k1 = std::abs(k0[0]), k2 = std::abs(k0[1]);
  if (k1 > params.N1 || k2 > params.N2) throw ConfigurationError("single-mode index outside the lattice");
  if (params.model == LatticeModel::etl && k1 == 0 && k2 == 0)
    throw ConfigurationError("ETL data cannot excite the zero mode");
  if (!(specific_energy > 0.0)) throw ConfigurationError("single-mode energy must be positive");
  const int orbit = (k1 > 0 ? 2 : 1) * (k2 > 0 ? 2 : 1);
  // cos(th1) cos(th2) puts sqrt(N) a/orbit on each signed mode; the folded
  // specific energy is then 2 a^2 / orbit.
  const double a = std::sqrt(orbit * specific_energy / 2.0);
  const double w = std::sqrt(params.omega2(k1, k2));
  double qa, pa;
  if (params.model == LatticeModel::etl) {
    qa = a * std::cos(phase);
    pa = a * std::sin(phase) / w;
  } else {
    qa = a * std::cos(phase) / w;
    pa = a * std::sin(phase);
  }
  LatticeState s = LatticeState::zero(params);
  const int n1 = params.n1(), n2 = params.n2();
  std::vector<double> c1(n1), c2(n2);
  for (int i = 0; i < n1; ++i) c1[i] = std::cos(2.0 * std::numbers::pi * k1 * i / n1);
  for (int i = 0; i < n2; ++i) c2[i] = std::cos(2.0 * std::numbers::pi * k2 * i / n2);
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      s.Q[i] = qa * c1[i1] * c2[i2];
      s.P[i] = pa * c1[i1] * c2[i2];
    }
  }
  return s;
}

LatticeState single_mode_data(const LatticeParams& params, std::array<int, 2> k0, double C0, double phase) {
  const double mu = params.mu();
  const double scale = params.model == LatticeModel::etl ? std::pow(mu, 4) : mu * mu;
  return single_mode_data_with_energy(params, k0, C0 * scale, phase);
}

void write_snapshot_csv(std::ostream& os, const LatticeState& state, const LatticeParams& params) {
  require_shape(state, params);
  os << std::setprecision(17);
  os << "# regime=" << to_string(params.model) << " N1=" << params.N1 << " N2=" << params.N2
     << " alpha=" << params.alpha << " beta=" << params.beta << " t=" << state.t << "\n";
  os << "j1,j2,Q,P\n";
  for (int j1 = -params.N1; j1 <= params.N1; ++j1) {
    for (int j2 = -params.N2; j2 <= params.N2; ++j2) {
      const std::size_t i = LatticeState::slot(params, j1, j2);
      os << j1 << ',' << j2 << ',' << state.Q[i] << ',' << state.P[i] << '\n';
    }
  }
}

LatticeState read_snapshot_csv(std::istream& is, LatticeParams& params) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw IoError("snapshot: missing header line");
  std::istringstream hs(line.substr(2));
  std::string tok, regime;
  double t = 0.0;
  LatticeParams p;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError("snapshot: bad header token '" + tok + "'");
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "regime") regime = v;
    else if (k == "N1") p.N1 = std::stoi(v);
    else if (k == "N2") p.N2 = std::stoi(v);
    else if (k == "alpha") p.alpha = std::stod(v);
    else if (k == "beta") p.beta = std::stod(v);
    else if (k == "t") t = std::stod(v);
  }
  if (regime != "ETL" && regime != "KG") throw IoError("snapshot: unknown regime '" + regime + "'");
  params = LatticeParams::make(regime == "ETL" ? LatticeModel::etl : LatticeModel::kg, p.N1, p.N2, p.alpha, p.beta, true);
  if (!std::getline(is, line) || line != "j1,j2,Q,P") throw IoError("snapshot: missing column header");
  LatticeState s = LatticeState::zero(params);
  s.t = t;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    int j1, j2;
    double q, pv;
    char c1, c2, c3;
    std::istringstream ls(line);
    if (!(ls >> j1 >> c1 >> j2 >> c2 >> q >> c3 >> pv)) throw IoError("snapshot: bad row '" + line + "'");
    if (std::abs(j1) > params.N1 || std::abs(j2) > params.N2) throw IoError("snapshot: site outside lattice");
    const std::size_t i = LatticeState::slot(params, j1, j2);
    s.Q[i] = q;
    s.P[i] = pv;
    ++rows;
  }
  if (rows != params.sites()) throw IoError("snapshot: expected " + std::to_string(params.sites()) + " rows");
  return s;
}

}  // namespace metastab
