#include "metastab/normal_form.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "metastab/error.hpp"

namespace metastab {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI{0.0, 1.0};

bool is_per_line(NormalForm f) { return f == NormalForm::kdv || f == NormalForm::mkdv || f == NormalForm::nls1d; }
bool is_cubic(NormalForm f) { return f == NormalForm::mkdv || f == NormalForm::nls1d || f == NormalForm::nls2d; }
bool is_psi(NormalForm f) { return f == NormalForm::nls1d || f == NormalForm::nls2d; }

// Torus-convention transforms on raw vectors.
void torus_forward(std::vector<cplx>& v, Extents e) {
  dft2d(v, e.n1, e.n2, -1);
  const double s = 2.0 / static_cast<double>(e.size());
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const int p1 = signed_mode(i1, e.n1) & 1;
    cplx* row = v.data() + static_cast<std::size_t>(i1) * e.n2;
    for (int i2 = 0; i2 < e.n2; ++i2) row[i2] *= ((p1 + signed_mode(i2, e.n2)) & 1) ? -s : s;
  }
}

void torus_inverse(std::vector<cplx>& v, Extents e) {
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const int p1 = signed_mode(i1, e.n1) & 1;
    cplx* row = v.data() + static_cast<std::size_t>(i1) * e.n2;
    for (int i2 = 0; i2 < e.n2; ++i2) row[i2] *= ((p1 + signed_mode(i2, e.n2)) & 1) ? -0.5 : 0.5;
  }
  dft2d(v, e.n1, e.n2, +1);
}

void require_torus(const GridField2D& f, Space s, const char* what) {
  if (f.domain() != Domain::torus) throw ConfigurationError(std::string(what) + ": expected a torus field");
  if (f.space() != s) throw ConfigurationError(std::string(what) + ": wrong field space");
}

double sum_abs(const std::vector<cplx>& v) {
  double s = 0.0;
  for (const auto& c : v) s += std::abs(c);
  return s;
}

// Copies band-limited torus coefficients onto a finer grid.
std::vector<cplx> pad(const std::vector<cplx>& v, Extents from, Extents to) {
  std::vector<cplx> out(to.size());
  for (int i1 = 0; i1 < from.n1; ++i1) {
    const int k1 = signed_mode(i1, from.n1);
    for (int i2 = 0; i2 < from.n2; ++i2) {
      const int k2 = signed_mode(i2, from.n2);
      out[static_cast<std::size_t>(mode_slot(k1, to.n1)) * to.n2 + mode_slot(k2, to.n2)] =
          v[static_cast<std::size_t>(i1) * from.n2 + i2];
    }
  }
  return out;
}

Extents padded_extents(Extents e, int power) { return {power * e.n1 / 2 + 1, power * e.n2 / 2 + 1}; }

// Physical values on a grid fine enough that products of `power` copies of the
// field integrate exactly.
std::vector<cplx> padded_physical(const std::vector<cplx>& spec, Extents e, int power, Extents& out_ext) {
  out_ext = padded_extents(e, power);
  auto v = pad(spec, e, out_ext);
  torus_inverse(v, out_ext);
  return v;
}

double grid_integral(const std::vector<double>& f, Extents e) {
  double s = 0.0;
  for (double x : f) s += x;
  return s * 4.0 / static_cast<double>(e.size());
}

}  // namespace

std::string to_string(NormalForm f) {
  switch (f) {
    case NormalForm::kdv: return "KdV";
    case NormalForm::kp2: return "KP";
    case NormalForm::mkdv: return "mKdV";
    case NormalForm::nls1d: return "NLS1D";
    case NormalForm::nls2d: return "NLS2D";
  }
  return "?";
}

FieldPair FieldPair::zero(Extents grid, FieldKind kind) {
  FieldPair fp;
  fp.a = GridField2D(grid, Domain::torus);
  fp.b = GridField2D(grid, Domain::torus);
  fp.kind = kind;
  return fp;
}

NormalFormCoefficients NormalFormCoefficients::kdv(double mu, double alpha) {
  NormalFormCoefficients c;
  c.dispersion3 = mu * mu / 24.0;
  c.quadratic = alpha * mu * mu / (2.0 * std::numbers::sqrt2);
  return c;
}

NormalFormCoefficients NormalFormCoefficients::kp2(double mu, double alpha, double sigma) {
  NormalFormCoefficients c = kdv(mu, alpha);
  c.transverse = std::pow(mu, 2.0 * sigma - 2.0) / 2.0;
  return c;
}

NormalFormCoefficients NormalFormCoefficients::mkdv(double mu, double beta) {
  NormalFormCoefficients c;
  c.dispersion3 = mu * mu / 24.0;
  c.cubic = mu * mu * beta / 4.0;
  c.speed_coupling = 0.75 * mu * mu * beta;
  return c;
}

NormalFormCoefficients NormalFormCoefficients::nls(double mu, double beta) {
  NormalFormCoefficients c;
  c.rotation = 1.0;
  c.dispersion = mu * mu;
  c.nls_cubic = 0.75 * mu * mu * beta;
  return c;
}

NormalFormCoefficients NormalFormCoefficients::nls_lattice(double mu, double beta) {
  NormalFormCoefficients c = nls(mu, beta);
  c.dispersion = mu * mu / 2.0;
  return c;
}

NormalFormSolver::NormalFormSolver(NormalForm form, const NormalFormCoefficients& coeffs, Extents grid)
    : form_(form), c_(coeffs), grid_(grid), kind_(is_psi(form) ? FieldKind::psi : FieldKind::xi_eta) {
  if (grid.n1 < 3 || grid.n2 < 1) throw ConfigurationError("torus grid too small");
  const int n1 = grid.n1, n2 = grid.n2;
  k1_.resize(n1);
  k2_.resize(n2);
  for (int i = 0; i < n1; ++i) k1_[i] = signed_mode(i, n1);
  for (int i = 0; i < n2; ++i) k2_[i] = signed_mode(i, n2);
  // Quadratic products are exact for |K| < n/3, cubic ones for |K| < n/4.
  const int div = is_cubic(form) ? 4 : 3;
  const int M1 = (n1 - 1) / div, M2 = (n2 - 1) / div;
  mask_.assign(grid.size(), 0);
  La_.assign(grid.size(), 0.0);
  Lb_.assign(grid.size(), 0.0);
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const int k1 = static_cast<int>(k1_[i1]), k2 = static_cast<int>(k2_[i2]);
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      bool keep = std::abs(k1) <= M1;
      if (!is_per_line(form)) keep = keep && std::abs(k2) <= M2;
      // The unpaired Nyquist slot of an even y2 axis is never retained.
      if (n2 % 2 == 0 && 2 * std::abs(k2) == n2) keep = false;
      mask_[i] = keep ? 1 : 0;
      La_[i] = symbol(k1, k2);
      Lb_[i] = kind_ == FieldKind::xi_eta ? -La_[i] : cplx{};
    }
  }
}

cplx NormalFormSolver::symbol(int k1, int k2) const {
  const double K1 = k1, K2 = k2;
  if (kind_ == FieldKind::psi) {
    double lap = K1 * K1;
    if (form_ == NormalForm::nls2d) lap += K2 * K2;
    return kI * (c_.rotation + c_.dispersion * kPi * kPi * lap);
  }
  cplx L = -kI * kPi * K1 * c_.transport + kI * c_.dispersion3 * kPi * kPi * kPi * K1 * K1 * K1;
  if (form_ == NormalForm::kp2 && k1 != 0) L -= kI * c_.transverse * kPi * K2 * K2 / K1;
  return L;
}

bool NormalFormSolver::retained(int k1, int k2) const {
  return mask_[static_cast<std::size_t>(mode_slot(k1, grid_.n1)) * grid_.n2 + mode_slot(k2, grid_.n2)] != 0;
}

SpectralPair NormalFormSolver::to_spectral(const FieldPair& fp) const {
  if (fp.kind != kind_) throw ConfigurationError(to_string(form_) + ": wrong field kind");
  require_torus(fp.a, Space::physical, "normal-form solver");
  require_torus(fp.b, Space::physical, "normal-form solver");
  if (fp.a.extents() != grid_ || fp.b.extents() != grid_)
    throw ConfigurationError(to_string(form_) + ": field extents do not match the solver grid");
  SpectralPair s;
  s.tau = fp.tau;
  s.a = fp.a.storage();
  torus_forward(s.a, grid_);
  if (kind_ == FieldKind::xi_eta) {
    s.b = fp.b.storage();
    torus_forward(s.b, grid_);
    const double scale = sum_abs(s.a) + sum_abs(s.b);
    const double tol = 1e-10 * scale;
    for (int i2 = 0; i2 < grid_.n2; ++i2) {
      const cplx gap = s.a[i2] - s.b[i2];
      if (std::abs(gap) > tol)
        throw ConstraintError(to_string(form_) + ": y1-average of xi - eta is nonzero on a y2 line");
      if (form_ == NormalForm::kp2 && i2 != 0 && (std::abs(s.a[i2]) > tol || std::abs(s.b[i2]) > tol))
        throw ConstraintError("KP: modes with k1 = 0 and k2 != 0 must vanish");
    }
    if (form_ == NormalForm::kp2) {
      for (int i2 = 1; i2 < grid_.n2; ++i2) s.a[i2] = s.b[i2] = 0.0;
    }
  }
  for (std::size_t i = 0; i < s.a.size(); ++i) {
    if (!mask_[i]) {
      s.a[i] = 0.0;
      if (!s.b.empty()) s.b[i] = 0.0;
    }
  }
  return s;
}

FieldPair NormalFormSolver::to_fields(const SpectralPair& s) const {
  FieldPair fp;
  fp.kind = kind_;
  fp.tau = s.tau;
  std::vector<cplx> a = s.a;
  torus_inverse(a, grid_);
  std::vector<cplx> b;
  if (kind_ == FieldKind::xi_eta) {
    for (auto& x : a) x = x.real();
    b = s.b;
    torus_inverse(b, grid_);
    for (auto& x : b) x = x.real();
  } else {
    b.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = std::conj(a[i]);
  }
  fp.a = GridField2D(grid_, Domain::torus, Space::physical, std::move(a));
  fp.b = GridField2D(grid_, Domain::torus, Space::physical, std::move(b));
  return fp;
}

void NormalFormSolver::nonlinear(const std::vector<cplx>& a, const std::vector<cplx>& b, std::vector<cplx>& na,
                                 std::vector<cplx>& nb) const {
  const int n1 = grid_.n1, n2 = grid_.n2;
  na = a;
  torus_inverse(na, grid_);
  if (kind_ == FieldKind::psi) {
    for (auto& x : na) x = kI * c_.nls_cubic * std::norm(x) * x;
    torus_forward(na, grid_);
    for (std::size_t i = 0; i < na.size(); ++i)
      if (!mask_[i]) na[i] = 0.0;
    return;
  }
  nb = b;
  torus_inverse(nb, grid_);
  std::vector<double> ma(n2, 0.0), mb(n2, 0.0);
  for (auto& x : na) x = x.real();
  for (auto& x : nb) x = x.real();
  if (c_.speed_coupling != 0.0) {
    // Line mean squares, exact on the grid for the retained band.
    for (int i1 = 0; i1 < n1; ++i1) {
      for (int i2 = 0; i2 < n2; ++i2) {
        const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
        ma[i2] += na[i].real() * na[i].real();
        mb[i2] += nb[i].real() * nb[i].real();
      }
    }
    for (int i2 = 0; i2 < n2; ++i2) {
      ma[i2] /= n1;
      mb[i2] /= n1;
    }
  }
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      const double x = na[i].real(), y = nb[i].real();
      na[i] = x * (c_.speed_coupling * mb[i2] + c_.quadratic * x + c_.cubic * x * x);
      nb[i] = y * (c_.speed_coupling * ma[i2] + c_.quadratic * y + c_.cubic * y * y);
    }
  }
  torus_forward(na, grid_);
  torus_forward(nb, grid_);
  for (int i1 = 0; i1 < n1; ++i1) {
    const cplx d = kI * kPi * k1_[i1];
    for (int i2 = 0; i2 < n2; ++i2) {
      const std::size_t i = static_cast<std::size_t>(i1) * n2 + i2;
      if (!mask_[i]) {
        na[i] = nb[i] = 0.0;
      } else {
        na[i] *= -d;
        nb[i] *= d;
      }
    }
  }
}

void NormalFormSolver::apply_linear(std::vector<cplx>& v, const std::vector<cplx>& factor) const {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= factor[i];
}

const std::vector<cplx>& NormalFormSolver::factors(double dt, int which) const {
  if (dt != cached_dt_ || Ea_full_.empty()) {
    const std::size_t n = grid_.size();
    Ea_full_.resize(n);
    Ea_half_.resize(n);
    Eb_full_.resize(n);
    Eb_half_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Ea_full_[i] = std::exp(La_[i] * dt);
      Ea_half_[i] = std::exp(La_[i] * (0.5 * dt));
      Eb_full_[i] = std::exp(Lb_[i] * dt);
      Eb_half_[i] = std::exp(Lb_[i] * (0.5 * dt));
    }
    cached_dt_ = dt;
  }
  switch (which) {
    case 0: return Ea_full_;
    case 1: return Ea_half_;
    case 2: return Eb_full_;
    default: return Eb_half_;
  }
}

double NormalFormSolver::stable_dt(const SpectralPair& s) const {
  // sup |f| <= (1/2) sum |f^_h| in the torus convention.
  const double amax = 0.5 * std::max(sum_abs(s.a), s.b.empty() ? 0.0 : sum_abs(s.b));
  double rate;
  if (kind_ == FieldKind::psi) {
    rate = 2.0 * std::abs(c_.nls_cubic) * amax * amax;
  } else {
    int kmax = 0;
    for (int i1 = 0; i1 < grid_.n1; ++i1)
      if (mask_[static_cast<std::size_t>(i1) * grid_.n2]) kmax = std::max(kmax, std::abs(static_cast<int>(k1_[i1])));
    rate = kPi * kmax *
           (2.0 * std::abs(c_.quadratic) * amax + 3.0 * std::abs(c_.cubic) * amax * amax +
            std::abs(c_.speed_coupling) * amax * amax);
  }
  // Classical RK4 is stable on the imaginary axis up to 2 sqrt 2.
  return rate > 0.0 ? 2.8 / rate : std::numeric_limits<double>::infinity();
}

void NormalFormSolver::step(SpectralPair& s, double dt) const {
  if (!std::isfinite(dt)) throw ConfigurationError("normal-form step needs a finite dt");
  if (dt == 0.0) return;
  if (std::abs(dt) > stable_dt(s))
    throw StabilityError(to_string(form_) + ": dt=" + std::to_string(dt) + " exceeds the stable step " +
                         std::to_string(stable_dt(s)));
  const bool two = kind_ == FieldKind::xi_eta;
  const auto& Ef = factors(dt, 0);
  const auto& Eh = factors(dt, 1);
  const auto& Fb = factors(dt, 2);
  const auto& Fh = factors(dt, 3);
  const std::size_t n = s.a.size();
  std::vector<cplx> k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b, ua(n), ub(two ? n : 0);
  // Lawson fourth-order scheme in the integrating-factor variable.
  nonlinear(s.a, s.b, k1a, k1b);
  for (std::size_t i = 0; i < n; ++i) {
    ua[i] = Eh[i] * (s.a[i] + 0.5 * dt * k1a[i]);
    if (two) ub[i] = Fh[i] * (s.b[i] + 0.5 * dt * k1b[i]);
  }
  nonlinear(ua, ub, k2a, k2b);
  for (std::size_t i = 0; i < n; ++i) {
    ua[i] = Eh[i] * s.a[i] + 0.5 * dt * k2a[i];
    if (two) ub[i] = Fh[i] * s.b[i] + 0.5 * dt * k2b[i];
  }
  nonlinear(ua, ub, k3a, k3b);
  for (std::size_t i = 0; i < n; ++i) {
    ua[i] = Ef[i] * s.a[i] + dt * Eh[i] * k3a[i];
    if (two) ub[i] = Fb[i] * s.b[i] + dt * Fh[i] * k3b[i];
  }
  nonlinear(ua, ub, k4a, k4b);
  for (std::size_t i = 0; i < n; ++i) {
    s.a[i] = Ef[i] * s.a[i] + dt / 6.0 * (Ef[i] * k1a[i] + 2.0 * Eh[i] * (k2a[i] + k3a[i]) + k4a[i]);
    if (two) s.b[i] = Fb[i] * s.b[i] + dt / 6.0 * (Fb[i] * k1b[i] + 2.0 * Fh[i] * (k2b[i] + k3b[i]) + k4b[i]);
  }
  s.tau += dt;
  for (const auto& c : s.a)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw NumericalBlowup(to_string(form_) + " solution is not finite", s.tau);
}

void NormalFormSolver::advance_to(SpectralPair& s, double tau_end, double max_dt) const {
  if (!(max_dt > 0.0)) throw ConfigurationError("advance_to needs max_dt > 0");
  const double span = tau_end - s.tau;
  if (span == 0.0) return;
  const long long n = std::max(1LL, static_cast<long long>(std::ceil(std::abs(span) / max_dt - 1e-9)));
  const double dt = span / static_cast<double>(n);
  const double t0 = s.tau;
  for (long long i = 0; i < n; ++i) step(s, dt);
  s.tau = t0 + span;
}

namespace {

FieldPair step_with(NormalForm form, const NormalFormCoefficients& c, const FieldPair& fp, double dt) {
  NormalFormSolver solver(form, c, fp.extents());
  auto s = solver.to_spectral(fp);
  solver.step(s, dt);
  return solver.to_fields(s);
}

}  // namespace

FieldPair kdv_system_step(const FieldPair& fp, double mu, double alpha, double dt) {
  return step_with(NormalForm::kdv, NormalFormCoefficients::kdv(mu, alpha), fp, dt);
}

FieldPair kp2_system_step(const FieldPair& fp, double mu, double alpha, double dt) {
  return step_with(NormalForm::kp2, NormalFormCoefficients::kp2(mu, alpha), fp, dt);
}

FieldPair mkdv_system_step(const FieldPair& fp, double mu, double beta, double dt) {
  return step_with(NormalForm::mkdv, NormalFormCoefficients::mkdv(mu, beta), fp, dt);
}

FieldPair nls1d_step(const FieldPair& fp, double mu, double beta, double dt) {
  return step_with(NormalForm::nls1d, NormalFormCoefficients::nls(mu, beta), fp, dt);
}

FieldPair nls2d_step(const FieldPair& fp, double mu, double beta, double dt) {
  return step_with(NormalForm::nls2d, NormalFormCoefficients::nls(mu, beta), fp, dt);
}

double l2_norm_sq(const GridField2D& f) {
  require_torus(f, Space::physical, "l2_norm_sq");
  double s = 0.0;
  for (const auto& c : f.values()) s += std::norm(c);
  return s * 4.0 / static_cast<double>(f.extents().size());
}

double mean_square(const GridField2D& f) { return l2_norm_sq(f) / 4.0; }

// ---- dispersion expansion ----

double dispersion_coefficient(int m) {
  if (m < 0) throw ConfigurationError("dispersion coefficient index must be nonnegative");
  double f = 1.0;
  for (int i = 2; i <= 2 * m + 2; ++i) f *= i;
  return 2.0 / f;
}

DispersionExpansion dispersion_expansion(double mu, double sigma, int order) {
  if (order < 1) throw ConfigurationError("dispersion expansion needs order >= 1");
  DispersionExpansion d;
  d.mu = mu;
  d.sigma = sigma;
  d.order = order;
  for (int m = 0; m < order; ++m) {
    const double c = dispersion_coefficient(m);
    d.c.push_back(c);
    d.terms.push_back({c, 2.0 * m, 2 * m + 2, 0});
    d.terms.push_back({c, (2.0 * m + 2.0) * sigma - 2.0, 0, 2 * m + 2});
  }
  return d;
}

double DispersionExpansion::evaluate(int k1, int k2) const {
  double s = 0.0;
  for (const auto& t : terms) {
    const int n = t.d1_order + t.d2_order;
    const double k = t.d1_order > 0 ? k1 : k2;
    // (i pi k)^n with n even.
    const double sign = (n / 2) % 2 == 0 ? 1.0 : -1.0;
    s += t.coefficient * std::pow(mu, t.mu_power) * sign * std::pow(kPi * k, n);
  }
  return s;
}

double DispersionExpansion::exact(int k1, int k2) const {
  const double a = std::sin(mu * kPi * k1 / 2.0), b = std::sin(std::pow(mu, sigma) * kPi * k2 / 2.0);
  return (-4.0 * a * a - 4.0 * b * b) / (mu * mu);
}

// ---- functionals and averages ----

double integrate_power(const GridField2D& spectral, int power) {
  require_torus(spectral, Space::spectral, "integrate_power");
  if (power < 1) throw ConfigurationError("integrate_power needs power >= 1");
  Extents pe;
  auto v = padded_physical(spectral.storage(), spectral.extents(), power, pe);
  std::vector<double> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = std::pow(v[i].real(), power);
  return grid_integral(f, pe);
}

namespace {

struct XiEtaSpec {
  std::vector<cplx> xi, eta;
  Extents e;
};

XiEtaSpec spectral_pair(const FieldPair& fp) {
  require_torus(fp.a, Space::physical, "functional");
  require_torus(fp.b, Space::physical, "functional");
  XiEtaSpec s{fp.a.storage(), fp.b.storage(), fp.extents()};
  torus_forward(s.xi, s.e);
  torus_forward(s.eta, s.e);
  return s;
}

std::vector<cplx> d1(const std::vector<cplx>& v, Extents e) {
  std::vector<cplx> out(v.size());
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const cplx d = kI * kPi * static_cast<double>(signed_mode(i1, e.n1));
    for (int i2 = 0; i2 < e.n2; ++i2) out[static_cast<std::size_t>(i1) * e.n2 + i2] = d * v[static_cast<std::size_t>(i1) * e.n2 + i2];
  }
  return out;
}

// d2 d1^{-1}, zero on k1 = 0.
std::vector<cplx> d2_d1inv(const std::vector<cplx>& v, Extents e) {
  std::vector<cplx> out(v.size());
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const int k1 = signed_mode(i1, e.n1);
    if (k1 == 0) continue;
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const int k2 = signed_mode(i2, e.n2);
      out[static_cast<std::size_t>(i1) * e.n2 + i2] =
          static_cast<double>(k2) / static_cast<double>(k1) * v[static_cast<std::size_t>(i1) * e.n2 + i2];
    }
  }
  return out;
}

double int_pow(const std::vector<cplx>& spec, Extents e, int power) {
  Extents pe;
  auto v = padded_physical(spec, e, power, pe);
  std::vector<double> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = std::pow(v[i].real(), power);
  return grid_integral(f, pe);
}

double int_abs_pow(const std::vector<cplx>& spec, Extents e, int power) {
  Extents pe;
  auto v = padded_physical(spec, e, power, pe);
  std::vector<double> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = std::pow(std::abs(v[i]), power);
  return grid_integral(f, pe);
}

std::vector<cplx> lin(const std::vector<cplx>& a, double ca, const std::vector<cplx>& b, double cb) {
  std::vector<cplx> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
  return out;
}

double functional_xieta(const std::vector<cplx>& xi, const std::vector<cplx>& eta, Extents e, AveragedRegime r,
                        const FunctionalCoefficients& c) {
  const auto diff = lin(xi, 1.0, eta, -1.0);
  const auto sum = lin(xi, 1.0, eta, 1.0);
  // int -(d1^2 p)^2/24 with d1 p = (xi - eta)/sqrt 2.
  double f = -int_pow(d1(diff, e), e, 2) / 48.0;
  if (r == AveragedRegime::kp) f += c.transverse * int_pow(d2_d1inv(diff, e), e, 2) / 4.0;
  if (r == AveragedRegime::kp || r == AveragedRegime::kdv)
    f += c.alpha * int_pow(sum, e, 3) / (3.0 * 2.0 * std::numbers::sqrt2);
  if (r == AveragedRegime::mkdv) f += c.beta * int_pow(sum, e, 4) / 16.0;
  return f;
}

double functional_psi(const std::vector<cplx>& psi, Extents e, const FunctionalCoefficients& c) {
  // q = sqrt 2 Re psi; int (d1 q)^2/2 + beta q^4/4.
  std::vector<cplx> q(psi.size()), dq;
  // Coefficients of psi + conj(psi): psi^_K + conj(psi^_{-K}).
  for (int i1 = 0; i1 < e.n1; ++i1) {
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const int k1 = signed_mode(i1, e.n1), k2 = signed_mode(i2, e.n2);
      const std::size_t i = static_cast<std::size_t>(i1) * e.n2 + i2;
      const std::size_t j = static_cast<std::size_t>(mode_slot(-k1, e.n1)) * e.n2 + mode_slot(-k2, e.n2);
      q[i] = (psi[i] + std::conj(psi[j])) / std::numbers::sqrt2;
    }
  }
  dq = d1(q, e);
  return int_pow(dq, e, 2) / 2.0 + c.beta * int_pow(q, e, 4) / 4.0;
}

}  // namespace

double first_order_functional(const FieldPair& fp, AveragedRegime regime, const FunctionalCoefficients& c) {
  auto s = spectral_pair(fp);
  if (regime == AveragedRegime::nls) return functional_psi(s.xi, s.e, c);
  return functional_xieta(s.xi, s.eta, s.e, regime, c);
}

double time_average_f1(const FieldPair& fp, AveragedRegime regime, int quad_points, const FunctionalCoefficients& c) {
  if (quad_points < 1) throw ConfigurationError("time_average_f1 needs quad_points >= 1");
  auto s = spectral_pair(fp);
  const Extents e = s.e;
  double acc = 0.0;
  if (regime == AveragedRegime::nls) {
    if (fp.kind != FieldKind::psi) throw ConfigurationError("NLS average needs a psi field");
    for (int m = 0; m < quad_points; ++m) {
      const cplx rot = std::polar(1.0, 2.0 * kPi * m / quad_points);
      std::vector<cplx> psi = s.xi;
      for (auto& x : psi) x *= rot;
      acc += functional_psi(psi, e, c);
    }
    return acc / quad_points;
  }
  if (fp.kind != FieldKind::xi_eta) throw ConfigurationError("translation average needs a (xi, eta) pair");
  for (int m = 0; m < quad_points; ++m) {
    const double shift = 2.0 * m / quad_points;
    std::vector<cplx> xi = s.xi, eta = s.eta;
    for (int i1 = 0; i1 < e.n1; ++i1) {
      const double k1 = signed_mode(i1, e.n1);
      const cplx ph = std::polar(1.0, -kPi * k1 * shift);
      for (int i2 = 0; i2 < e.n2; ++i2) {
        const std::size_t i = static_cast<std::size_t>(i1) * e.n2 + i2;
        xi[i] *= ph;
        eta[i] *= std::conj(ph);
      }
    }
    acc += functional_xieta(xi, eta, e, regime, c);
  }
  return acc / quad_points;
}

double averaged_functional(const FieldPair& fp, AveragedRegime regime, const FunctionalCoefficients& c) {
  auto s = spectral_pair(fp);
  const Extents e = s.e;
  if (regime == AveragedRegime::nls) {
    // int |d1 psi|^2/2 + (3 beta/8) int |psi|^4
    return int_abs_pow(d1(s.xi, e), e, 2) / 2.0 + 3.0 * c.beta / 8.0 * int_abs_pow(s.xi, e, 4);
  }
  double f = -(int_pow(d1(s.xi, e), e, 2) + int_pow(d1(s.eta, e), e, 2)) / 48.0;
  if (regime == AveragedRegime::kp)
    f += c.transverse * (int_pow(d2_d1inv(s.xi, e), e, 2) + int_pow(d2_d1inv(s.eta, e), e, 2)) / 4.0;
  if (regime == AveragedRegime::kp || regime == AveragedRegime::kdv)
    f += c.alpha * (int_pow(s.xi, e, 3) + int_pow(s.eta, e, 3)) / (3.0 * 2.0 * std::numbers::sqrt2);
  if (regime == AveragedRegime::mkdv) {
    f += c.beta * (int_pow(s.xi, e, 4) + int_pow(s.eta, e, 4)) / 16.0;
    // (3 beta/16) int dy2 (int xi^2 dy1)(int eta^2 dy1).
    Extents pe;
    // A(y2) B(y2) has four times the y2 band of a single field.
    auto xv = padded_physical(s.xi, e, 4, pe);
    auto ev = padded_physical(s.eta, e, 4, pe);
    double acc = 0.0;
    for (int i2 = 0; i2 < pe.n2; ++i2) {
      double A = 0.0, B = 0.0;
      for (int i1 = 0; i1 < pe.n1; ++i1) {
        const std::size_t i = static_cast<std::size_t>(i1) * pe.n2 + i2;
        A += xv[i].real() * xv[i].real();
        B += ev[i].real() * ev[i].real();
      }
      A *= 2.0 / pe.n1;
      B *= 2.0 / pe.n1;
      acc += A * B;
    }
    acc *= 2.0 / pe.n2;
    f += 3.0 * c.beta / 16.0 * acc;
  }
  return f;
}

// ---- CSV ----

void write_field_csv(std::ostream& os, const GridField2D& f) {
  require_torus(f, Space::physical, "write_field_csv");
  const auto e = f.extents();
  os << std::setprecision(17) << "y1,y2,re,im\n";
  for (int i1 = 0; i1 < e.n1; ++i1)
    for (int i2 = 0; i2 < e.n2; ++i2)
      os << -1.0 + 2.0 * i1 / e.n1 << ',' << -1.0 + 2.0 * i2 / e.n2 << ',' << f.at(i1, i2).real() << ','
         << f.at(i1, i2).imag() << '\n';
}

void write_spectral_csv(std::ostream& os, const GridField2D& f) {
  require_torus(f, Space::spectral, "write_spectral_csv");
  const auto e = f.extents();
  os << std::setprecision(17) << "k1,k2,re,im\n";
  for (int i1 = 0; i1 < e.n1; ++i1)
    for (int i2 = 0; i2 < e.n2; ++i2)
      os << signed_mode(i1, e.n1) << ',' << signed_mode(i2, e.n2) << ',' << f.at(i1, i2).real() << ','
         << f.at(i1, i2).imag() << '\n';
}

namespace {

template <class Slot>
GridField2D read_csv(std::istream& is, Extents grid, Space space, const char* header, Slot&& slot) {
  std::string line;
  if (!std::getline(is, line) || line != header) throw IoError(std::string("expected CSV header ") + header);
  GridField2D f(grid, Domain::torus, space);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double x1, x2, re, im;
    char c;
    if (!(ls >> x1 >> c >> x2 >> c >> re >> c >> im)) throw IoError("bad CSV row '" + line + "'");
    auto [i1, i2] = slot(x1, x2);
    f.at(i1, i2) = cplx(re, im);
    ++rows;
  }
  if (rows != grid.size()) throw IoError("CSV row count does not match the grid");
  return f;
}

}  // namespace

GridField2D read_field_csv(std::istream& is, Extents grid) {
  return read_csv(is, grid, Space::physical, "y1,y2,re,im", [&](double y1, double y2) {
    return std::pair{static_cast<int>(std::lround((y1 + 1.0) * grid.n1 / 2.0)),
                     static_cast<int>(std::lround((y2 + 1.0) * grid.n2 / 2.0))};
  });
}

GridField2D read_spectral_csv(std::istream& is, Extents grid) {
  return read_csv(is, grid, Space::spectral, "k1,k2,re,im", [&](double k1, double k2) {
    return std::pair{mode_slot(static_cast<int>(std::lround(k1)), grid.n1),
                     mode_slot(static_cast<int>(std::lround(k2)), grid.n2)};
  });
}

}  // namespace metastab
