#pragma once

// Normal-form PDEs on the torus I = [-1,1]^2, advanced pseudospectrally with
// the full linear part propagated exactly (integrating factor) and a classical
// fourth-order stage scheme for the nonlinearity.

#include <iosfwd>
#include <string>
#include <vector>

#include "metastab/spectral.hpp"

namespace metastab {

enum class FieldKind { xi_eta, psi };

// Physical torus fields. For xi_eta both a and b are real; for psi b = conj(a).
struct FieldPair {
  GridField2D a;
  GridField2D b;
  double tau = 0.0;
  FieldKind kind = FieldKind::xi_eta;

  static FieldPair zero(Extents grid, FieldKind kind);
  Extents extents() const { return a.extents(); }
};

inline constexpr Extents kDefaultTorusGrid{64, 17};

enum class NormalForm { kdv, kp2, mkdv, nls1d, nls2d };

std::string to_string(NormalForm f);

// Coefficients of
//   xi_t  = -(c0 + s [eta^2]) d1 xi - d3 d1^3 xi - tr d1^{-1} d2^2 xi - q d1(xi^2) - c d1(xi^3)
//   eta_t = +(c0 + s [xi^2]) d1 eta + d3 d1^3 eta + tr d1^{-1} d2^2 eta + q d1(eta^2) + c d1(eta^3)
// with [f^2] the mean square over the y1 line, or of
//   -i psi_t = rot psi - disp Lap psi + g |psi|^2 psi
// with Lap = d1^2 (nls1d) or d1^2 + d2^2 (nls2d).
struct NormalFormCoefficients {
  double transport = 1.0;
  double dispersion3 = 0.0;
  double transverse = 0.0;
  double quadratic = 0.0;
  double cubic = 0.0;
  double speed_coupling = 0.0;
  double rotation = 1.0;
  double dispersion = 0.0;
  double nls_cubic = 0.0;

  static NormalFormCoefficients kdv(double mu, double alpha);
  // Transverse coefficient mu^{2 sigma - 2}/2; sigma = 2 gives mu^2/2.
  static NormalFormCoefficients kp2(double mu, double alpha, double sigma = 2.0);
  static NormalFormCoefficients mkdv(double mu, double beta);
  // Dispersion coefficient mu^2 as stated for the averaged NLS.
  static NormalFormCoefficients nls(double mu, double beta);
  // Dispersion coefficient mu^2/2, matching omega_k = 1 + mu^2 pi^2 |K|^2/2 + O(mu^4)
  // of the Klein-Gordon lattice.
  static NormalFormCoefficients nls_lattice(double mu, double beta);
};

// Spectral state: coefficients of a and b in the torus convention.
struct SpectralPair {
  std::vector<cplx> a;
  std::vector<cplx> b;
  double tau = 0.0;
};

class NormalFormSolver {
 public:
  NormalFormSolver(NormalForm form, const NormalFormCoefficients& coeffs, Extents grid);

  NormalForm form() const { return form_; }
  Extents grid() const { return grid_; }
  const NormalFormCoefficients& coefficients() const { return c_; }
  FieldKind kind() const { return kind_; }

  // Checks kind and constraints, then transforms and dealiases.
  SpectralPair to_spectral(const FieldPair& fp) const;
  FieldPair to_fields(const SpectralPair& s) const;

  // One step of size dt (may be negative).
  void step(SpectralPair& s, double dt) const;
  // Steps to tau_end with steps no longer than max_dt.
  void advance_to(SpectralPair& s, double tau_end, double max_dt) const;
  // Linear symbol L(K) of the a equation, a_t = L a + N(a).
  cplx symbol(int k1, int k2) const;
  // Largest stable |dt| for the explicit stages, from the current amplitude.
  double stable_dt(const SpectralPair& s) const;
  // Spectral mask of retained modes.
  bool retained(int k1, int k2) const;

 private:
  void nonlinear(const std::vector<cplx>& a, const std::vector<cplx>& b, std::vector<cplx>& na,
                 std::vector<cplx>& nb) const;
  void apply_linear(std::vector<cplx>& v, const std::vector<cplx>& factor) const;
  const std::vector<cplx>& factors(double dt, int which) const;

  NormalForm form_;
  NormalFormCoefficients c_;
  Extents grid_;
  FieldKind kind_;
  std::vector<double> k1_;  // signed per slot
  std::vector<double> k2_;
  std::vector<unsigned char> mask_;
  std::vector<cplx> La_;
  std::vector<cplx> Lb_;
  // Cached propagators exp(L dt) and exp(L dt/2) for the last dt.
  mutable double cached_dt_ = 0.0;
  mutable std::vector<cplx> Ea_full_, Ea_half_, Eb_full_, Eb_half_;
};

// One step of each system with the stated coefficients.
FieldPair kdv_system_step(const FieldPair& fp, double mu, double alpha, double dt);
FieldPair kp2_system_step(const FieldPair& fp, double mu, double alpha, double dt);
FieldPair mkdv_system_step(const FieldPair& fp, double mu, double beta, double dt);
FieldPair nls1d_step(const FieldPair& fp, double mu, double beta, double dt);
FieldPair nls2d_step(const FieldPair& fp, double mu, double beta, double dt);

// int_I |f|^2 dy from a physical torus field.
double l2_norm_sq(const GridField2D& f);
// Mean square [f^2] = int_I f^2 dy / 4 for a real field.
double mean_square(const GridField2D& f);

// Asymptotic expansion of the symbol of the scaled lattice Laplacian,
//   Delta/mu^2 ~ sum_m c_m (mu^{2m} d1^{2m+2} + mu^{(2m+2) sigma - 2} d2^{2m+2}),
// with c_m = 2/(2m+2)!.
struct DispersionTerm {
  double coefficient;  // c_m
  double mu_power;     // exponent of mu
  int d1_order;
  int d2_order;
};

struct DispersionExpansion {
  double mu = 0.0;
  double sigma = 0.0;
  int order = 0;
  std::vector<double> c;  // c_0 .. c_{order-1}
  std::vector<DispersionTerm> terms;

  // Truncated symbol at torus mode (k1, k2), where d -> i pi k.
  double evaluate(int k1, int k2) const;
  // [-4 sin^2(mu pi k1/2) - 4 sin^2(mu^sigma pi k2/2)]/mu^2.
  double exact(int k1, int k2) const;
};

double dispersion_coefficient(int m);
DispersionExpansion dispersion_expansion(double mu, double sigma, int order);

// First-order functionals and their averages along the unperturbed flow.
enum class AveragedRegime { kp, kdv, mkdv, nls };

struct FunctionalCoefficients {
  double alpha = 1.0;
  double beta = 1.0;
  // Weight of the transverse term in the KP functional, mu^{2 sigma - 4} (1 at sigma = 2).
  double transverse = 1.0;
};

// F1 evaluated at fp, integrals computed exactly on zero-padded grids.
double first_order_functional(const FieldPair& fp, AveragedRegime regime, const FunctionalCoefficients& c);
// Average of F1 along translations (period 2) or phase rotations (period 2 pi),
// by the rectangle rule with quad_points nodes.
double time_average_f1(const FieldPair& fp, AveragedRegime regime, int quad_points,
                       const FunctionalCoefficients& c = {});
// Closed-form average for states whose fields have zero y1-line means.
double averaged_functional(const FieldPair& fp, AveragedRegime regime, const FunctionalCoefficients& c = {});

// Exact value of int_I f^p dy for a band-limited real field given by its
// spectral coefficients (evaluated on a grid fine enough to avoid aliasing).
double integrate_power(const GridField2D& spectral, int power);

void write_field_csv(std::ostream& os, const GridField2D& physical);
void write_spectral_csv(std::ostream& os, const GridField2D& spectral);
GridField2D read_field_csv(std::istream& is, Extents grid);
GridField2D read_spectral_csv(std::istream& is, Extents grid);

}  // namespace metastab
