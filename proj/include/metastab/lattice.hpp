#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metastab/spectral.hpp"

namespace metastab {

enum class LatticeModel { etl, kg };

std::string to_string(LatticeModel m);

struct LatticeParams {
  LatticeModel model = LatticeModel::etl;
  int N1 = 1;
  int N2 = 1;
  double alpha = 0.0;
  double beta = 0.0;
  double m = 1.0;

  // Validates sizes and model constraints (KG needs beta > 0 unless allow_linear).
  static LatticeParams make(LatticeModel model, int N1, int N2, double alpha, double beta, bool allow_linear = false);
  // N2 = round((N1+1/2)^sigma - 1/2).
  static int n2_for_sigma(int N1, double sigma);

  double mu() const { return 2.0 / (2 * N1 + 1); }
  // Realized anisotropy log(N2+1/2)/log(N1+1/2).
  double sigma() const;
  // mu^sigma, identical to 1/(N2+1/2).
  double mu_sigma() const { return 2.0 / (2 * N2 + 1); }
  int n1() const { return 2 * N1 + 1; }
  int n2() const { return 2 * N2 + 1; }
  Extents extents() const { return {n1(), n2()}; }
  std::size_t sites() const { return extents().size(); }
  // omega_k^2: -symbol of Delta_1 (ETL) or 1 - symbol (KG).
  double omega2(int k1, int k2) const;
  double omega_max() const;
};

// Row-major (2N1+1) x (2N2+1) arrays; site j sits at slot j mod (2N+1).
struct LatticeState {
  std::vector<double> Q;
  std::vector<double> P;
  double t = 0.0;

  static LatticeState zero(const LatticeParams& params);
  double& q(const LatticeParams& p, int j1, int j2) { return Q[slot(p, j1, j2)]; }
  double& pm(const LatticeParams& p, int j1, int j2) { return P[slot(p, j1, j2)]; }
  static std::size_t slot(const LatticeParams& p, int j1, int j2) {
    return static_cast<std::size_t>(mode_slot(j1, p.n1())) * p.n2() + mode_slot(j2, p.n2());
  }
};

struct LatticeRhs {
  std::vector<double> dQ;
  std::vector<double> dP;
};

LatticeRhs etl_rhs(const LatticeState& state, const LatticeParams& params);
LatticeRhs kg_rhs(const LatticeState& state, const LatticeParams& params);

// One Stormer-Verlet step: half kick, drift, half kick.
LatticeState step_leapfrog(const LatticeState& state, const LatticeParams& params, double dt);

// Symmetric compositions of the Stormer-Verlet step. All are symplectic and
// time-reversible; they differ in order and cost per step.
enum class Scheme { leapfrog, suzuki4, kahan_li6 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
std::span<const double> composition_weights(Scheme s);

// dt = mu/10 for ETL, min(0.05, 1/(4 omega_max)) for KG.
double default_dt(const LatticeParams& params);
Scheme default_scheme(const LatticeParams& params);

// Reusable stepper with scratch space. advance() merges the adjacent half
// kicks of consecutive substeps, which leaves the map unchanged up to rounding.
class LatticeIntegrator {
 public:
  LatticeIntegrator(const LatticeParams& params, Scheme scheme);
  void advance(LatticeState& state, double dt, long long steps);
  const LatticeParams& params() const { return params_; }
  Scheme scheme() const { return scheme_; }

 private:
  void kick(LatticeState& s, double h);
  void drift(LatticeState& s, double h);
  void kick_drift_etl(LatticeState& s, double hk, double hd);

  LatticeParams params_;
  Scheme scheme_;
  std::vector<double> scratch_;
};

// Throws NumericalBlowup if any entry is not finite.
void check_finite(const LatticeState& state);

class ModeSpectrum {
 public:
  ModeSpectrum() = default;
  ModeSpectrum(const LatticeParams& params, std::vector<double> signed_energies, double t);

  double t() const { return t_; }
  int N1() const { return N1_; }
  int N2() const { return N2_; }
  // E_k for signed k.
  double energy(int k1, int k2) const;
  // Specific energy E_k / ((N1+1/2)(N2+1/2)) for signed k.
  double specific(int k1, int k2) const;
  // Specific energy on Z^2_+ with the symmetric modes (+-k1, +-k2) summed in.
  double folded(int k1, int k2) const;
  const std::vector<double>& signed_energies() const { return E_; }
  // (N1+1) x (N2+1) row-major table of folded specific energies.
  std::vector<double> folded_table() const;
  double total_energy() const;

 private:
  int N1_ = 0;
  int N2_ = 0;
  double t_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> E_;
};

ModeSpectrum mode_energies(const LatticeState& state, const LatticeParams& params);
double total_energy(const LatticeState& state, const LatticeParams& params);
// Quadratic part of the Hamiltonian, equal to the sum of E_k.
double quadratic_energy(const LatticeState& state, const LatticeParams& params);

// Excites the symmetric orbit {(+-k1, +-k2)} of k0 with folded specific
// energy C0 mu^4 (ETL) or C0 mu^2 (KG). phase = 0 puts all of it in Q,
// phase = pi/2 all of it in P.
LatticeState single_mode_data(const LatticeParams& params, std::array<int, 2> k0, double C0, double phase = 0.0);
// Same, with the folded specific energy given directly.
LatticeState single_mode_data_with_energy(const LatticeParams& params, std::array<int, 2> k0, double specific_energy,
                                          double phase = 0.0);

void write_snapshot_csv(std::ostream& os, const LatticeState& state, const LatticeParams& params);
LatticeState read_snapshot_csv(std::istream& is, LatticeParams& params);

}  // namespace metastab
