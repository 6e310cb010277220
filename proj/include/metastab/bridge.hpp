#pragma once

// Correspondence between lattice states and normal-form fields: coordinate
// changes, lattice sampling of PDE solutions, mode-energy formulas, and the
// comparison runs that measure approximation error and spectral localization.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "metastab/lattice.hpp"
#include "metastab/normal_form.hpp"

namespace metastab {

enum class Regime { kp, kdv, mkdv, nls1d, nls2d };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);
LatticeModel lattice_model(Regime r);
NormalForm normal_form(Regime r);
// Exponent p of the initial specific energy C0 mu^p.
int energy_exponent(Regime r);
// Exponent of the time horizon T0/mu^e.
int horizon_exponent(Regime r);
double default_gamma(Regime r);

struct RegimeSpec {
  Regime regime = Regime::kdv;
  double gamma = 1.0;
  double rho = 1.0;
  double delta = 0.1;
};

// Empty when (sigma, gamma) lies in the regime window, otherwise the violated
// inequality, e.g. "sigma+2*gamma < min(4*sigma-5, 7) violated".
std::optional<std::string> regime_window_violation(Regime r, double sigma, double gamma);

// Lattice scaling of a regime: Q = mu^aq q, P = mu^ap p on the torus y = (mu j1, mu^sigma j2).
struct FieldScaling {
  int aq = 2;
  int ap = 1;
  static FieldScaling of(Regime r);
};

FieldPair qp_to_xieta(const GridField2D& q, const GridField2D& p);
// Inverse on the zero-mean gauge: p gets zero y1-mean on every line.
std::pair<GridField2D, GridField2D> xieta_to_qp(const FieldPair& fp);
FieldPair qp_to_psi(const GridField2D& q, const GridField2D& p);
std::pair<GridField2D, GridField2D> psi_to_qp(const FieldPair& fp);

// Removes the unit-speed translations (xi moves right, eta left) accumulated
// over tau, or restores them for negative tau.
FieldPair comoving(const FieldPair& lab, double tau);
// Removes the carrier exp(i t) from a lab-frame psi.
FieldPair envelope(const FieldPair& lab, double t);

// Q_a = mu^aq (xi~(y1 - tau) + eta~(y1 + tau))/sqrt 2 and d1 P_a = mu^ap (xi~ - eta~)/sqrt 2
// sampled at y = (mu j1, mu^sigma j2), tau = mu t. fp holds the comoving profiles.
LatticeState build_approx_etl(const FieldPair& fp, const LatticeParams& params, double t,
                              FieldScaling scaling = {2, 1});
// Q_a = mu (e^{it} psi~ + c.c.)/sqrt 2, P_a = i mu (e^{it} psi~ - c.c.)/sqrt 2 from the envelope psi~.
LatticeState build_approx_kg(const FieldPair& fp, const LatticeParams& params, double t);

// Initial normal-form fields from a lattice state by inverting the
// coefficient relations mode by mode; lattice modes outside the torus grid are
// dropped.
FieldPair pde_data_from_lattice(const LatticeState& state, const LatticeParams& params, Extents grid,
                                FieldKind kind, FieldScaling scaling);

// Specific energy of lattice mode k for the lattice state corresponding to fp
// (lab frame), with the coherent sum over all torus modes K = k mod (2N+1).
double spec_energy_from_pde(const FieldPair& fp, const LatticeParams& params, std::array<int, 2> k,
                            FieldScaling scaling);
// All signed-mode energies at once.
ModeSpectrum spectrum_from_pde(const FieldPair& fp, const LatticeParams& params, FieldScaling scaling);

// ---- fits ----

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
  double slope_stderr = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// E(r) <= C1 mu^p exp(-rho r) + C2 mu^{p+gamma}, r = |k| = |(kappa1/mu, kappa2/mu^sigma)|.
struct LocalizationFit {
  double rho = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  // RMS of ln E - ln model over the fitted shells, divided by the spread of ln E there.
  double residual = 0.0;
  int shells_used = 0;
  // Largest ratio E/model over all modes and all supplied spectra; the bound
  // holds with the fitted constants when this is <= 1.
  double bound_ratio = 0.0;
};

// ln-space fit of the shell envelope of `fit_spectrum`; C1 and C2 are then
// raised so the bound covers every spectrum in `all`.
LocalizationFit fit_localization(const std::vector<double>& fit_spectrum, const std::vector<std::vector<double>>& all,
                                 int N1, int N2, double mu, int p, double gamma);

double localization_bound(const LocalizationFit& f, double r, double mu, int p, double gamma);

// Energy share of folded modes with k1 + k2 > cutoff.
double high_mode_fraction(const std::vector<double>& folded, int N1, int N2, double cutoff);

// ---- comparison runs ----

struct ComparisonOptions {
  double C0 = 1.0;
  double T0 = 0.5;
  int samples = 21;
  std::vector<double> snapshot_fractions{0.0, 0.5, 1.0};
  Extents pde_grid{64, 33};
  // Normal-form steps per unit slow time.
  int pde_steps_per_unit = 2000;
  std::optional<double> dt;
  std::optional<Scheme> scheme;
  // 0 disables the wall-time guard.
  double budget_seconds = 0.0;
  std::array<int, 2> k0{1, 1};
  // Harmonics m k0, m = 1..harmonics, excited with specific energy
  // C0 mu^p exp(-harmonic_decay (m-1) |k0|).
  int harmonics = 1;
  double harmonic_decay = 2.0;
  // Use the stated mu^2 NLS dispersion instead of the lattice-consistent mu^2/2.
  bool stated_nls_dispersion = false;
};

struct SpectrumSnapshot {
  double t = 0.0;
  std::vector<double> folded;  // (N1+1) x (N2+1)
};

struct ModeGap {
  int k1 = 0;
  int k2 = 0;
  double gap = 0.0;
};

struct ErrorReport {
  std::string regime;
  std::string status = "complete";
  int N1 = 0;
  int N2 = 0;
  double mu = 0.0;
  double sigma = 0.0;
  int p = 4;
  double alpha = 0.0;
  double beta = 0.0;
  double C0 = 0.0;
  double T0 = 0.0;
  double dt = 0.0;
  std::string scheme;
  double gamma_target = 0.0;
  double gamma_fit = 0.0;
  double rho_fit = 0.0;
  double c1_fit = 0.0;
  double c2_fit = 0.0;
  double fit_residual = 0.0;
  double bound_ratio = 0.0;
  double energy_drift = 0.0;
  std::vector<double> times;
  std::vector<double> sup_error;
  std::vector<double> max_mode_gap;
  std::vector<double> high_mode_fraction;
  std::vector<SpectrumSnapshot> spectra;
  std::vector<ModeGap> per_mode_gap;
  // Largest folded specific energy beyond (2+delta)|log mu|/rho, divided by mu^8.
  double high_mode_scaled = 0.0;
  double runtime_s = 0.0;  // not serialized

  double max_sup_error() const;
  const SpectrumSnapshot* snapshot_at(double t) const;
};

ErrorReport run_comparison(const RegimeSpec& regime, const LatticeParams& params, const ComparisonOptions& opts);

// Slope of ln(max sup_error) against ln(mu) over a scan.
LineFit fit_gamma(const std::vector<ErrorReport>& scan);

}  // namespace metastab
