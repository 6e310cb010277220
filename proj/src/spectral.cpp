#include "metastab/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "metastab/error.hpp"

namespace metastab {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan cached_plan(int n1, int n2, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(plan_mutex());
  auto key = std::make_tuple(n1, n2, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  std::size_t n = static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2);
  auto* buf = fftw_alloc_complex(n);
  // FFTW_ESTIMATE keeps plans independent of timing, so results are reproducible.
  fftw_plan p = fftw_plan_dft_2d(n1, n2, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  if (!p) throw ConfigurationError("fftw could not plan a " + std::to_string(n1) + "x" + std::to_string(n2) + " transform");
  plans.emplace(key, p);
  return p;
}

void check_extents(const Extents& e) {
  if (e.n1 <= 0 || e.n2 <= 0) throw ConfigurationError("grid extents must be positive");
}

}  // namespace

void dft2d(std::span<cplx> data, int n1, int n2, int sign) {
  if (data.size() != static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2))
    throw ConfigurationError("dft2d: buffer size does not match extents");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(cached_plan(n1, n2, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD), p, p);
}

GridField2D::GridField2D(Extents ext, Domain dom, Space space) : ext_(ext), dom_(dom), space_(space) {
  check_extents(ext);
  if (dom == Domain::lattice && (ext.n1 % 2 == 0 || ext.n2 % 2 == 0))
    throw ConfigurationError("lattice fields need odd extents (2N+1)");
  v_.assign(ext.size(), cplx{});
}

GridField2D::GridField2D(Extents ext, Domain dom, Space space, std::vector<cplx> values)
    : ext_(ext), dom_(dom), space_(space), v_(std::move(values)) {
  check_extents(ext);
  if (dom == Domain::lattice && (ext.n1 % 2 == 0 || ext.n2 % 2 == 0))
    throw ConfigurationError("lattice fields need odd extents (2N+1)");
  if (v_.size() != ext.size())
    throw ConfigurationError("value count " + std::to_string(v_.size()) + " does not match extents " +
                             std::to_string(ext.n1) + "x" + std::to_string(ext.n2));
}

cplx& GridField2D::mode(int k1, int k2) {
  return v_[idx(mode_slot(k1, ext_.n1), mode_slot(k2, ext_.n2))];
}

const cplx& GridField2D::mode(int k1, int k2) const {
  return v_[idx(mode_slot(k1, ext_.n1), mode_slot(k2, ext_.n2))];
}

GridField2D forward_transform(const GridField2D& field) {
  if (field.space() != Space::physical) throw ConfigurationError("forward_transform expects a physical field");
  const auto e = field.extents();
  std::vector<cplx> v = field.storage();
  dft2d(v, e.n1, e.n2, -1);
  if (field.domain() == Domain::lattice) {
    const double s = 1.0 / std::sqrt(static_cast<double>(e.size()));
    for (auto& c : v) c *= s;
  } else {
    // Grid starts at y = -1, which contributes exp(i pi h) per direction.
    const double s = 2.0 / static_cast<double>(e.size());
    for (int i1 = 0; i1 < e.n1; ++i1) {
      for (int i2 = 0; i2 < e.n2; ++i2) {
        int parity = (signed_mode(i1, e.n1) + signed_mode(i2, e.n2)) & 1;
        v[static_cast<std::size_t>(i1) * e.n2 + i2] *= parity ? -s : s;
      }
    }
  }
  return GridField2D(e, field.domain(), Space::spectral, std::move(v));
}

GridField2D inverse_transform(const GridField2D& spectral) {
  if (spectral.space() != Space::spectral) throw ConfigurationError("inverse_transform expects a spectral field");
  const auto e = spectral.extents();
  std::vector<cplx> v = spectral.storage();
  if (spectral.domain() == Domain::lattice) {
    dft2d(v, e.n1, e.n2, +1);
    const double s = 1.0 / std::sqrt(static_cast<double>(e.size()));
    for (auto& c : v) c *= s;
  } else {
    for (int i1 = 0; i1 < e.n1; ++i1) {
      for (int i2 = 0; i2 < e.n2; ++i2) {
        int parity = (signed_mode(i1, e.n1) + signed_mode(i2, e.n2)) & 1;
        v[static_cast<std::size_t>(i1) * e.n2 + i2] *= parity ? -0.5 : 0.5;
      }
    }
    dft2d(v, e.n1, e.n2, +1);
  }
  return GridField2D(e, spectral.domain(), Space::physical, std::move(v));
}

double weighted_norm(const GridField2D& spectral, const WeightedNormParams& w) {
  if (w.rho < 0 || w.s < 0) throw ConfigurationError("weighted_norm needs rho >= 0 and s >= 0");
  const auto e = spectral.extents();
  double sum = 0.0;
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const int k1 = signed_mode(i1, e.n1);
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const int k2 = signed_mode(i2, e.n2);
      if (k1 == 0 && k2 == 0) continue;
      const double r = std::hypot(static_cast<double>(k1), static_cast<double>(k2));
      sum += std::norm(spectral.at(i1, i2)) * std::exp(2.0 * w.rho * r) * std::pow(r, 2.0 * w.s);
    }
  }
  return std::sqrt(sum);
}

GridField2D galerkin_project(const GridField2D& spectral, int M) {
  if (M < 0) throw ConfigurationError("galerkin_project needs M >= 0");
  GridField2D out = spectral;
  const auto e = out.extents();
  const long long M2 = static_cast<long long>(M) * M;
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const long long k1 = signed_mode(i1, e.n1);
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const long long k2 = signed_mode(i2, e.n2);
      if (k1 * k1 + k2 * k2 > M2) out.at(i1, i2) = 0.0;
    }
  }
  return out;
}

double delta1_symbol(int k1, int k2, LatticeSize sizes) {
  if (sizes.N1 < 0 || sizes.N2 < 0) throw ConfigurationError("negative lattice size");
  if (std::abs(k1) > sizes.N1 || std::abs(k2) > sizes.N2)
    throw ConfigurationError("mode (" + std::to_string(k1) + "," + std::to_string(k2) + ") outside the lattice");
  const double s1 = std::sin(k1 * std::numbers::pi / (2 * sizes.N1 + 1));
  const double s2 = std::sin(k2 * std::numbers::pi / (2 * sizes.N2 + 1));
  return -4.0 * s1 * s1 - 4.0 * s2 * s2;
}

GridField2D apply_delta1(const GridField2D& physical) {
  if (physical.space() != Space::physical) throw ConfigurationError("apply_delta1 expects a physical field");
  const auto e = physical.extents();
  GridField2D out(e, physical.domain(), Space::physical);
  for (int i1 = 0; i1 < e.n1; ++i1) {
    const int up = (i1 + e.n1 - 1) % e.n1;
    const int dn = (i1 + 1) % e.n1;
    for (int i2 = 0; i2 < e.n2; ++i2) {
      const int lf = (i2 + e.n2 - 1) % e.n2;
      const int rt = (i2 + 1) % e.n2;
      out.at(i1, i2) = physical.at(up, i2) + physical.at(dn, i2) + physical.at(i1, lf) + physical.at(i1, rt) -
                       4.0 * physical.at(i1, i2);
    }
  }
  return out;
}

void apply_delta1(std::span<const double> in, std::span<double> out, int n1, int n2) {
  const std::size_t w = static_cast<std::size_t>(n2);
  for (int i1 = 0; i1 < n1; ++i1) {
    const double* c = in.data() + i1 * w;
    const double* u = in.data() + ((i1 + n1 - 1) % n1) * w;
    const double* d = in.data() + ((i1 + 1) % n1) * w;
    double* o = out.data() + i1 * w;
    if (n2 == 1) {
      o[0] = u[0] + d[0] - 2.0 * c[0];
      continue;
    }
    o[0] = u[0] + d[0] + c[n2 - 1] + c[1] - 4.0 * c[0];
    for (std::size_t i = 1; i + 1 < w; ++i) o[i] = u[i] + d[i] + c[i - 1] + c[i + 1] - 4.0 * c[i];
    o[w - 1] = u[w - 1] + d[w - 1] + c[w - 2] + c[0] - 4.0 * c[w - 1];
  }
}

}  // namespace metastab
