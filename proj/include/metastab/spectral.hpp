#pragma once

// Discrete Fourier conventions shared by the lattice and the continuum fields.
//
// Lattice fields live on Z^2 with j in [-N1,N1] x [-N2,N2] and use the
// unitary transform
//   Q^_k = N^{-1/2} sum_j Q_j exp(-2 pi i (j1 k1/(2N1+1) + j2 k2/(2N2+1))).
// Torus fields live on I = [-1,1]^2, sampled at y = -1 + 2 i/n, and use
//   f(y) = 1/2 sum_h f^_h exp(i pi h.y),   f^_h = 1/2 int_I f exp(-i pi h.y) dy,
// so that int_I |f|^2 dy = sum_h |f^_h|^2 and the grid sum is
// sum_i |f_i|^2 = (n1 n2 / 4) sum_h |f^_h|^2.
//
// Both physical and spectral arrays are row-major with the second index
// contiguous. Spectral entries sit in wrap-around order; signed mode k is
// stored at k mod n.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace metastab {

using cplx = std::complex<double>;

enum class Domain { lattice, torus };
enum class Space { physical, spectral };

struct Extents {
  int n1 = 0;
  int n2 = 0;
  std::size_t size() const { return static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2); }
  bool operator==(const Extents&) const = default;
};

// Signed mode index of storage slot i on an n-point axis. For even n the
// unpaired slot n/2 maps to -n/2.
inline int signed_mode(int i, int n) { return 2 * i < n ? i : i - n; }
inline int mode_slot(int k, int n) { return ((k % n) + n) % n; }

class GridField2D {
 public:
  GridField2D() = default;
  GridField2D(Extents ext, Domain dom, Space space = Space::physical);
  GridField2D(Extents ext, Domain dom, Space space, std::vector<cplx> values);

  const Extents& extents() const { return ext_; }
  Domain domain() const { return dom_; }
  Space space() const { return space_; }

  cplx& at(int i1, int i2) { return v_[idx(i1, i2)]; }
  const cplx& at(int i1, int i2) const { return v_[idx(i1, i2)]; }
  // Signed mode access, spectral fields only.
  cplx& mode(int k1, int k2);
  const cplx& mode(int k1, int k2) const;

  std::span<cplx> values() { return v_; }
  std::span<const cplx> values() const { return v_; }
  std::vector<cplx>& storage() { return v_; }
  const std::vector<cplx>& storage() const { return v_; }

 private:
  std::size_t idx(int i1, int i2) const {
    return static_cast<std::size_t>(i1) * static_cast<std::size_t>(ext_.n2) + static_cast<std::size_t>(i2);
  }

  Extents ext_{};
  Domain dom_ = Domain::lattice;
  Space space_ = Space::physical;
  std::vector<cplx> v_;
};

struct WeightedNormParams {
  double rho = 0.0;
  double s = 0.0;
};

struct LatticeSize {
  int N1 = 0;
  int N2 = 0;
};

GridField2D forward_transform(const GridField2D& field);
GridField2D inverse_transform(const GridField2D& spectral);

// (sum_{n != 0} |v_n|^2 exp(2 rho |n|) |n|^{2s})^{1/2}; the zero mode is skipped.
double weighted_norm(const GridField2D& spectral, const WeightedNormParams& w);

// Keeps modes with Euclidean |n| <= M.
GridField2D galerkin_project(const GridField2D& spectral, int M);

// Symbol of the 5-point periodic Laplacian: -4 sin^2(k1 pi/(2N1+1)) - 4 sin^2(k2 pi/(2N2+1)).
double delta1_symbol(int k1, int k2, LatticeSize sizes);

// 5-point periodic stencil applied in physical space (lattice fields).
GridField2D apply_delta1(const GridField2D& physical);
void apply_delta1(std::span<const double> in, std::span<double> out, int n1, int n2);

// Raw unnormalized in-place DFT, sign -1 forward, +1 backward. Thread-safe.
void dft2d(std::span<cplx> data, int n1, int n2, int sign);

}  // namespace metastab
