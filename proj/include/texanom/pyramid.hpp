#pragma once

#include <memory>
#include <vector>

#include "texanom/grid.hpp"

namespace texanom::pyramid {

// O*(S-2)+2: the full-resolution spectrum, O oriented bands at each of the S-2 inner
// scales, and the lowpass residual.
int subband_count(int orientations, int scales);

struct DecomposerConfig {
  int orientations = 6;
  int scales = 5;
  int rows = 256;
  int cols = 256;

  static DecomposerConfig square(int size, int orientations = 6, int scales = 5) {
    return {orientations, scales, size, size};
  }
};

enum class SubbandKind { first, oriented, last };

struct SubbandTag {
  SubbandKind kind = SubbandKind::first;
  int scale = 0;        // 0 for the spectrum, s for oriented bands, S-1 for the residual
  int orientation = 0;  // only meaningful for oriented bands
  // Pixels of the decomposed input covered by one coefficient along each axis.
  int factor() const { return 1 << scale; }
};

struct Subband {
  SubbandTag tag;
  ComplexGrid coeffs;
};

struct SubbandDecomposition {
  DecomposerConfig config;
  std::vector<Subband> subbands;

  std::size_t size() const { return subbands.size(); }
  const Subband& operator[](std::size_t i) const { return subbands[i]; }
  Subband& operator[](std::size_t i) { return subbands[i]; }
};

inline constexpr int kKernelSize = 7;

// Zero-mean complex Gabor filter: isotropic Gaussian envelope, radial frequency pi/2,
// one-octave bandwidth, carrier pointing along `angle` (measured counter-clockwise
// from the +column axis with rows increasing downwards).
ComplexGrid gabor_kernel(double angle);

class FftPlan;

// Linear map image -> subbands. Immutable after construction and safe to share
// across threads.
//
// Subband layout:
//   [0]              centered orthonormal 2-D DFT of the input
//   [1 + (s-1)*O+o]  running image pooled s times, filtered with kernel o
//   [M-1]            running image pooled S-1 times (zero imaginary part)
// Oriented filtering is a same-size correlation with mirrored borders.
class Decomposer {
 public:
  explicit Decomposer(const DecomposerConfig& config);
  ~Decomposer();
  Decomposer(Decomposer&&) noexcept;
  Decomposer& operator=(Decomposer&&) noexcept;

  const DecomposerConfig& config() const { return config_; }
  int subband_count() const;
  const std::vector<ComplexGrid>& kernels() const { return kernels_; }
  const std::vector<double>& angles() const { return angles_; }
  std::vector<SubbandTag> tags() const;

  SubbandDecomposition decompose(const RealGrid& x) const;
  // Transpose of decompose under the real inner product sum(Re(a)Re(b) + Im(a)Im(b)).
  RealGrid adjoint(const SubbandDecomposition& cotangent) const;

  // Zero-valued cotangent with the decomposition's shapes.
  SubbandDecomposition zeros() const;

 private:
  DecomposerConfig config_;
  std::vector<double> angles_;
  std::vector<ComplexGrid> kernels_;
  std::unique_ptr<FftPlan> fft_;
};

// Kept separate from decompose so losses can reuse the primitives.
RealGrid average_pool2(const RealGrid& x);
RealGrid average_pool2_adjoint(const RealGrid& g, int rows, int cols);
ComplexGrid correlate_reflect(const RealGrid& x, const ComplexGrid& kernel);
RealGrid correlate_reflect_adjoint(const ComplexGrid& g, const ComplexGrid& kernel);

// Real inner product across all subbands.
double inner(const SubbandDecomposition& a, const SubbandDecomposition& b);

}  // namespace texanom::pyramid
