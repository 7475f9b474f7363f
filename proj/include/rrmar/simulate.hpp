#pragma once

// Data-generating processes for simulation studies: random pseudo-structural
// parameters at a fixed signal-to-noise ratio, and series simulated from them.

#include <cstdint>

#include "rrmar/errors.hpp"
#include "rrmar/model.hpp"
#include "rrmar/random.hpp"

namespace rrmar {

struct DgpSpec {
  Dims dims;
  Index t_len = 250;
  double snr = 0.7;
  Index burn_in = 50;
  std::uint64_t seed = 0;
  Mat sigma1;  ///< empty means identity
  Mat sigma2;  ///< empty means identity

  /// Throws ConfigError / DimensionError / NotPositiveDefinite.
  void validate() const;
};

/// A draw that could not be made stationary at the requested SNR.
class RejectedDrawError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Largest companion eigenvalue modulus over the largest eigenvalue of Sigma2 (x) Sigma1.
double signal_to_noise(const PseudoStructParams& params);

/// Scales every U3_j by one common factor c > 0 so that signal_to_noise equals
/// snr to 1e-8 (relative). The factor is written to *scale when given.
/// Throws ConfigError for snr <= 0 and NumericalError when all coefficients vanish.
PseudoStructParams rescale_to_snr(const PseudoStructParams& params, double snr, double* scale = nullptr);

/// delta*, gamma*, U3_j, U4_j i.i.d. standard normal, covariances from DgpSpec,
/// then rescale_to_snr. Redraws up to 100 times when the rescaled process is
/// not stationary; throws RejectedDrawError after that.
PseudoStructParams draw_dgp(const DgpSpec& spec, Rng& rng);

/// Iterates the reduced form from zero initial values, discards burn_in
/// matrices and returns exactly t_len. Throws NonStationaryError when the
/// companion spectral radius is >= 1.
MatrixSeries simulate_series(const PseudoStructParams& params, Index t_len, Index burn_in, Rng& rng);

struct SimulatedData {
  PseudoStructParams truth;
  MatrixSeries series;
};

/// draw_dgp and simulate_series on streams derived from spec.seed.
SimulatedData simulate(const DgpSpec& spec);

}  // namespace rrmar
