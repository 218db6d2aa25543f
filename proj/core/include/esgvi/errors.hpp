#pragma once

#include <stdexcept>
#include <string>

namespace esgvi {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- structural / pattern errors -------------------------------------------
struct DimensionMismatch : Error { using Error::Error; };
struct PatternViolation : Error { using Error::Error; };
struct UnreferencedBlock : Error { using Error::Error; };
struct MissingCovarianceBlock : Error { using Error::Error; };

// --- numeric errors ---------------------------------------------------------
struct NotPositiveDefinite : Error { using Error::Error; };
struct SqrtFailure : Error { using Error::Error; };
struct NonSpdCovariance : Error { using Error::Error; };

// --- cubature errors ---------------------------------------------------------
struct InvalidKappa : Error { using Error::Error; };
struct PointBudgetExceeded : Error { using Error::Error; };

// A factor evaluated to NaN/inf at a sigmapoint (or threw a domain error).
struct NonFiniteFactor : Error { using Error::Error; };
// Stereo factor evaluated at or behind the camera plane.  Subclass of
// NonFiniteFactor so the cubature/solver layers treat it as a domain failure.
struct NonPositiveDepth : NonFiniteFactor { using NonFiniteFactor::NonFiniteFactor; };

// --- factor construction errors ---------------------------------------------
struct InvalidTimestep : Error { using Error::Error; };
struct MissingDerivatives : Error { using Error::Error; };
struct MissingErrorForm : Error { using Error::Error; };

// --- solver errors ------------------------------------------------------------
struct DivergedIndefinite : Error { using Error::Error; };
struct DenseCapExceeded : Error { using Error::Error; };
struct DegenerateW : Error { using Error::Error; };

// --- configuration / harness errors ------------------------------------------
struct ConfigError : Error { using Error::Error; };
struct GeometryInfeasible : Error { using Error::Error; };

}  // namespace esgvi
