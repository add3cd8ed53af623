#pragma once

#include <stdexcept>
#include <string>

namespace densescan {

// Base class for every error this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct DivisibilityError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct OutOfFrameError : Error { using Error::Error; };

// slide_io
struct FormatError : Error { using Error::Error; };
struct MissingTileError : Error { using Error::Error; };
struct LevelError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// preproc
struct DegenerateHistogramError : Error { using Error::Error; };

// scorer
struct SpecError : Error { using Error::Error; };
struct SizeError : Error { using Error::Error; };

// reconstruct
struct ArityError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct DuplicateTileError : Error { using Error::Error; };

// training
struct InsufficientRegionError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };

// eval
struct UnknownSlideError : Error { using Error::Error; };
struct SingleClassError : Error { using Error::Error; };

// synthgen
struct RecipeError : Error { using Error::Error; };
struct ManifestError : Error { using Error::Error; };

}  // namespace densescan
