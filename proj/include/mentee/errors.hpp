#pragma once
// Exception types shared across the library.

#include <stdexcept>
#include <string>

namespace mentee {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// tensor / net
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct NegativeStd : Error { using Error::Error; };
struct NonFiniteActivation : Error { using Error::Error; };
struct NonPositiveTemperature : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct StaleCache : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct ManifestMismatch : Error { using Error::Error; };

// probe
struct SpatialMismatch : Error { using Error::Error; };
struct BatchMismatch : Error { using Error::Error; };
struct NegativeWeight : Error { using Error::Error; };
struct ProbeShapeError : Error { using Error::Error; };

// data
struct DataError : Error { using Error::Error; };
struct BadMagic : DataError { using DataError::DataError; };
struct DimensionMismatch : DataError { using DataError::DataError; };
struct Truncated : DataError { using DataError::DataError; };
struct UnlabeledDataset : DataError { using DataError::DataError; };
struct EmptyDataset : DataError { using DataError::DataError; };

// harness
struct ConfigError : Error { using Error::Error; };
struct ArchMismatch : Error { using Error::Error; };
struct UnrecoverableRun : Error { using Error::Error; };
struct NotVisualizable : Error { using Error::Error; };

} // namespace mentee
