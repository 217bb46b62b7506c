#pragma once

#include <stdexcept>

namespace episodic_maml {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : Error { using Error::Error; };    // bad call arguments or config values
struct ShapeError : Error { using Error::Error; };       // dimension mismatch
struct SchemaError : Error { using Error::Error; };      // input file missing required columns
struct DataError : Error { using Error::Error; };        // malformed cell or row in input data
struct IoError : Error { using Error::Error; };          // filesystem failure
struct SamplingError : Error { using Error::Error; };    // pool cannot satisfy the episode shape
struct ParseError : Error { using Error::Error; };       // unreadable serialized artifact
struct VersionError : Error { using Error::Error; };     // unsupported serialization format version
struct ValidationError : Error { using Error::Error; };  // internally inconsistent serialized artifact

}  // namespace episodic_maml
