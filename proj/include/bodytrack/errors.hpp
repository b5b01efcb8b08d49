// Exception types shared across the library. Each algorithmic failure mode
// gets its own type so callers can catch precisely.
#pragma once

#include <stdexcept>
#include <string>

namespace bodytrack {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// se3
struct DegenerateRotation : Error {
  explicit DegenerateRotation(const std::string& what) : Error(what) {}
};

// cloud
struct EmptyCloud : Error {
  explicit EmptyCloud(const std::string& what) : Error(what) {}
};
struct NonPositiveVoxelSize : Error {
  explicit NonPositiveVoxelSize(const std::string& what) : Error(what) {}
};
struct TooFewPoints : Error {
  explicit TooFewPoints(const std::string& what) : Error(what) {}
};

// registration
struct NoCorrespondences : Error {
  explicit NoCorrespondences(const std::string& what) : Error(what) {}
};
struct MissingNormals : Error {
  explicit MissingNormals(const std::string& what) : Error(what) {}
};

// visibility
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& what) : Error(what) {}
};
struct CameraOnPoint : Error {
  explicit CameraOnPoint(const std::string& what) : Error(what) {}
};

// posealign
struct NoPairs : Error {
  explicit NoPairs(const std::string& what) : Error(what) {}
};
struct SingularNormalMatrix : Error {
  explicit SingularNormalMatrix(const std::string& what) : Error(what) {}
};

// pipeline
struct NoUsableFrames : Error {
  explicit NoUsableFrames(const std::string& what) : Error(what) {}
};
struct AlignmentFailed : Error {
  explicit AlignmentFailed(const std::string& what) : Error(what) {}
};

// evaluate
struct TooFewPoses : Error {
  explicit TooFewPoses(const std::string& what) : Error(what) {}
};
struct LengthMismatch : Error {
  explicit LengthMismatch(const std::string& what) : Error(what) {}
};
struct EmptyInput : Error {
  explicit EmptyInput(const std::string& what) : Error(what) {}
};
struct TooFewFrames : Error {
  explicit TooFewFrames(const std::string& what) : Error(what) {}
};

// io / config
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(what) {}
};

}  // namespace bodytrack
