#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsg {

inline constexpr const char* kVersion = "0.1.0";

// Error codes named after the failure, not the module. Every throwing
// operation documents which of these it can raise.
enum class Errc {
  behind_camera,
  degenerate_frame,
  empty_mesh,
  parse_error,
  placement_failure,
  empty_library,
  backend_error,
  object_not_visible,
  empty_category,
  empty_file,
  empty_pool,
  io_error,
  schema_error,
  empty_intersection,
  both_empty,
  shape_mismatch,
  no_ground_truth,
  size_exceeds_dataset,
  port_in_use,
  invalid_argument,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::behind_camera: return "BehindCamera";
    case Errc::degenerate_frame: return "DegenerateFrame";
    case Errc::empty_mesh: return "EmptyMesh";
    case Errc::parse_error: return "ParseError";
    case Errc::placement_failure: return "PlacementFailure";
    case Errc::empty_library: return "EmptyLibrary";
    case Errc::backend_error: return "BackendError";
    case Errc::object_not_visible: return "ObjectNotVisible";
    case Errc::empty_category: return "EmptyCategory";
    case Errc::empty_file: return "EmptyFile";
    case Errc::empty_pool: return "EmptyPool";
    case Errc::io_error: return "IOError";
    case Errc::schema_error: return "SchemaError";
    case Errc::empty_intersection: return "EmptyIntersection";
    case Errc::both_empty: return "BothEmpty";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::no_ground_truth: return "NoGroundTruth";
    case Errc::size_exceeds_dataset: return "SizeExceedsDataset";
    case Errc::port_in_use: return "PortInUse";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace dsg
