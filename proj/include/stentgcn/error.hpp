#pragma once

#include <stdexcept>
#include <string>

namespace stentgcn {

enum class ErrorKind {
  InvalidArgument,
  ZeroDegreeNode,
  DimensionMismatch,
  ShapeMismatch,
  DegenerateFrame,
  CoincidentMarkers,
  DegenerateConfiguration,
  PointOnPrincipalPlane,
  NoConvergence,
  DegenerateReference,
  ResolutionOverflow,
  EmptyMesh,
  EmptyDataset,
  NonFiniteLoss,
  ParseError,
  SchemaVersionMismatch,
  InsufficientFamilies,
  CoplanarPlacement,
  Io,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroDegreeNode: return "ZeroDegreeNode";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::CoincidentMarkers: return "CoincidentMarkers";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::PointOnPrincipalPlane: return "PointOnPrincipalPlane";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateReference: return "DegenerateReference";
    case ErrorKind::ResolutionOverflow: return "ResolutionOverflow";
    case ErrorKind::EmptyMesh: return "EmptyMesh";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::InsufficientFamilies: return "InsufficientFamilies";
    case ErrorKind::CoplanarPlacement: return "CoplanarPlacement";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace stentgcn
