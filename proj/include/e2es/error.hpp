#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace e2es {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  IoError,
  UnknownTemplate,
  UnknownServiceArea,
  CatalogueEmpty,
  NssmfUnregistered,
  UnknownSlice,
  SliceNotActive,
  DefaultSliceProtected,
  NoDefaultSlice,
  DuplicatePool,
  UnknownPool,
  UnknownEnb,
  Infeasible,
  AgentUnreachable,
  VersionConflict,
  UnknownImage,
  CapacityExceeded,
  ElasticityBound,
  VlanExhausted,
  VepcNotReady,
  UnknownPath,
  MmeUnreachable,
  NoAssociation,
  Timeout,
  TargetUnreachable,
  Internal,
};

inline constexpr int kErrorCodeCount = static_cast<int>(ErrorCode::Internal) + 1;

// Wire names are the SCREAMING_SNAKE identifiers used in NBI error bodies.
constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::UnknownTemplate: return "UNKNOWN_TEMPLATE";
    case ErrorCode::UnknownServiceArea: return "UNKNOWN_SERVICE_AREA";
    case ErrorCode::CatalogueEmpty: return "CATALOGUE_EMPTY";
    case ErrorCode::NssmfUnregistered: return "NSSMF_UNREGISTERED";
    case ErrorCode::UnknownSlice: return "UNKNOWN_SLICE";
    case ErrorCode::SliceNotActive: return "SLICE_NOT_ACTIVE";
    case ErrorCode::DefaultSliceProtected: return "DEFAULT_SLICE_PROTECTED";
    case ErrorCode::NoDefaultSlice: return "NO_DEFAULT_SLICE";
    case ErrorCode::DuplicatePool: return "DUPLICATE_POOL";
    case ErrorCode::UnknownPool: return "UNKNOWN_POOL";
    case ErrorCode::UnknownEnb: return "UNKNOWN_ENB";
    case ErrorCode::Infeasible: return "INFEASIBLE";
    case ErrorCode::AgentUnreachable: return "AGENT_UNREACHABLE";
    case ErrorCode::VersionConflict: return "VERSION_CONFLICT";
    case ErrorCode::UnknownImage: return "UNKNOWN_IMAGE";
    case ErrorCode::CapacityExceeded: return "CAPACITY_EXCEEDED";
    case ErrorCode::ElasticityBound: return "ELASTICITY_BOUND";
    case ErrorCode::VlanExhausted: return "VLAN_EXHAUSTED";
    case ErrorCode::VepcNotReady: return "VEPC_NOT_READY";
    case ErrorCode::UnknownPath: return "UNKNOWN_PATH";
    case ErrorCode::MmeUnreachable: return "MME_UNREACHABLE";
    case ErrorCode::NoAssociation: return "NO_ASSOCIATION";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::TargetUnreachable: return "TARGET_UNREACHABLE";
    case ErrorCode::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

inline ErrorCode error_code_from_string(std::string_view name) {
  for (int i = 0; i < kErrorCodeCount; ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return ErrorCode::Internal;
}

// HTTP status used when the error crosses the REST boundary.
constexpr int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownServiceArea:
      return 400;
    case ErrorCode::UnknownTemplate:
    case ErrorCode::UnknownSlice:
    case ErrorCode::UnknownPool:
    case ErrorCode::UnknownEnb:
    case ErrorCode::UnknownPath:
      return 404;
    case ErrorCode::SliceNotActive:
    case ErrorCode::DefaultSliceProtected:
    case ErrorCode::DuplicatePool:
    case ErrorCode::VersionConflict:
    case ErrorCode::ElasticityBound:
      return 409;
    case ErrorCode::CatalogueEmpty:
    case ErrorCode::NoDefaultSlice:
    case ErrorCode::NssmfUnregistered:
      return 503;
    case ErrorCode::Timeout:
      return 504;
    default:
      return 500;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace e2es
