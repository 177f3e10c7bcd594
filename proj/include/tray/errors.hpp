#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tray {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  // Short machine-readable tag used by the CLI error JSON.
  virtual const char* kind() const noexcept { return "Error"; }
};

#define TRAY_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                    \
   public:                                                       \
    using Error::Error;                                          \
    const char* kind() const noexcept override { return #Name; } \
  };

TRAY_DEFINE_ERROR(DimensionMismatch)
TRAY_DEFINE_ERROR(InvalidArgument)
TRAY_DEFINE_ERROR(IKFailure)
TRAY_DEFINE_ERROR(OutOfRange)
TRAY_DEFINE_ERROR(GeometryMismatch)
TRAY_DEFINE_ERROR(ClipTooShort)
TRAY_DEFINE_ERROR(MalformedModel)
TRAY_DEFINE_ERROR(VersionError)
TRAY_DEFINE_ERROR(NonConvergence)
TRAY_DEFINE_ERROR(EmptyGrid)
TRAY_DEFINE_ERROR(ConfigError)

#undef TRAY_DEFINE_ERROR

// Raised when the inertial acceleration has no positive component along the
// tray normal: the object would leave the surface and the friction cone is
// undefined.
class ContactLoss : public Error {
 public:
  explicit ContactLoss(double normal_component, long object_index = -1)
      : Error(make_message(normal_component, object_index)),
        normal_component_(normal_component),
        object_index_(object_index) {}

  const char* kind() const noexcept override { return "ContactLoss"; }
  double normal_component() const { return normal_component_; }
  long object_index() const { return object_index_; }

 private:
  static std::string make_message(double an, long idx) {
    std::string msg = "contact loss: a.n = " + std::to_string(an) + " <= 0";
    if (idx >= 0) msg += " (object " + std::to_string(idx) + ")";
    return msg;
  }

  double normal_component_;
  long object_index_;
};

// Stage-tagged failure from the data-collection pipeline.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const char* kind() const noexcept override { return "StageError"; }
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace tray
