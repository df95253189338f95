#pragma once

#include <stdexcept>
#include <string>

namespace moprior {

/// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition, detected before work starts.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Mismatched array / tensor dimensions.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Reason codes for volume and file I/O failures.
enum class IoErrc {
  unreadable,
  non_3d_image,
  unknown_datatype,
  non_finite_data,
  write_failed,
  bad_sidecar,
};

inline const char* to_string(IoErrc e) {
  switch (e) {
  case IoErrc::unreadable: return "unreadable file";
  case IoErrc::non_3d_image: return "non-3D image";
  case IoErrc::unknown_datatype: return "unknown datatype";
  case IoErrc::non_finite_data: return "non-finite data";
  case IoErrc::write_failed: return "write failed";
  case IoErrc::bad_sidecar: return "bad sidecar header";
  }
  return "unknown I/O error";
}

class IoError : public Error {
public:
  IoError(IoErrc errc, const std::string& what)
      : Error(std::string(to_string(errc)) + ": " + what), errc_(errc) {}

  IoErrc errc() const noexcept { return errc_; }

private:
  IoErrc errc_;
};

} // namespace moprior
