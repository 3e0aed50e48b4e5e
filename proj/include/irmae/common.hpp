#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace irmae {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

// File/format failures that must stay distinguishable (checkpoint loader,
// IDX reader). `kind` identifies the failure class, the message carries
// the detail.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, count_mismatch, shape_mismatch, io };

  FormatError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

}  // namespace irmae
