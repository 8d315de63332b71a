#pragma once

#include <stdexcept>
#include <string>

namespace simsr {

enum class Errc {
  parse_failure,
  index_out_of_range,
  disconnected_surface,
  degenerate_element,
  outside_lattice,
  shape_mismatch,
  invalid_argument,
  non_finite,
  singular_system,
  io_failure,
  graph_consumed,
  not_scalar,
};

const char* errc_name(Errc code) noexcept;

/// Exception carrying a machine-checkable error category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace simsr
