#include "simsr/error.hpp"

namespace simsr {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::parse_failure: return "parse_failure";
    case Errc::index_out_of_range: return "index_out_of_range";
    case Errc::disconnected_surface: return "disconnected_surface";
    case Errc::degenerate_element: return "degenerate_element";
    case Errc::outside_lattice: return "outside_lattice";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_finite: return "non_finite";
    case Errc::singular_system: return "singular_system";
    case Errc::io_failure: return "io_failure";
    case Errc::graph_consumed: return "graph_consumed";
    case Errc::not_scalar: return "not_scalar";
  }
  return "unknown";
}

}  // namespace simsr
