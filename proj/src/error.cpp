#include "toolwear/error.hpp"

namespace toolwear {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::invalid_direction: return "invalid direction";
    case ErrorKind::empty_geometry: return "empty geometry";
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::band_edge: return "band-edge error";
    case ErrorKind::invalid_order: return "invalid order";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::invalid_reference: return "invalid reference";
    case ErrorKind::invalid_shift: return "invalid shift";
    case ErrorKind::invalid_run: return "invalid run";
    case ErrorKind::training_failure: return "training failure";
    case ErrorKind::config: return "config error";
    case ErrorKind::data_format: return "data-format error";
    case ErrorKind::compatibility: return "compatibility error";
    case ErrorKind::not_found: return "not found";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
    case ErrorKind::invalid_direction:
    case ErrorKind::empty_geometry:
    case ErrorKind::band_edge:
    case ErrorKind::invalid_order:
    case ErrorKind::invalid_reference:
    case ErrorKind::invalid_shift:
      return 2;
    case ErrorKind::data_format:
    case ErrorKind::dimension:
    case ErrorKind::insufficient_data:
    case ErrorKind::empty_input:
    case ErrorKind::io:
      return 3;
    case ErrorKind::compatibility:
      return 4;
    case ErrorKind::numeric:
    case ErrorKind::training_failure:
      return 5;
    case ErrorKind::not_found:
    case ErrorKind::invalid_run:
      return 6;
  }
  return 1;
}

}  // namespace toolwear
