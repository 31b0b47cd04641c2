#pragma once

#include <stdexcept>
#include <string>

namespace toolwear {

enum class ErrorKind {
  invalid_argument,
  invalid_direction,
  empty_geometry,
  dimension,
  numeric,
  band_edge,
  invalid_order,
  insufficient_data,
  empty_input,
  invalid_reference,
  invalid_shift,
  invalid_run,
  training_failure,
  config,
  data_format,
  compatibility,
  not_found,
  io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code used by the command-line tool for each error kind.
int exit_code(ErrorKind kind);

}  // namespace toolwear
