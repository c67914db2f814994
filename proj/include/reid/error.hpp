#pragma once

#include <stdexcept>
#include <string>

namespace reid {

enum class errc {
  // file / format
  missing_file,
  io_failure,
  bad_magic,
  shape_mismatch,
  non_finite_value,
  parse_error,
  duplicate_id,
  track_split_conflict,
  // operation contracts
  dimension_mismatch,
  empty_list,
  missing_weight,
  k_too_large,
  no_valid_triplet,
  singleton_class,
  single_class,
  class_out_of_range,
  non_finite_logit,
  no_relevant,
  missing_labels,
  length_mismatch,
  config_invalid,
};

const char* errc_name(errc code);

// Thrown by every operation whose contract is violated. The code identifies
// the failure class, the message carries specifics (path, line, index).
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message);
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] void fail(errc code, const std::string& message);

// CLI convention: 1 for I/O and system failures, 2 for validation and
// contract violations.
int exit_code_for(errc code);

}  // namespace reid
