#pragma once

#include <stdexcept>
#include <string>

namespace prescreen {

// Typed failure categories surfaced by the pipeline. Parse misses are not
// errors (they become NA values); these are for genuinely invalid inputs,
// broken configuration, or unusable data files.
enum class errc {
  malformed_row,
  unknown_speaker,
  empty_file,
  inconsistent_label,
  missing_label,
  overlapping_splits,
  missing_document,
  unknown_preset,
  invalid_template,
  token_budget_exceeded,
  score_out_of_range,
  threshold_out_of_range,
  degenerate_classes,
  insufficient_data,
  empty_input,
  duplicate_fingerprint,
  config_error,
  io_error,
};

const char* errc_name(errc code) noexcept;

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace prescreen
