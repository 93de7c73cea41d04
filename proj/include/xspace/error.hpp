#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xspace {

enum class Errc {
  invalid_params,
  length_mismatch,
  non_finite,
  shape_mismatch,
  malformed_file,
  inconsistent_lengths,
  empty_dataset,
  unsupported_layer,
  window_too_large,
  degenerate_regression,
  space_mismatch,
  too_short,
  all_zero_attribution,
  ragged_rows,
  non_numeric,
  empty_file,
  invalid_spec,
  config_invalid,
  io_error,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_params: return "invalid-params";
    case Errc::length_mismatch: return "length-mismatch";
    case Errc::non_finite: return "non-finite";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::malformed_file: return "malformed-file";
    case Errc::inconsistent_lengths: return "inconsistent-lengths";
    case Errc::empty_dataset: return "empty-dataset";
    case Errc::unsupported_layer: return "unsupported-layer";
    case Errc::window_too_large: return "window-too-large";
    case Errc::degenerate_regression: return "degenerate-regression";
    case Errc::space_mismatch: return "space-mismatch";
    case Errc::too_short: return "too-short";
    case Errc::all_zero_attribution: return "all-zero-attribution";
    case Errc::ragged_rows: return "ragged-rows";
    case Errc::non_numeric: return "non-numeric";
    case Errc::empty_file: return "empty-file";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::config_invalid: return "config-invalid";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

inline void require_length(std::size_t got, std::size_t want, std::string_view where) {
  if (got != want) {
    throw Error(Errc::length_mismatch, std::string(where) + ": expected length " +
                                           std::to_string(want) + ", got " + std::to_string(got));
  }
}

}  // namespace xspace
