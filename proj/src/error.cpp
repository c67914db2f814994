#include "reid/error.hpp"

namespace reid {

const char* errc_name(errc code) {
  switch (code) {
    case errc::missing_file: return "MissingFile";
    case errc::io_failure: return "IoFailure";
    case errc::bad_magic: return "BadMagic";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::parse_error: return "ParseError";
    case errc::duplicate_id: return "DuplicateId";
    case errc::track_split_conflict: return "TrackSplitConflict";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::empty_list: return "EmptyList";
    case errc::missing_weight: return "MissingWeight";
    case errc::k_too_large: return "KTooLarge";
    case errc::no_valid_triplet: return "NoValidTriplet";
    case errc::singleton_class: return "SingletonClass";
    case errc::single_class: return "SingleClass";
    case errc::class_out_of_range: return "ClassOutOfRange";
    case errc::non_finite_logit: return "NonFiniteLogit";
    case errc::no_relevant: return "NoRelevant";
    case errc::missing_labels: return "MissingLabels";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::config_invalid: return "ConfigInvalid";
  }
  return "UnknownError";
}

Error::Error(errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

void fail(errc code, const std::string& message) { throw Error(code, message); }

int exit_code_for(errc code) {
  switch (code) {
    case errc::missing_file:
    case errc::io_failure:
      return 1;
    default:
      return 2;
  }
}

}  // namespace reid
