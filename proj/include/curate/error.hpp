#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curate {

enum class ErrorKind {
  malformed_record,
  invalid_utf8,
  parse_error,
  missing_id,
  io_error,
  insufficient_data,
  empty_corpus,
  bad_model_file,
  one_class_only,
  report_mismatch,
  too_few_points,
  missing_scores,
  duplicate_doc_id,
  missing_class,
  unlabeled_doc,
  vocab_too_small,
  unknown_id,
  corpus_too_small,
  insufficient_calibration,
  invalid_argument,
  invalid_config,
  missing_tokenizer,
  stage_failure,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace curate
