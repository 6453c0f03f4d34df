#include "curate/error.hpp"

namespace curate {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::malformed_record: return "MalformedRecord";
    case ErrorKind::invalid_utf8: return "InvalidUtf8";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::missing_id: return "MissingId";
    case ErrorKind::io_error: return "IoError";
    case ErrorKind::insufficient_data: return "InsufficientData";
    case ErrorKind::empty_corpus: return "EmptyCorpus";
    case ErrorKind::bad_model_file: return "BadModelFile";
    case ErrorKind::one_class_only: return "OneClassOnly";
    case ErrorKind::report_mismatch: return "ReportMismatch";
    case ErrorKind::too_few_points: return "TooFewPoints";
    case ErrorKind::missing_scores: return "MissingScores";
    case ErrorKind::duplicate_doc_id: return "DuplicateDocId";
    case ErrorKind::missing_class: return "MissingClass";
    case ErrorKind::unlabeled_doc: return "UnlabeledDoc";
    case ErrorKind::vocab_too_small: return "VocabTooSmall";
    case ErrorKind::unknown_id: return "UnknownId";
    case ErrorKind::corpus_too_small: return "CorpusTooSmall";
    case ErrorKind::insufficient_calibration: return "InsufficientCalibration";
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::missing_tokenizer: return "MissingTokenizer";
    case ErrorKind::stage_failure: return "StageFailure";
  }
  return "Unknown";
}

}  // namespace curate
