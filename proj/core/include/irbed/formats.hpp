#pragma once

// Interchange file formats: documents/topics/re-rank JSON lines (optionally
// gzipped), qrels, and six-column run files. Parsers validate strictly and
// fail fast; serializers are exact inverses with a canonical field order so
// serialized files are byte-stable for hashing.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irbed/error.hpp"

namespace irbed::formats {

using Json = nlohmann::ordered_json;

struct DocumentRecord {
  std::string docno;
  std::string text;
  Json original_document = Json::object();

  bool operator==(const DocumentRecord&) const = default;
};

struct TopicRecord {
  std::string qid;
  std::string query;
  Json original_topic = Json::object();

  bool operator==(const TopicRecord&) const = default;
};

struct RerankEntry {
  std::string qid;
  std::string query;
  Json original_topic = Json::object();
  std::string docno;
  std::string text;
  Json original_document = Json::object();
  double score = 0.0;       // previous-stage score, must be finite
  std::int64_t rank = 1;    // previous-stage rank, >= 1

  bool operator==(const RerankEntry&) const = default;
};

struct Qrel {
  std::string topic;
  std::string iteration;  // conventionally "Q0"
  std::string docno;
  int relevance = 0;

  bool operator==(const Qrel&) const = default;
};

struct RunLine {
  std::string qid;
  std::string iteration;
  std::string docno;
  std::int64_t rank = 1;
  double score = 0.0;
  std::string score_text;  // verbatim decimal text, re-emitted losslessly
  std::string tag;

  // score equivalence goes through score_text so NaN-scored lines still
  // round-trip and float formatting never changes a run's bytes
  bool operator==(const RunLine& other) const {
    return qid == other.qid && iteration == other.iteration && docno == other.docno &&
           rank == other.rank && score_text == other.score_text && tag == other.tag;
  }
};

struct RunFile {
  std::vector<RunLine> lines;
  std::string tag;

  bool operator==(const RunFile&) const = default;
};

/// Canonical shortest decimal text for a programmatically produced score.
std::string format_score(double value);

/// Builds a line with score_text derived from the score value.
RunLine make_run_line(std::string qid, std::string docno, std::int64_t rank, double score,
                      std::string tag, std::string iteration = "Q0");

// ---- parsers -------------------------------------------------------------
// `gzipped` selects gzip decompression of `bytes` first. Parsers preserve
// input order and throw Error{parse|integrity|validation} on the first bad
// line, naming the line number.

std::vector<DocumentRecord> parse_documents(std::string_view bytes, bool gzipped,
                                            Diagnostics* diag = nullptr);
std::vector<TopicRecord> parse_topics(std::string_view bytes, bool gzipped,
                                      Diagnostics* diag = nullptr);
std::vector<RerankEntry> parse_rerank(std::string_view bytes, bool gzipped,
                                      Diagnostics* diag = nullptr);
std::vector<Qrel> parse_qrels(std::string_view text, Diagnostics* diag = nullptr);

/// Six-column TREC layout: qid iteration docno rank score tag.
/// Rejects duplicate (qid, docno), mixed tags, non-contiguous ranks, and
/// (unless `allow_empty`) runs without any line.
RunFile parse_run(std::string_view text, bool allow_empty = false);

// ---- serializers (inverses of the parsers) --------------------------------
// Serializers re-validate every invariant and refuse with the violated
// invariant named. parse(serialize(x)) == x for all valid x.

std::string serialize_documents(std::span<const DocumentRecord> records, bool gzip_output);
std::string serialize_topics(std::span<const TopicRecord> records, bool gzip_output);
std::string serialize_rerank(std::span<const RerankEntry> entries, bool gzip_output);
std::string serialize_qrels(std::span<const Qrel> qrels);
std::string serialize_run(const RunFile& run);

}  // namespace irbed::formats
