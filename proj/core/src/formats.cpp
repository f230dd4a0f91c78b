#include "irbed/formats.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "irbed/io.hpp"

namespace irbed::formats {

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + what);
}

[[noreturn]] void integrity_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorKind::integrity, "line " + std::to_string(line_no) + ": " + what);
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = eol + 1;
  }
  return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (pos > start) cols.push_back(line.substr(start, pos - start));
  }
  return cols;
}

std::int64_t parse_int(std::string_view token, std::size_t line_no, const std::string& field) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    parse_fail(line_no, "non-integer " + field + ": '" + std::string(token) + "'");
  }
  return value;
}

double parse_double(std::string_view token, std::size_t line_no, const std::string& field) {
  std::string buf(token);
  char* end = nullptr;
  double value = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || buf.empty()) {
    parse_fail(line_no, "malformed " + field + ": '" + buf + "'");
  }
  return value;
}

// Identifier fields occasionally appear as JSON numbers in the wild
// (docno in re-rank entries); normalize those to their decimal string.
std::string id_from_json(const Json& value, std::size_t line_no, const std::string& field) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  if (value.is_number_unsigned()) return std::to_string(value.get<std::uint64_t>());
  parse_fail(line_no, "field '" + field + "' must be a string or integer");
}

Json required(const Json& object, const char* key, std::size_t line_no) {
  auto it = object.find(key);
  if (it == object.end()) {
    parse_fail(line_no, std::string("missing required field '") + key + "'");
  }
  return *it;
}

std::string required_string(const Json& object, const char* key, std::size_t line_no) {
  Json value = required(object, key, line_no);
  if (!value.is_string()) {
    parse_fail(line_no, std::string("field '") + key + "' must be a string");
  }
  return value.get<std::string>();
}

Json object_field(const Json& object, const char* key, std::size_t line_no) {
  auto it = object.find(key);
  if (it == object.end()) return Json::object();
  if (!it->is_object()) {
    parse_fail(line_no, std::string("field '") + key + "' must be an object");
  }
  return *it;
}

Json parse_json_line(std::string_view line, std::size_t line_no) {
  Json value = Json::parse(line, nullptr, false);
  if (value.is_discarded()) parse_fail(line_no, "invalid JSON");
  if (!value.is_object()) parse_fail(line_no, "expected a JSON object");
  return value;
}

void require_keys(const Json& object, std::initializer_list<const char*> allowed,
                  std::size_t line_no) {
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (const char* candidate : allowed) {
      if (key == candidate) {
        known = true;
        break;
      }
    }
    if (!known) parse_fail(line_no, "unexpected field '" + key + "'");
  }
}

std::string maybe_gunzip(std::string_view bytes, bool gzipped) {
  if (gzipped) return gzip_decompress(bytes);
  return std::string(bytes);
}

void validate_document(const DocumentRecord& doc, std::size_t line_no) {
  if (doc.docno.empty()) parse_fail(line_no, "docno must be non-empty");
}

void validate_topic(const TopicRecord& topic, std::size_t line_no) {
  if (topic.qid.empty()) parse_fail(line_no, "qid must be non-empty");
}

[[noreturn]] void refuse(const std::string& invariant) {
  throw Error(ErrorKind::validation, invariant);
}

[[noreturn]] void refuse_duplicate(const std::string& detail) {
  throw Error(ErrorKind::integrity, detail);
}

void check_rerank_sequence(std::span<const RerankEntry> entries) {
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::vector<const RerankEntry*>> by_qid;
  for (const auto& entry : entries) {
    if (entry.qid.empty()) refuse("qid must be non-empty");
    if (entry.docno.empty()) refuse("docno must be non-empty");
    if (entry.rank < 1) refuse("rank must be ≥ 1");
    if (!std::isfinite(entry.score)) refuse("score must be finite");
    if (!seen.emplace(entry.qid, entry.docno).second) {
      refuse_duplicate("duplicate (qid, docno) pair: (" + entry.qid + ", " + entry.docno + ")");
    }
    by_qid[entry.qid].push_back(&entry);
  }
  for (const auto& [qid, group] : by_qid) {
    std::set<std::int64_t> ranks;
    for (const auto* entry : group) ranks.insert(entry->rank);
    if (ranks.size() != group.size() || *ranks.begin() != 1 ||
        *ranks.rbegin() != static_cast<std::int64_t>(group.size())) {
      refuse("ranks for qid " + qid + " must be contiguous 1.." +
             std::to_string(group.size()));
    }
    // scores must be non-increasing as rank increases
    std::map<std::int64_t, double> by_rank;
    for (const auto* entry : group) by_rank[entry->rank] = entry->score;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& [rank, score] : by_rank) {
      if (score > prev) {
        refuse("scores for qid " + qid + " increase at rank " + std::to_string(rank));
      }
      prev = score;
    }
  }
}

void check_run_sequence(const RunFile& run, bool allow_empty) {
  if (run.lines.empty()) {
    if (!allow_empty) refuse("run is empty");
    return;
  }
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::set<std::int64_t>> ranks;
  std::map<std::string, std::size_t> counts;
  for (const auto& line : run.lines) {
    if (line.qid.empty()) refuse("qid must be non-empty");
    if (line.docno.empty()) refuse("docno must be non-empty");
    if (line.rank < 1) refuse("rank must be ≥ 1");
    if (line.tag != run.tag) {
      refuse("mixed tags: '" + line.tag + "' vs '" + run.tag + "'");
    }
    if (!seen.emplace(line.qid, line.docno).second) {
      refuse_duplicate("duplicate (qid, docno) pair: (" + line.qid + ", " + line.docno + ")");
    }
    ranks[line.qid].insert(line.rank);
    counts[line.qid] += 1;
  }
  for (const auto& [qid, rank_set] : ranks) {
    std::size_t n = counts[qid];
    if (rank_set.size() != n || *rank_set.begin() != 1 ||
        *rank_set.rbegin() != static_cast<std::int64_t>(n)) {
      refuse("ranks for qid " + qid + " must be contiguous from 1");
    }
  }
}

}  // namespace

std::string format_score(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

RunLine make_run_line(std::string qid, std::string docno, std::int64_t rank, double score,
                      std::string tag, std::string iteration) {
  RunLine line;
  line.qid = std::move(qid);
  line.docno = std::move(docno);
  line.rank = rank;
  line.score = score;
  line.score_text = format_score(score);
  line.tag = std::move(tag);
  line.iteration = std::move(iteration);
  return line;
}

std::vector<DocumentRecord> parse_documents(std::string_view bytes, bool gzipped,
                                            Diagnostics* diag) {
  (void)diag;
  std::string text = maybe_gunzip(bytes, gzipped);
  std::vector<DocumentRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) continue;
    Json object = parse_json_line(line, line_no);
    require_keys(object, {"docno", "text", "original_document"}, line_no);
    DocumentRecord doc;
    doc.docno = id_from_json(required(object, "docno", line_no), line_no, "docno");
    doc.text = required_string(object, "text", line_no);
    doc.original_document = object_field(object, "original_document", line_no);
    validate_document(doc, line_no);
    auto [it, inserted] = seen.emplace(doc.docno, line_no);
    if (!inserted) {
      integrity_fail(line_no, "duplicate docno '" + doc.docno + "' (first seen on line " +
                                  std::to_string(it->second) + ")");
    }
    records.push_back(std::move(doc));
  }
  return records;
}

std::vector<TopicRecord> parse_topics(std::string_view bytes, bool gzipped, Diagnostics* diag) {
  (void)diag;
  std::string text = maybe_gunzip(bytes, gzipped);
  std::vector<TopicRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) continue;
    Json object = parse_json_line(line, line_no);
    require_keys(object, {"qid", "query", "original_topic", "original_query"}, line_no);
    TopicRecord topic;
    topic.qid = id_from_json(required(object, "qid", line_no), line_no, "qid");
    topic.query = required_string(object, "query", line_no);
    // `original_query` is accepted as an input alias; output always uses
    // the canonical `original_topic` key.
    if (object.contains("original_topic")) {
      topic.original_topic = object_field(object, "original_topic", line_no);
    } else {
      topic.original_topic = object_field(object, "original_query", line_no);
    }
    validate_topic(topic, line_no);
    auto [it, inserted] = seen.emplace(topic.qid, line_no);
    if (!inserted) {
      integrity_fail(line_no, "duplicate qid '" + topic.qid + "' (first seen on line " +
                                  std::to_string(it->second) + ")");
    }
    records.push_back(std::move(topic));
  }
  return records;
}

std::vector<RerankEntry> parse_rerank(std::string_view bytes, bool gzipped, Diagnostics* diag) {
  (void)diag;
  std::string text = maybe_gunzip(bytes, gzipped);
  std::vector<RerankEntry> entries;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) continue;
    Json object = parse_json_line(line, line_no);
    require_keys(object,
                 {"qid", "query", "original_topic", "original_query", "docno", "text",
                  "original_document", "score", "rank"},
                 line_no);
    RerankEntry entry;
    entry.qid = id_from_json(required(object, "qid", line_no), line_no, "qid");
    entry.query = required_string(object, "query", line_no);
    if (object.contains("original_topic")) {
      entry.original_topic = object_field(object, "original_topic", line_no);
    } else {
      entry.original_topic = object_field(object, "original_query", line_no);
    }
    entry.docno = id_from_json(required(object, "docno", line_no), line_no, "docno");
    entry.text = required_string(object, "text", line_no);
    entry.original_document = object_field(object, "original_document", line_no);
    Json score = required(object, "score", line_no);
    if (!score.is_number()) parse_fail(line_no, "field 'score' must be a number");
    entry.score = score.get<double>();
    Json rank = required(object, "rank", line_no);
    if (!rank.is_number_integer() && !rank.is_number_unsigned()) {
      parse_fail(line_no, "field 'rank' must be an integer");
    }
    entry.rank = rank.get<std::int64_t>();
    entries.push_back(std::move(entry));
  }
  check_rerank_sequence(entries);
  return entries;
}

std::vector<Qrel> parse_qrels(std::string_view text, Diagnostics* diag) {
  std::vector<Qrel> qrels;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) continue;
    auto cols = split_ws(line);
    if (cols.size() != 4) {
      parse_fail(line_no, "expected 4 columns (topic iteration docno relevance), got " +
                              std::to_string(cols.size()));
    }
    Qrel qrel;
    qrel.topic = std::string(cols[0]);
    qrel.iteration = std::string(cols[1]);
    qrel.docno = std::string(cols[2]);
    qrel.relevance = static_cast<int>(parse_int(cols[3], line_no, "relevance"));
    if (qrel.relevance < 0 || qrel.relevance > 3) {
      warn_into(diag, "line " + std::to_string(line_no) + ": relevance " +
                          std::to_string(qrel.relevance) + " outside the usual 0..3 range");
    }
    if (!seen.emplace(qrel.topic, qrel.docno).second) {
      integrity_fail(line_no,
                     "duplicate (topic, docno) pair: (" + qrel.topic + ", " + qrel.docno + ")");
    }
    qrels.push_back(std::move(qrel));
  }
  return qrels;
}

RunFile parse_run(std::string_view text, bool allow_empty) {
  RunFile run;
  std::size_t line_no = 0;
  bool tag_set = false;
  for (std::string_view raw : split_lines(text)) {
    ++line_no;
    if (is_blank(raw)) continue;
    auto cols = split_ws(raw);
    if (cols.size() != 6) {
      parse_fail(line_no, "expected 6 columns (qid iteration docno rank score tag), got " +
                              std::to_string(cols.size()));
    }
    RunLine line;
    line.qid = std::string(cols[0]);
    line.iteration = std::string(cols[1]);
    line.docno = std::string(cols[2]);
    line.rank = parse_int(cols[3], line_no, "rank");
    line.score = parse_double(cols[4], line_no, "score");
    line.score_text = std::string(cols[4]);
    line.tag = std::string(cols[5]);
    if (!tag_set) {
      run.tag = line.tag;
      tag_set = true;
    }
    run.lines.push_back(std::move(line));
  }
  check_run_sequence(run, allow_empty);
  return run;
}

namespace {

std::string serialize_jsonl(const std::vector<Json>& lines, bool gzip_output) {
  std::string out;
  for (const Json& line : lines) {
    out += line.dump();
    out += '\n';
  }
  if (gzip_output) return gzip_compress(out);
  return out;
}

}  // namespace

std::string serialize_documents(std::span<const DocumentRecord> records, bool gzip_output) {
  std::unordered_set<std::string> seen;
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& doc : records) {
    if (doc.docno.empty()) refuse("docno must be non-empty");
    if (!seen.insert(doc.docno).second) refuse("duplicate docno '" + doc.docno + "'");
    Json object;
    object["docno"] = doc.docno;
    object["text"] = doc.text;
    object["original_document"] = doc.original_document;
    lines.push_back(std::move(object));
  }
  return serialize_jsonl(lines, gzip_output);
}

std::string serialize_topics(std::span<const TopicRecord> records, bool gzip_output) {
  std::unordered_set<std::string> seen;
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& topic : records) {
    if (topic.qid.empty()) refuse("qid must be non-empty");
    if (!seen.insert(topic.qid).second) refuse("duplicate qid '" + topic.qid + "'");
    Json object;
    object["qid"] = topic.qid;
    object["query"] = topic.query;
    object["original_topic"] = topic.original_topic;
    lines.push_back(std::move(object));
  }
  return serialize_jsonl(lines, gzip_output);
}

std::string serialize_rerank(std::span<const RerankEntry> entries, bool gzip_output) {
  check_rerank_sequence(entries);
  std::vector<Json> lines;
  lines.reserve(entries.size());
  for (const auto& entry : entries) {
    Json object;
    object["qid"] = entry.qid;
    object["query"] = entry.query;
    object["original_topic"] = entry.original_topic;
    object["docno"] = entry.docno;
    object["text"] = entry.text;
    object["original_document"] = entry.original_document;
    object["score"] = entry.score;
    object["rank"] = entry.rank;
    lines.push_back(std::move(object));
  }
  return serialize_jsonl(lines, gzip_output);
}

std::string serialize_qrels(std::span<const Qrel> qrels) {
  std::set<std::pair<std::string, std::string>> seen;
  std::string out;
  for (const auto& qrel : qrels) {
    if (qrel.topic.empty()) refuse("topic must be non-empty");
    if (qrel.docno.empty()) refuse("docno must be non-empty");
    if (!seen.emplace(qrel.topic, qrel.docno).second) {
      refuse("duplicate (topic, docno) pair: (" + qrel.topic + ", " + qrel.docno + ")");
    }
    out += qrel.topic;
    out += ' ';
    out += qrel.iteration;
    out += ' ';
    out += qrel.docno;
    out += ' ';
    out += std::to_string(qrel.relevance);
    out += '\n';
  }
  return out;
}

std::string serialize_run(const RunFile& run) {
  check_run_sequence(run, /*allow_empty=*/true);
  std::string out;
  for (const auto& line : run.lines) {
    std::string score_text = line.score_text.empty() ? format_score(line.score) : line.score_text;
    out += line.qid;
    out += ' ';
    out += line.iteration;
    out += ' ';
    out += line.docno;
    out += ' ';
    out += std::to_string(line.rank);
    out += ' ';
    out += score_text;
    out += ' ';
    out += line.tag;
    out += '\n';
  }
  return out;
}

}  // namespace irbed::formats
