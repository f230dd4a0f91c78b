#include "irbed/dataset_hub.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

namespace irbed::hub {

namespace fs = std::filesystem;
using formats::Json;

std::string_view resource_name(Resource resource) {
  switch (resource) {
    case Resource::documents: return "documents";
    case Resource::topics: return "topics";
    case Resource::rerank: return "rerank";
    case Resource::qrels: return "qrels";
  }
  return "?";
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::participant: return "participant";
    case Role::organizer: return "organizer";
    case Role::unregistered: return "unregistered";
  }
  return "?";
}

Resource resource_from_name(std::string_view name) {
  if (name == "documents") return Resource::documents;
  if (name == "topics") return Resource::topics;
  if (name == "rerank" || name == "re-rank") return Resource::rerank;
  if (name == "qrels") return Resource::qrels;
  throw Error(ErrorKind::validation, "unknown resource: " + std::string(name));
}

Role role_from_name(std::string_view name) {
  if (name == "participant") return Role::participant;
  if (name == "organizer") return Role::organizer;
  if (name == "unregistered") return Role::unregistered;
  throw Error(ErrorKind::validation, "unknown role: " + std::string(name));
}

namespace {

constexpr const char* kDocumentsFile = "documents.jsonl.gz";
constexpr const char* kTopicsFile = "topics.jsonl.gz";
constexpr const char* kQrelsFile = "qrels.txt";
constexpr const char* kMetaFile = "meta.json";

// Default access matrix. Organizers see everything; participants see the
// software-facing files but not qrels; unregistered users see nothing.
// Every denied cell can be lifted by an explicit organizer grant.
bool default_allowed(Resource resource, Role role) {
  switch (role) {
    case Role::organizer: return true;
    case Role::participant: return resource != Resource::qrels;
    case Role::unregistered: return false;
  }
  return false;
}

Json rule_to_json(const DefaultTextRule& rule) {
  Json object;
  object["source_fields"] = rule.source_fields;
  object["joiner"] = rule.joiner;
  return object;
}

DefaultTextRule rule_from_json(const Json& object) {
  DefaultTextRule rule;
  rule.source_fields = object.at("source_fields").get<std::vector<std::string>>();
  rule.joiner = object.at("joiner").get<std::string>();
  return rule;
}

std::string value_as_text(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

}  // namespace

DatasetHub::DatasetHub(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path DatasetHub::dataset_dir(const std::string& id) const { return root_ / id; }

fs::path DatasetHub::grants_file() const { return root_ / "grants.json"; }

std::string DatasetHub::resolve_default_text(const Json& raw, const DefaultTextRule& rule,
                                             Diagnostics* diag) {
  if (rule.source_fields.empty()) {
    throw Error(ErrorKind::validation, "default_text rule needs at least one source field");
  }
  std::string out;
  bool any = false;
  for (const auto& field : rule.source_fields) {
    auto it = raw.find(field);
    if (it == raw.end()) continue;
    if (any) out += rule.joiner;
    out += value_as_text(*it);
    any = true;
  }
  if (!any) {
    warn_into(diag, "default_text: none of the source fields present, produced empty text");
  }
  return out;
}

namespace {

// Raw import readers: accept Table-style lines but also plainer corpora
// whose extra fields all live at the top level. Anything that is not an
// identifier or a text field is preserved in the opaque original map.
std::vector<formats::DocumentRecord> import_documents(std::string_view bytes,
                                                      const std::optional<DefaultTextRule>& rule,
                                                      Diagnostics* diag) {
  std::string text = is_gzip(bytes) ? gzip_decompress(bytes) : std::string(bytes);
  std::vector<formats::DocumentRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json object = Json::parse(line, nullptr, false);
    if (object.is_discarded() || !object.is_object()) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": invalid JSON");
    }
    formats::DocumentRecord doc;
    auto docno = object.find("docno");
    if (docno == object.end()) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": missing docno");
    }
    doc.docno = docno->is_string() ? docno->get<std::string>() : docno->dump();
    if (object.contains("original_document")) {
      doc.original_document = object["original_document"];
    } else {
      Json extras = Json::object();
      for (const auto& [key, value] : object.items()) {
        if (key != "docno" && key != "text") extras[key] = value;
      }
      doc.original_document = std::move(extras);
    }
    if (object.contains("text") && object["text"].is_string()) {
      doc.text = object["text"].get<std::string>();
    } else if (rule) {
      doc.text = DatasetHub::resolve_default_text(doc.original_document, *rule, diag);
    } else {
      warn_into(diag, "document " + doc.docno + " has no text field and no default_text rule");
    }
    auto [it, inserted] = seen.emplace(doc.docno, line_no);
    if (!inserted) {
      throw Error(ErrorKind::integrity,
                  "line " + std::to_string(line_no) + ": duplicate docno '" + doc.docno + "'");
    }
    records.push_back(std::move(doc));
  }
  return records;
}

std::vector<formats::TopicRecord> import_topics(std::string_view bytes,
                                                const std::optional<DefaultTextRule>& rule,
                                                Diagnostics* diag) {
  std::string text = is_gzip(bytes) ? gzip_decompress(bytes) : std::string(bytes);
  std::vector<formats::TopicRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json object = Json::parse(line, nullptr, false);
    if (object.is_discarded() || !object.is_object()) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": invalid JSON");
    }
    formats::TopicRecord topic;
    auto qid = object.find("qid");
    if (qid == object.end()) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": missing qid");
    }
    topic.qid = qid->is_string() ? qid->get<std::string>() : qid->dump();
    if (object.contains("original_topic")) {
      topic.original_topic = object["original_topic"];
    } else if (object.contains("original_query")) {
      topic.original_topic = object["original_query"];
    } else {
      Json extras = Json::object();
      for (const auto& [key, value] : object.items()) {
        if (key != "qid" && key != "query") extras[key] = value;
      }
      topic.original_topic = std::move(extras);
    }
    if (object.contains("query") && object["query"].is_string()) {
      topic.query = object["query"].get<std::string>();
    } else if (rule) {
      topic.query = DatasetHub::resolve_default_text(topic.original_topic, *rule, diag);
    } else {
      warn_into(diag, "topic " + topic.qid + " has no query field and no default_text rule");
    }
    auto [it, inserted] = seen.emplace(topic.qid, line_no);
    if (!inserted) {
      throw Error(ErrorKind::integrity,
                  "line " + std::to_string(line_no) + ": duplicate qid '" + topic.qid + "'");
    }
    records.push_back(std::move(topic));
  }
  return records;
}

}  // namespace

DatasetMeta DatasetHub::register_dataset(const std::string& id, const fs::path& documents,
                                         const fs::path& topics,
                                         const std::optional<fs::path>& qrels, bool confidential,
                                         const std::optional<DefaultTextRule>& document_rule,
                                         const std::optional<DefaultTextRule>& topic_rule,
                                         Diagnostics* diag) {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
    throw Error(ErrorKind::validation, "invalid dataset id: '" + id + "'");
  }
  FileLock lock(root_ / (".lock-" + id));
  if (exists(id)) throw Error(ErrorKind::conflict, "dataset '" + id + "' is already registered");

  auto docs = import_documents(read_file(documents), document_rule, diag);
  auto tops = import_topics(read_file(topics), topic_rule, diag);
  std::vector<formats::Qrel> judgments;
  if (qrels) judgments = formats::parse_qrels(read_file(*qrels), diag);

  // canonical re-serialization makes the stored bytes independent of the
  // source formatting, so digests identify content
  std::string doc_bytes = formats::serialize_documents(docs, /*gzip_output=*/true);
  std::string topic_bytes = formats::serialize_topics(tops, /*gzip_output=*/true);

  fs::path dir = dataset_dir(id);
  fs::create_directories(dir);
  write_file(dir / kDocumentsFile, doc_bytes);
  write_file(dir / kTopicsFile, topic_bytes);

  DatasetMeta meta;
  meta.dataset_id = id;
  meta.confidential = confidential;
  meta.document_rule = document_rule;
  meta.topic_rule = topic_rule;
  meta.documents_digest = sha256_hex(doc_bytes);
  meta.topics_digest = sha256_hex(topic_bytes);
  if (qrels) {
    std::string qrel_bytes = formats::serialize_qrels(judgments);
    write_file(dir / kQrelsFile, qrel_bytes);
    meta.qrels_digest = sha256_hex(qrel_bytes);
  }

  Json meta_json;
  meta_json["dataset_id"] = meta.dataset_id;
  meta_json["confidential"] = meta.confidential;
  meta_json["document_rule"] = document_rule ? rule_to_json(*document_rule) : Json();
  meta_json["topic_rule"] = topic_rule ? rule_to_json(*topic_rule) : Json();
  Json digests;
  digests["documents"] = meta.documents_digest;
  digests["topics"] = meta.topics_digest;
  digests["qrels"] = meta.qrels_digest ? Json(*meta.qrels_digest) : Json();
  meta_json["digests"] = digests;
  write_file(dir / kMetaFile, meta_json.dump(2) + "\n");

  {
    std::lock_guard<std::mutex> guard(mutex_);
    cache_[id] = meta;
  }
  return meta;
}

bool DatasetHub::exists(const std::string& id) const {
  return fs::exists(dataset_dir(id) / kMetaFile);
}

DatasetMeta DatasetHub::read_meta(const std::string& id) const {
  if (!exists(id)) throw Error(ErrorKind::not_found, "dataset '" + id + "' is not registered");
  Json object = Json::parse(read_file(dataset_dir(id) / kMetaFile));
  DatasetMeta meta;
  meta.dataset_id = object.at("dataset_id").get<std::string>();
  meta.confidential = object.at("confidential").get<bool>();
  if (!object.at("document_rule").is_null()) {
    meta.document_rule = rule_from_json(object["document_rule"]);
  }
  if (!object.at("topic_rule").is_null()) {
    meta.topic_rule = rule_from_json(object["topic_rule"]);
  }
  const Json& digests = object.at("digests");
  meta.documents_digest = digests.at("documents").get<std::string>();
  meta.topics_digest = digests.at("topics").get<std::string>();
  if (!digests.at("qrels").is_null()) meta.qrels_digest = digests["qrels"].get<std::string>();
  meta.content_present = fs::exists(dataset_dir(id) / kDocumentsFile);
  return meta;
}

DatasetMeta DatasetHub::meta(const std::string& id) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
  }
  DatasetMeta meta = read_meta(id);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_[id] = meta;
  return meta;
}

void DatasetHub::adopt(const std::string& id) {
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.erase(id);
}

std::vector<std::string> DatasetHub::list() const {
  std::vector<std::string> ids;
  if (!fs::exists(root_)) return ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / kMetaFile)) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Json DatasetHub::load_grants() const {
  if (!fs::exists(grants_file())) return Json::object();
  return Json::parse(read_file(grants_file()));
}

void DatasetHub::set_grant(const std::string& id, Resource resource, Role role, bool granted,
                           Role actor) {
  if (actor != Role::organizer) {
    throw Error(ErrorKind::denied, "only an organizer may change access grants");
  }
  if (!exists(id)) throw Error(ErrorKind::not_found, "dataset '" + id + "' is not registered");
  FileLock lock(root_ / ".lock-grants");
  Json grants = load_grants();
  grants[id][std::string(resource_name(resource))][std::string(role_name(role))] = granted;
  write_file(grants_file(), grants.dump(2) + "\n");
}

bool DatasetHub::has_grant(const std::string& id, Resource resource, Role role) const {
  Json grants = load_grants();
  auto dataset = grants.find(id);
  if (dataset == grants.end()) return false;
  auto res = dataset->find(std::string(resource_name(resource)));
  if (res == dataset->end()) return false;
  auto cell = res->find(std::string(role_name(role)));
  if (cell == res->end()) return false;
  return cell->get<bool>();
}

AccessDecision DatasetHub::check_access(const std::string& id, Resource resource,
                                        Role role) const {
  DatasetMeta m = meta(id);
  if (role == Role::organizer) return {.granted = true, .denial = std::nullopt};
  if (has_grant(id, resource, role)) return {.granted = true, .denial = std::nullopt};

  bool allowed = default_allowed(resource, role);
  std::string reason;
  if (allowed && m.confidential && role == Role::participant) {
    allowed = false;
    reason = "dataset is blind: content is mounted into the sandbox only, not downloadable";
  } else if (!allowed) {
    reason = std::string(role_name(role)) + " has no default access to " +
             std::string(resource_name(resource));
  }
  if (allowed) return {.granted = true, .denial = std::nullopt};
  Denial denial{role, resource, /*liftable_by_grant=*/true, reason};
  return {.granted = false, .denial = denial};
}

std::filesystem::path DatasetHub::resource_path(const std::string& id, Resource resource) const {
  DatasetMeta m = meta(id);
  if (!m.content_present) {
    throw Error(ErrorKind::withheld, "dataset '" + id + "' content was withheld at export");
  }
  fs::path dir = dataset_dir(id);
  switch (resource) {
    case Resource::documents: return dir / kDocumentsFile;
    case Resource::topics: return dir / kTopicsFile;
    case Resource::qrels:
      if (!m.qrels_digest) {
        throw Error(ErrorKind::not_found, "dataset '" + id + "' has no qrels");
      }
      return dir / kQrelsFile;
    case Resource::rerank:
      throw Error(ErrorKind::validation, "re-rank files are materialized from a run, not stored");
  }
  throw Error(ErrorKind::validation, "unknown resource");
}

FetchResult DatasetHub::fetch(const std::string& id, Resource resource, Role role,
                              const formats::RunFile* rerank_source, std::int64_t rerank_depth,
                              bool lenient, Diagnostics* diag) {
  AccessDecision decision = check_access(id, resource, role);
  if (!decision.granted) return *decision.denial;
  if (resource == Resource::rerank) {
    if (rerank_source == nullptr) {
      throw Error(ErrorKind::validation,
                  "fetching the rerank resource requires a source run to materialize from");
    }
    auto entries = build_rerank(id, *rerank_source, rerank_depth, lenient, diag);
    std::string bytes = formats::serialize_rerank(entries, /*gzip_output=*/true);
    // derived artifacts live outside the dataset directory, which stays
    // immutable after registration
    fs::path out = root_ / ".derived" / id /
                   ("re-rank-" + sha256_hex(bytes).substr(0, 16) + ".jsonl.gz");
    write_file(out, bytes);
    return out;
  }
  return resource_path(id, resource);
}

std::vector<formats::RerankEntry> DatasetHub::build_rerank(const std::string& id,
                                                           const formats::RunFile& run,
                                                           std::int64_t depth, bool lenient,
                                                           Diagnostics* diag) const {
  if (depth < 1) throw Error(ErrorKind::validation, "re-rank depth must be >= 1");
  auto documents =
      formats::parse_documents(read_file(resource_path(id, Resource::documents)), true);
  auto topics = formats::parse_topics(read_file(resource_path(id, Resource::topics)), true);

  std::unordered_map<std::string, const formats::DocumentRecord*> doc_index;
  for (const auto& doc : documents) doc_index[doc.docno] = &doc;
  std::unordered_map<std::string, const formats::TopicRecord*> topic_index;
  for (const auto& topic : topics) topic_index[topic.qid] = &topic;

  // group by qid preserving first-appearance order of qids
  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<const formats::RunLine*>> grouped;
  for (const auto& line : run.lines) {
    if (grouped.find(line.qid) == grouped.end()) qid_order.push_back(line.qid);
    grouped[line.qid].push_back(&line);
  }

  std::vector<formats::RerankEntry> entries;
  for (const auto& qid : qid_order) {
    auto topic_it = topic_index.find(qid);
    if (topic_it == topic_index.end()) {
      throw Error(ErrorKind::integrity,
                  "run references qid '" + qid + "' which is not in dataset '" + id + "'");
    }
    auto& lines = grouped[qid];
    std::sort(lines.begin(), lines.end(),
              [](const formats::RunLine* a, const formats::RunLine* b) {
                return a->rank < b->rank;
              });
    std::int64_t emitted_rank = 0;
    for (const auto* line : lines) {
      if (line->rank > depth) break;
      auto doc_it = doc_index.find(line->docno);
      if (doc_it == doc_index.end()) {
        if (lenient) {
          warn_into(diag, "skipping docno '" + line->docno + "' (qid " + qid +
                              "): not in dataset '" + id + "'");
          continue;
        }
        throw Error(ErrorKind::integrity, "run references docno '" + line->docno +
                                              "' which is not in dataset '" + id + "'");
      }
      formats::RerankEntry entry;
      entry.qid = qid;
      entry.query = topic_it->second->query;
      entry.original_topic = topic_it->second->original_topic;
      entry.docno = line->docno;
      entry.text = doc_it->second->text;
      entry.original_document = doc_it->second->original_document;
      entry.score = line->score;
      entry.rank = lenient ? ++emitted_rank : line->rank;
      entries.push_back(std::move(entry));
    }
  }
  return entries;
}

std::string DatasetHub::input_digest(const std::string& id) const {
  DatasetMeta m = meta(id);
  Sha256 h;
  h.field(m.documents_digest);
  h.field(m.topics_digest);
  return h.hex();
}

std::string DatasetHub::dataset_digest(const std::string& id) const {
  DatasetMeta m = meta(id);
  Sha256 h;
  h.field(m.documents_digest);
  h.field(m.topics_digest);
  h.field(m.qrels_digest.value_or(""));
  return h.hex();
}

}  // namespace irbed::hub
