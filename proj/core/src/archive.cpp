#include "irbed/archive.hpp"

#include <algorithm>
#include <set>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"
#include "irbed/oci_backend.hpp"
#include "irbed/subprocess.hpp"

namespace irbed::archive {

namespace fs = std::filesystem;
using formats::Json;

namespace {

void copy_into(const fs::path& source, const fs::path& archive_root, const std::string& rel,
               Json& files) {
  fs::path target = archive_root / rel;
  fs::create_directories(target.parent_path());
  fs::copy_file(source, target, fs::copy_options::overwrite_existing);
  files[rel] = sha256_file(target);
}

void write_stub(const fs::path& archive_root, const std::string& rel, const std::string& digest) {
  write_file(archive_root / (rel + ".withheld"), digest + "\n");
}

}  // namespace

Json export_archive(Platform& platform, const fs::path& destination,
                    const ExportOptions& options) {
  auto runs = platform.list_runs();
  if (runs.empty()) {
    throw Error(ErrorKind::validation, "nothing to export: the task has no recorded runs");
  }

  // every node of every recorded run must still resolve to cache
  // provenance (sealed output or a provenance record from a prior import)
  std::vector<std::string> missing_keys;
  std::set<std::string> provenance_keys;
  for (const auto& run : runs) {
    Json provenance = Json::parse(read_file(run.dir / "provenance.json"));
    for (const auto& node : provenance.at("nodes")) {
      std::string key = node.at("cache_key").get<std::string>();
      if (key.empty()) continue;
      if (fs::exists(platform.cache().entry_dir(cache::CacheKey{key}) / "provenance.json")) {
        provenance_keys.insert(key);
      } else {
        missing_keys.push_back(key);
      }
    }
  }
  if (!missing_keys.empty()) {
    std::sort(missing_keys.begin(), missing_keys.end());
    missing_keys.erase(std::unique(missing_keys.begin(), missing_keys.end()),
                       missing_keys.end());
    std::string listing;
    for (const auto& key : missing_keys) {
      if (!listing.empty()) listing += ", ";
      listing += key;
    }
    throw Error(ErrorKind::integrity,
                "export aborted: cache entries missing for keys: " + listing);
  }

  fs::create_directories(destination);
  Json files = Json::object();

  // cache provenance travels with the archive; outputs are reproducible
  // via replay and stay home
  for (const auto& key : provenance_keys) {
    copy_into(platform.cache().entry_dir(cache::CacheKey{key}) / "provenance.json", destination,
              "cache/" + key + "/provenance.json", files);
  }

  // ---- datasets ----
  Json datasets = Json::array();
  for (const auto& id : platform.datasets().list()) {
    auto meta = platform.datasets().meta(id);
    bool include_content =
        meta.content_present && (!meta.confidential || options.include_test_data);
    Json entry;
    entry["id"] = id;
    entry["confidential"] = meta.confidential;
    entry["content_included"] = include_content;
    Json digests;
    digests["documents"] = meta.documents_digest;
    digests["topics"] = meta.topics_digest;
    digests["qrels"] = meta.qrels_digest ? Json(*meta.qrels_digest) : Json();
    entry["digests"] = digests;
    datasets.push_back(entry);

    std::string base = "datasets/" + id + "/";
    copy_into(platform.datasets().root() / id / "meta.json", destination, base + "meta.json",
              files);
    if (include_content) {
      copy_into(platform.datasets().root() / id / "documents.jsonl.gz", destination,
                base + "documents.jsonl.gz", files);
      copy_into(platform.datasets().root() / id / "topics.jsonl.gz", destination,
                base + "topics.jsonl.gz", files);
      if (meta.qrels_digest) {
        copy_into(platform.datasets().root() / id / "qrels.txt", destination, base + "qrels.txt",
                  files);
      }
    } else {
      write_stub(destination, base + "documents.jsonl.gz", meta.documents_digest);
      write_stub(destination, base + "topics.jsonl.gz", meta.topics_digest);
      if (meta.qrels_digest) write_stub(destination, base + "qrels.txt", *meta.qrels_digest);
    }
  }

  // ---- registry (components + uploads) ----
  copy_into(platform.components().log_file(), destination, "registry/components.log", files);
  Json components = Json::array();
  for (const auto& node : platform.components().list()) {
    Json entry;
    entry["id"] = node.ref.id;
    entry["version"] = node.ref.version;
    entry["kind"] = std::string(registry::node_kind_name(node.kind));
    if (node.is_upload()) {
      entry["payload_digest"] = node.payload_digest;
      if (fs::exists(node.payload_dir)) {
        for (const auto& file : fs::recursive_directory_iterator(node.payload_dir)) {
          if (!file.is_regular_file()) continue;
          std::string rel = "uploads/" + node.ref.id + "/v" + std::to_string(node.ref.version) +
                            "/" + fs::relative(file.path(), node.payload_dir).generic_string();
          copy_into(file.path(), destination, rel, files);
        }
      }
    } else {
      entry["image"] = node.image_ref;
      entry["command"] = node.command;
      Json preds = Json::array();
      for (const auto& pred : node.predecessors) preds.push_back(pred.to_string());
      entry["predecessors"] = preds;
    }
    components.push_back(std::move(entry));
  }

  // ---- runs ----
  Json run_entries = Json::array();
  for (const auto& run : runs) {
    Json provenance = Json::parse(read_file(run.dir / "provenance.json"));
    auto dataset_meta = platform.datasets().meta(run.dataset);
    // blind datasets publish scores, never retrieval results
    bool include_run = run.has_run && (!dataset_meta.confidential || options.include_test_data);

    Json entry;
    entry["approach"] = run.approach;
    entry["dataset"] = run.dataset;
    entry["cache_key"] = provenance.at("cache_key");
    entry["output_digest"] = provenance.at("output_digest");
    entry["run_included"] = include_run;

    std::string base = "runs/" + run.approach + "/" + run.dataset + "/";
    copy_into(run.dir / "provenance.json", destination, base + "provenance.json", files);
    if (include_run) {
      copy_into(run.dir / "run.txt", destination, base + "run.txt", files);
    } else if (run.has_run) {
      write_stub(destination, base + "run.txt", sha256_file(run.dir / "run.txt"));
    } else if (fs::exists(run.dir / "run.txt.withheld")) {
      // keep the stub a previous export produced, so re-exports agree
      fs::create_directories(destination / "runs" / run.approach / run.dataset);
      fs::copy_file(run.dir / "run.txt.withheld", destination / (base + "run.txt.withheld"),
                    fs::copy_options::overwrite_existing);
    }
    if (run.has_evaluation) {
      copy_into(run.dir / "evaluation.json", destination, base + "evaluation.json", files);
      entry["evaluation_digest"] = files[base + "evaluation.json"];
      if (fs::exists(run.dir / "sanity.json")) {
        copy_into(run.dir / "sanity.json", destination, base + "sanity.json", files);
      }
    } else {
      entry["evaluation_digest"] = Json();
    }
    run_entries.push_back(std::move(entry));
  }

  Json images = Json::object();
  if (options.embed_images) {
    auto* oci = dynamic_cast<sandbox::OciBackend*>(&platform.backend());
    if (oci == nullptr) {
      throw Error(ErrorKind::unsupported,
                  "--embed-images needs the OCI backend; mock fixture images are built into "
                  "the binary and have no tarball form");
    }
    std::set<std::string> image_refs;
    for (const auto& node : platform.components().list()) {
      if (!node.is_upload()) image_refs.insert(node.image_ref);
    }
    int index = 0;
    for (const auto& ref : image_refs) {
      std::string rel = "images/image-" + std::to_string(index++) + ".tar";
      fs::create_directories((destination / rel).parent_path());
      auto saved = run_subprocess(
          {oci->runtime(), "save", "-o", (destination / rel).string(), ref}, {},
          std::chrono::milliseconds(10 * 60 * 1000));
      if (saved.exit_code != 0) {
        throw Error(ErrorKind::execution, "saving image '" + ref + "' failed: " + saved.err);
      }
      files[rel] = sha256_file(destination / rel);
      images[ref] = rel;
    }
  }

  Json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["task_id"] = options.task_id.empty() ? platform.config().task_id : options.task_id;
  manifest["created_at"] = utc_timestamp_iso8601();
  manifest["datasets"] = datasets;
  manifest["components"] = components;
  manifest["runs"] = run_entries;
  manifest["images"] = images;  // ref -> embedded tarball, when requested
  manifest["files"] = files;
  write_file(destination / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

Json read_manifest(const fs::path& archive_dir) {
  fs::path manifest_file = archive_dir / "manifest.json";
  if (!fs::exists(manifest_file)) {
    throw Error(ErrorKind::not_found, "no manifest.json in " + archive_dir.string());
  }
  Json manifest = Json::parse(read_file(manifest_file));
  if (manifest.at("format_version").get<int>() != kFormatVersion) {
    throw Error(ErrorKind::unsupported, "unsupported archive format version");
  }
  return manifest;
}

void import_archive(const fs::path& archive_dir, Platform& platform) {
  Json manifest = read_manifest(archive_dir);

  // imports land in pristine stores only; merging histories is not supported
  if (!platform.datasets().list().empty() || !platform.components().list().empty() ||
      !platform.list_runs().empty()) {
    throw Error(ErrorKind::conflict, "import requires an empty store");
  }

  // verify all included files before touching the store
  for (const auto& [rel, digest] : manifest.at("files").items()) {
    fs::path file = archive_dir / rel;
    if (!fs::exists(file)) {
      throw Error(ErrorKind::integrity, "archive is missing file: " + rel);
    }
    std::string actual = sha256_file(file);
    if (actual != digest.get<std::string>()) {
      throw Error(ErrorKind::digest_mismatch,
                  "digest mismatch for '" + rel + "': archive content is corrupted");
    }
  }

  const fs::path store = platform.store_root();
  for (const auto& [rel, digest] : manifest.at("files").items()) {
    fs::path target = store / rel;
    fs::create_directories(target.parent_path());
    fs::copy_file(archive_dir / rel, target, fs::copy_options::overwrite_existing);
  }
  // withheld stubs travel along so later authorized merges can verify
  for (const auto& entry : fs::recursive_directory_iterator(archive_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() > 9 && name.ends_with(".withheld")) {
      fs::path rel = fs::relative(entry.path(), archive_dir);
      fs::create_directories((store / rel).parent_path());
      fs::copy_file(entry.path(), store / rel, fs::copy_options::overwrite_existing);
    }
  }

  platform.reload();
  for (const auto& dataset : manifest.at("datasets")) {
    platform.datasets().adopt(dataset.at("id").get<std::string>());
  }
}

RunResult replay(Platform& platform, const std::string& approach, const std::string& dataset_id,
                 const RunOptions& options) {
  // find any recorded run of this approach to learn its terminal component
  std::optional<Json> provenance;
  for (const auto& record : platform.list_runs()) {
    if (record.approach != approach) continue;
    provenance = Json::parse(read_file(record.dir / "provenance.json"));
    if (record.dataset == dataset_id) break;  // prefer the matching dataset
  }
  if (!provenance) {
    throw Error(ErrorKind::not_found, "no recorded run for approach '" + approach + "'");
  }

  auto meta = platform.datasets().meta(dataset_id);
  if (!meta.content_present) {
    throw Error(ErrorKind::withheld, "cannot replay on dataset '" + dataset_id +
                                         "': data withheld from the archive");
  }

  registry::NodeRef terminal;
  terminal.id = provenance->at("terminal").at("id").get<std::string>();
  terminal.version = provenance->at("terminal").at("version").get<int>();

  RunOptions replay_options = options;
  if (replay_options.approach.empty()) replay_options.approach = approach;
  if (provenance->contains("rerank_depth")) {
    replay_options.rerank_depth = provenance->at("rerank_depth").get<std::int64_t>();
  }
  return platform.run_pipeline(terminal.to_string(), dataset_id, replay_options);
}

formats::RunFile fetch_run(const fs::path& archive_dir, const std::string& approach,
                           const std::string& dataset_id) {
  Json manifest = read_manifest(archive_dir);
  for (const auto& entry : manifest.at("runs")) {
    if (entry.at("approach") != approach || entry.at("dataset") != dataset_id) continue;
    if (!entry.at("run_included").get<bool>()) {
      throw Error(ErrorKind::withheld, "run of '" + approach + "' on '" + dataset_id +
                                           "' was withheld (blind dataset publishes scores only)");
    }
    fs::path run_file = archive_dir / "runs" / approach / dataset_id / "run.txt";
    return formats::parse_run(read_file(run_file));
  }
  throw Error(ErrorKind::not_found,
              "archive has no run for approach '" + approach + "' on dataset '" + dataset_id + "'");
}

}  // namespace irbed::archive
