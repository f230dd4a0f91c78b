// irbed command line: datasets, components, pipelines, evaluation,
// leaderboards, reproducibility reports, and archives against one store.
//
// Exit codes: 0 success, 1 domain error, 2 usage error. Errors go to
// stderr as one machine-readable JSON object.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "irbed/archive.hpp"
#include "irbed/io.hpp"
#include "irbed/platform.hpp"

namespace {

using irbed::Error;
using irbed::ErrorKind;
using irbed::Platform;
using irbed::PlatformConfig;
using Json = irbed::formats::Json;
namespace hub = irbed::hub;
namespace fs = std::filesystem;

struct GlobalOptions {
  std::string store;
  std::string role;
  std::string backend;
  int parallelism = 0;
  bool json = false;
};

Platform open_platform(const GlobalOptions& options) {
  PlatformConfig config;
  if (!options.store.empty()) {
    config.store_root = options.store;
  } else if (const char* env = std::getenv("IRBED_STORE")) {
    config.store_root = env;
  } else {
    config.store_root = fs::current_path() / ".irbed";
  }
  if (!options.backend.empty()) config.backend = options.backend;
  if (options.parallelism > 0) config.parallelism = options.parallelism;
  return Platform(std::move(config));
}

hub::Role effective_role(const GlobalOptions& options, const Platform& platform) {
  if (!options.role.empty()) return hub::role_from_name(options.role);
  return platform.config().default_role.value_or(hub::Role::organizer);
}

void emit(const GlobalOptions& options, const Json& machine, const std::string& human) {
  if (options.json) {
    std::cout << machine.dump(2) << "\n";
  } else {
    std::cout << human;
    if (!human.empty() && human.back() != '\n') std::cout << "\n";
  }
}

std::optional<hub::DefaultTextRule> make_rule(const std::vector<std::string>& fields,
                                              const std::string& joiner) {
  if (fields.empty()) return std::nullopt;
  hub::DefaultTextRule rule;
  rule.source_fields = fields;
  rule.joiner = joiner;
  return rule;
}

std::string summarize_report(const irbed::exec::ExecutionReport& report) {
  std::string out;
  for (const auto& status : report.nodes) {
    out += status.node.to_string();
    out += "  [";
    out += std::string(irbed::exec::node_state_name(status.state));
    out += "]";
    if (!status.output_digest.empty()) {
      out += "  " + status.output_digest.substr(0, 12);
    }
    if (!status.message.empty()) out += "  " + status.message;
    out += "\n";
  }
  return out;
}

Json report_json(const irbed::exec::ExecutionReport& report) {
  Json nodes = Json::array();
  for (const auto& status : report.nodes) {
    Json node;
    node["node"] = status.node.to_string();
    node["state"] = std::string(irbed::exec::node_state_name(status.state));
    node["cache_key"] = status.key.digest;
    node["output_digest"] = status.output_digest;
    node["message"] = status.message;
    nodes.push_back(std::move(node));
  }
  Json out;
  out["dataset"] = report.dataset_id;
  out["backend"] = report.backend;
  out["ok"] = report.ok();
  out["nodes"] = nodes;
  if (report.terminal) {
    out["terminal_output_digest"] = report.terminal->output_digest;
    out["terminal_cache_key"] = report.terminal->key.digest;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reproducible shared-task retrieval experiments"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--store", global.store, "store root (default: $IRBED_STORE or ./.irbed)");
  app.add_option("--role", global.role, "participant|organizer|unregistered");
  app.add_option("--backend", global.backend, "container backend: mock|oci");
  app.add_option("--parallelism", global.parallelism, "max concurrently executing nodes");
  app.add_flag("--json", global.json, "machine-readable output");

  // ---- dataset ----
  auto* dataset = app.add_subcommand("dataset", "register and access datasets");
  dataset->require_subcommand(1);

  auto* ds_register = dataset->add_subcommand("register", "import a dataset into the hub");
  std::string ds_id, ds_docs, ds_topics, ds_qrels;
  bool ds_confidential = false;
  std::vector<std::string> ds_doc_fields, ds_topic_fields;
  std::string ds_doc_joiner = " ", ds_topic_joiner = " ";
  ds_register->add_option("--id", ds_id)->required();
  ds_register->add_option("--docs", ds_docs, "documents.jsonl[.gz]")->required();
  ds_register->add_option("--topics", ds_topics, "topics.jsonl[.gz]")->required();
  ds_register->add_option("--qrels", ds_qrels, "qrels.txt");
  ds_register->add_flag("--confidential", ds_confidential, "blind dataset: scores only");
  ds_register->add_option("--doc-text-fields", ds_doc_fields,
                          "original_document fields for default text")
      ->delimiter(',');
  ds_register->add_option("--doc-text-joiner", ds_doc_joiner);
  ds_register->add_option("--topic-text-fields", ds_topic_fields,
                          "original_topic fields for default query text")
      ->delimiter(',');
  ds_register->add_option("--topic-text-joiner", ds_topic_joiner);

  auto* ds_grant = dataset->add_subcommand("grant", "grant or revoke access (organizer only)");
  std::string grant_id, grant_resource, grant_for;
  bool grant_revoke = false;
  ds_grant->add_option("--id", grant_id)->required();
  ds_grant->add_option("--resource", grant_resource, "documents|topics|rerank|qrels")->required();
  ds_grant->add_option("--for", grant_for, "role receiving the grant")->required();
  ds_grant->add_flag("--revoke", grant_revoke);

  auto* ds_fetch = dataset->add_subcommand("fetch", "fetch a dataset resource");
  std::string fetch_id, fetch_resource, fetch_out, fetch_run_path;
  std::int64_t fetch_depth = 100;
  bool fetch_lenient = false;
  ds_fetch->add_option("--id", fetch_id)->required();
  ds_fetch->add_option("--resource", fetch_resource)->required();
  ds_fetch->add_option("--out", fetch_out, "copy the resource here");
  ds_fetch->add_option("--run", fetch_run_path, "source run for --resource rerank");
  ds_fetch->add_option("--depth", fetch_depth, "re-rank depth");
  ds_fetch->add_flag("--lenient", fetch_lenient,
                     "skip run documents missing from the dataset instead of failing");

  // ---- component / upload ----
  auto* component = app.add_subcommand("component", "manage software components");
  component->require_subcommand(1);

  auto* comp_add = component->add_subcommand("add", "define an immutable component version");
  std::string comp_id, comp_image, comp_command, comp_kind = "generic";
  std::vector<std::string> comp_preds;
  comp_add->add_option("--id", comp_id)->required();
  comp_add->add_option("--image", comp_image)->required();
  comp_add->add_option("--command", comp_command)->required();
  comp_add->add_option("--kind", comp_kind, "full-rank|re-rank|generic");
  comp_add->add_option("--predecessor", comp_preds, "node reference id[@version], repeatable");

  auto* comp_revise = component->add_subcommand("revise", "new version with changed fields");
  std::string rev_id, rev_image, rev_command;
  comp_revise->add_option("--id", rev_id)->required();
  comp_revise->add_option("--image", rev_image);
  comp_revise->add_option("--command", rev_command);

  auto* comp_delete = component->add_subcommand("delete", "delete an unreferenced node");
  std::string del_id;
  int del_version = 0;
  comp_delete->add_option("--id", del_id)->required();
  comp_delete->add_option("--version", del_version)->required();

  auto* comp_list = component->add_subcommand("list", "list components and uploads");

  auto* upload = app.add_subcommand("upload", "manage file uploads");
  upload->require_subcommand(1);
  auto* upload_add = upload->add_subcommand("add", "add additional data as a pipeline source");
  std::string up_id, up_description;
  std::vector<std::string> up_files;
  upload_add->add_option("--id", up_id)->required();
  upload_add->add_option("--file", up_files, "payload file, repeatable")->required();
  upload_add->add_option("--description", up_description);

  // ---- pipeline ----
  auto* pipeline = app.add_subcommand("pipeline", "resolve and run pipelines");
  pipeline->require_subcommand(1);

  auto* pipe_resolve = pipeline->add_subcommand("resolve", "print the execution order");
  std::string resolve_terminal;
  pipe_resolve->add_option("--terminal", resolve_terminal)->required();

  auto* pipe_run = pipeline->add_subcommand("run", "execute a pipeline on a dataset");
  std::string run_terminal, run_dataset, run_approach;
  std::int64_t run_depth = 100;
  double run_cpu = 1.0;
  std::uint64_t run_memory = 10ull << 30;
  std::int64_t run_timeout = 3600;
  bool run_no_eval = false;
  bool run_lenient = false;
  std::vector<std::string> run_measures{"ndcg@10"};
  pipe_run->add_option("--terminal", run_terminal)->required();
  pipe_run->add_option("--dataset", run_dataset)->required();
  pipe_run->add_option("--approach", run_approach, "record name (default: terminal id)");
  pipe_run->add_option("--depth", run_depth, "re-rank depth");
  pipe_run->add_flag("--lenient", run_lenient,
                     "skip run documents missing from the dataset when building re-rank input");
  pipe_run->add_option("--cpu", run_cpu, "cpu cores per node");
  pipe_run->add_option("--memory", run_memory, "memory bytes per node");
  pipe_run->add_option("--timeout", run_timeout, "seconds per node");
  pipe_run->add_flag("--no-eval", run_no_eval, "skip automatic evaluation");
  pipe_run->add_option("--measure", run_measures, "measure for automatic evaluation");

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "sanity-check and score a run");
  std::string eval_run, eval_approach, eval_dataset, eval_out;
  std::vector<std::string> eval_measures{"ndcg@10"};
  evaluate->add_option("--run", eval_run, "run file to evaluate");
  evaluate->add_option("--approach", eval_approach, "or: a recorded approach");
  evaluate->add_option("--dataset", eval_dataset)->required();
  evaluate->add_option("--measure", eval_measures);
  evaluate->add_option("--out", eval_out, "directory for evaluation.json/sanity.json");

  // ---- leaderboard / repro ----
  auto* leaderboard = app.add_subcommand("leaderboard", "aggregate recorded evaluations");
  std::string lb_measure = "ndcg@10", lb_corpus_map;
  leaderboard->add_option("--measure", lb_measure);
  leaderboard->add_option("--corpus-map", lb_corpus_map,
                          "JSON file mapping task id to corpus name");

  auto* repro = app.add_subcommand("repro", "preference reproducibility between two tasks");
  std::string repro_origin, repro_measure = "ndcg@10";
  std::vector<std::string> repro_targets;
  repro->add_option("--origin", repro_origin)->required();
  repro->add_option("--target", repro_targets, "target task, repeatable")->required();
  repro->add_option("--measure", repro_measure);

  // ---- archive ----
  auto* arch = app.add_subcommand("archive", "export, import, replay");
  arch->require_subcommand(1);

  auto* arch_export = arch->add_subcommand("export", "write a self-contained archive");
  std::string exp_dest, exp_task;
  bool exp_include_test_data = false;
  bool exp_embed_images = false;
  arch_export->add_option("--dest", exp_dest)->required();
  arch_export->add_option("--task", exp_task, "task id stamped into the manifest");
  arch_export->add_flag("--include-test-data", exp_include_test_data,
                        "embed confidential dataset content (organizer exports)");
  arch_export->add_flag("--embed-images", exp_embed_images,
                        "save image tarballs for fully offline replay (OCI backend)");

  auto* arch_import = arch->add_subcommand("import", "import an archive into an empty store");
  std::string imp_src;
  arch_import->add_option("--src", imp_src)->required();

  auto* arch_replay = arch->add_subcommand("replay", "re-execute a recorded approach");
  std::string replay_approach, replay_dataset;
  bool replay_verify = false;
  arch_replay->add_option("--approach", replay_approach)->required();
  arch_replay->add_option("--dataset", replay_dataset)->required();
  arch_replay->add_flag("--verify", replay_verify,
                        "compare the new output digest against the recorded one");

  auto* arch_fetch = arch->add_subcommand("fetch-run", "read a run out of an archive");
  std::string fr_archive, fr_approach, fr_dataset, fr_out;
  arch_fetch->add_option("--archive", fr_archive)->required();
  arch_fetch->add_option("--approach", fr_approach)->required();
  arch_fetch->add_option("--dataset", fr_dataset)->required();
  arch_fetch->add_option("--out", fr_out, "write the run here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);  // prints the message and usage hint
    return rc == 0 ? 0 : 2;
  }

  try {
    if (ds_register->parsed()) {
      Platform platform = open_platform(global);
      irbed::Diagnostics diag;
      auto meta = platform.datasets().register_dataset(
          ds_id, ds_docs, ds_topics,
          ds_qrels.empty() ? std::nullopt : std::optional<fs::path>(ds_qrels), ds_confidential,
          make_rule(ds_doc_fields, ds_doc_joiner), make_rule(ds_topic_fields, ds_topic_joiner),
          &diag);
      for (const auto& warning : diag.warnings) std::cerr << "warning: " << warning << "\n";
      Json out;
      out["dataset_id"] = meta.dataset_id;
      out["digest"] = platform.datasets().dataset_digest(ds_id);
      out["confidential"] = meta.confidential;
      emit(global, out, meta.dataset_id + "  " + platform.datasets().dataset_digest(ds_id));
    } else if (ds_grant->parsed()) {
      Platform platform = open_platform(global);
      platform.datasets().set_grant(grant_id, hub::resource_from_name(grant_resource),
                                    hub::role_from_name(grant_for), !grant_revoke,
                                    effective_role(global, platform));
      Json out;
      out["dataset_id"] = grant_id;
      out["resource"] = grant_resource;
      out["role"] = grant_for;
      out["granted"] = !grant_revoke;
      emit(global, out,
           std::string(grant_revoke ? "revoked" : "granted") + " " + grant_resource + " for " +
               grant_for + " on " + grant_id);
    } else if (ds_fetch->parsed()) {
      Platform platform = open_platform(global);
      std::optional<irbed::formats::RunFile> source;
      if (!fetch_run_path.empty()) {
        source = irbed::formats::parse_run(irbed::read_file(fetch_run_path));
      }
      irbed::Diagnostics diag;
      auto result = platform.datasets().fetch(fetch_id, hub::resource_from_name(fetch_resource),
                                              effective_role(global, platform),
                                              source ? &*source : nullptr, fetch_depth,
                                              fetch_lenient, &diag);
      for (const auto& warning : diag.warnings) std::cerr << "warning: " << warning << "\n";
      if (std::holds_alternative<hub::Denial>(result)) {
        const auto& denial = std::get<hub::Denial>(result);
        Json error;
        error["error"]["kind"] = "denied";
        error["error"]["message"] = denial.reason;
        error["error"]["role"] = std::string(hub::role_name(denial.role));
        error["error"]["resource"] = std::string(hub::resource_name(denial.resource));
        error["error"]["liftable_by_grant"] = denial.liftable_by_grant;
        std::cerr << error.dump() << "\n";
        return 1;
      }
      fs::path path = std::get<fs::path>(result);
      if (!fetch_out.empty()) {
        fs::path target(fetch_out);
        if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
        fs::copy_file(path, target, fs::copy_options::overwrite_existing);
        path = target;
      }
      Json out;
      out["path"] = path.string();
      emit(global, out, path.string());
    } else if (comp_add->parsed()) {
      Platform platform = open_platform(global);
      std::vector<irbed::registry::NodeRef> predecessors;
      for (const auto& pred : comp_preds) {
        predecessors.push_back(irbed::registry::parse_node_ref(pred));
      }
      auto node = platform.components().add_component(
          comp_id, comp_image, comp_command, predecessors,
          irbed::registry::node_kind_from_name(comp_kind));
      Json out;
      out["id"] = node.ref.id;
      out["version"] = node.ref.version;
      emit(global, out, node.ref.to_string());
    } else if (comp_revise->parsed()) {
      Platform platform = open_platform(global);
      auto node = platform.components().revise_component(
          rev_id, rev_image.empty() ? std::nullopt : std::optional(rev_image),
          rev_command.empty() ? std::nullopt : std::optional(rev_command));
      Json out;
      out["id"] = node.ref.id;
      out["version"] = node.ref.version;
      emit(global, out, node.ref.to_string());
    } else if (comp_delete->parsed()) {
      Platform platform = open_platform(global);
      platform.delete_component({del_id, del_version});
      Json out;
      out["deleted"] = del_id + "@" + std::to_string(del_version);
      emit(global, out, "deleted " + del_id + "@" + std::to_string(del_version));
    } else if (comp_list->parsed()) {
      Platform platform = open_platform(global);
      Json out = Json::array();
      std::string human;
      for (const auto& node : platform.components().list()) {
        Json entry;
        entry["id"] = node.ref.id;
        entry["version"] = node.ref.version;
        entry["kind"] = std::string(irbed::registry::node_kind_name(node.kind));
        if (node.is_upload()) {
          entry["payload_digest"] = node.payload_digest;
        } else {
          entry["image"] = node.image_ref;
          entry["command"] = node.command;
          Json preds = Json::array();
          for (const auto& pred : node.predecessors) preds.push_back(pred.to_string());
          entry["predecessors"] = preds;
        }
        out.push_back(entry);
        human += node.ref.to_string() + "  [" +
                 std::string(irbed::registry::node_kind_name(node.kind)) + "]";
        if (!node.is_upload()) human += "  " + node.image_ref;
        human += "\n";
      }
      emit(global, out, human);
    } else if (upload_add->parsed()) {
      Platform platform = open_platform(global);
      std::vector<fs::path> files(up_files.begin(), up_files.end());
      auto node = platform.components().add_upload(up_id, files, up_description);
      Json out;
      out["id"] = node.ref.id;
      out["version"] = node.ref.version;
      out["payload_digest"] = node.payload_digest;
      emit(global, out, node.ref.to_string() + "  " + node.payload_digest.substr(0, 12));
    } else if (pipe_resolve->parsed()) {
      Platform platform = open_platform(global);
      auto pipeline_def = platform.components().resolve_pipeline(
          irbed::registry::parse_node_ref(resolve_terminal));
      Json out = Json::array();
      std::string human;
      for (const auto& ref : pipeline_def.order) {
        out.push_back(ref.to_string());
        human += ref.to_string() + "\n";
      }
      emit(global, out, human);
    } else if (pipe_run->parsed()) {
      Platform platform = open_platform(global);
      irbed::RunOptions options;
      options.approach = run_approach;
      options.rerank_depth = run_depth;
      options.lenient_rerank = run_lenient;
      options.limits.cpu_cores = run_cpu;
      options.limits.memory_bytes = run_memory;
      options.limits.timeout = std::chrono::seconds(run_timeout);
      options.auto_evaluate = !run_no_eval;
      options.measures = run_measures;
      auto result = platform.run_pipeline(run_terminal, run_dataset, options);

      Json out = report_json(result.report);
      std::string human = summarize_report(result.report);
      if (result.evaluation) {
        Json scores = irbed::eval::evaluation_json(result.evaluation->reports);
        out["evaluation"] = scores;
        for (const auto& report : result.evaluation->reports) {
          human += report.measure + " mean: " + irbed::formats::format_score(report.mean) + "\n";
        }
      }
      emit(global, out, human);
      if (!result.report.ok()) {
        Json error;
        error["error"]["kind"] = "execution";
        error["error"]["message"] = "pipeline failed";
        std::cerr << error.dump() << "\n";
        return 1;
      }
    } else if (evaluate->parsed()) {
      Platform platform = open_platform(global);
      irbed::formats::RunFile run_file;
      if (!eval_run.empty()) {
        run_file = irbed::formats::parse_run(irbed::read_file(eval_run));
      } else if (!eval_approach.empty()) {
        run_file = platform.load_recorded_run(eval_approach, eval_dataset);
      } else {
        throw Error(ErrorKind::validation, "evaluate needs --run or --approach");
      }
      irbed::eval::EvaluationOutcome outcome;
      try {
        outcome = platform.evaluate_run(run_file, eval_dataset, eval_measures);
      } catch (const irbed::eval::EvaluationRefused& refused) {
        Json error;
        error["error"]["kind"] = "sanity";
        error["error"]["message"] = "run refused by sanity check";
        error["error"]["sanity"] = irbed::eval::sanity_json(refused.report());
        std::cerr << error.dump() << "\n";
        return 1;
      }
      Json out;
      out["evaluation"] = irbed::eval::evaluation_json(outcome.reports);
      out["sanity"] = irbed::eval::sanity_json(outcome.sanity);
      std::string human;
      for (const auto& report : outcome.reports) {
        human += report.measure + " mean: " + irbed::formats::format_score(report.mean) + " over " +
                 std::to_string(report.evaluated_query_count) + " topics\n";
      }
      for (const auto& finding : outcome.sanity.findings) {
        human += std::string(irbed::eval::finding_code_name(finding.code)) + " " + finding.detail +
                 "\n";
      }
      if (!eval_out.empty()) {
        irbed::write_file(fs::path(eval_out) / "evaluation.json",
                          irbed::eval::evaluation_json(outcome.reports).dump(2) + "\n");
        irbed::write_file(fs::path(eval_out) / "sanity.json",
                          irbed::eval::sanity_json(outcome.sanity).dump(2) + "\n");
      }
      if (!eval_approach.empty()) {
        auto record = platform.run_record(eval_approach, eval_dataset);
        irbed::write_file(record.dir / "evaluation.json",
                          irbed::eval::evaluation_json(outcome.reports).dump(2) + "\n");
        irbed::write_file(record.dir / "sanity.json",
                          irbed::eval::sanity_json(outcome.sanity).dump(2) + "\n");
      }
      emit(global, out, human);
    } else if (leaderboard->parsed()) {
      Platform platform = open_platform(global);
      std::map<std::string, std::string> corpus_map;
      if (!lb_corpus_map.empty()) {
        Json mapping = Json::parse(irbed::read_file(lb_corpus_map));
        for (const auto& [task, corpus] : mapping.items()) {
          corpus_map[task] = corpus.get<std::string>();
        }
      }
      auto evaluations = platform.collect_evaluations(lb_measure);
      auto entries = irbed::analytics::build_leaderboard(evaluations, corpus_map);
      emit(global, irbed::analytics::leaderboard_json(entries),
           irbed::analytics::render_leaderboard_table(entries));
    } else if (repro->parsed()) {
      Platform platform = open_platform(global);
      auto index = platform.evaluation_index(repro_measure);
      std::vector<irbed::analytics::EvalRecord> origin_evals;
      for (const auto& record : platform.collect_evaluations(repro_measure)) {
        if (record.task == repro_origin) origin_evals.push_back(record);
      }
      auto pairs = irbed::analytics::make_preference_pairs(origin_evals);
      std::vector<irbed::analytics::ReproReport> reports;
      Json out = Json::array();
      for (const auto& target : repro_targets) {
        auto report = irbed::analytics::repro_report(pairs, repro_origin, target, index);
        out.push_back(irbed::analytics::repro_json(report));
        reports.push_back(std::move(report));
      }
      emit(global, out, irbed::analytics::render_repro_table(reports));
    } else if (arch_export->parsed()) {
      Platform platform = open_platform(global);
      irbed::archive::ExportOptions options;
      options.task_id = exp_task;
      options.include_test_data = exp_include_test_data;
      options.embed_images = exp_embed_images;
      auto manifest = irbed::archive::export_archive(platform, exp_dest, options);
      Json out;
      out["destination"] = exp_dest;
      out["task_id"] = manifest["task_id"];
      out["runs"] = manifest["runs"].size();
      out["datasets"] = manifest["datasets"].size();
      emit(global, out, "exported to " + exp_dest);
    } else if (arch_import->parsed()) {
      Platform platform = open_platform(global);
      irbed::archive::import_archive(imp_src, platform);
      auto manifest = irbed::archive::read_manifest(imp_src);
      Json out;
      out["task_id"] = manifest["task_id"];
      out["runs"] = manifest["runs"].size();
      emit(global, out, "imported task " + manifest["task_id"].get<std::string>());
    } else if (arch_replay->parsed()) {
      Platform platform = open_platform(global);
      auto result = irbed::archive::replay(platform, replay_approach, replay_dataset);
      Json out = report_json(result.report);
      std::string human = summarize_report(result.report);
      if (!result.report.ok()) {
        emit(global, out, human);
        Json error;
        error["error"]["kind"] = "execution";
        error["error"]["message"] = "replay failed";
        std::cerr << error.dump() << "\n";
        return 1;
      }
      if (replay_verify) {
        auto record = platform.run_record(replay_approach, replay_dataset);
        Json provenance = Json::parse(irbed::read_file(record.dir / "provenance.json"));
        std::string recorded = provenance.at("output_digest").get<std::string>();
        std::string produced = result.report.terminal->output_digest;
        out["recorded_digest"] = recorded;
        out["reproduced"] = (recorded == produced);
        human += "recorded:   " + recorded + "\nreproduced: " + produced + "\n";
        if (recorded != produced) {
          emit(global, out, human);
          Json error;
          error["error"]["kind"] = "digest_mismatch";
          error["error"]["message"] = "replay produced a different output digest";
          std::cerr << error.dump() << "\n";
          return 1;
        }
      }
      emit(global, out, human);
    } else if (arch_fetch->parsed()) {
      auto run_file = irbed::archive::fetch_run(fr_archive, fr_approach, fr_dataset);
      std::string text = irbed::formats::serialize_run(run_file);
      if (!fr_out.empty()) {
        irbed::write_file(fr_out, text);
        Json out;
        out["path"] = fr_out;
        out["lines"] = run_file.lines.size();
        emit(global, out, fr_out);
      } else {
        std::cout << text;
      }
    }
  } catch (const Error& e) {
    Json error;
    error["error"]["kind"] = std::string(e.kind_name());
    error["error"]["message"] = e.what();
    std::cerr << error.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    Json error;
    error["error"]["kind"] = "internal";
    error["error"]["message"] = e.what();
    std::cerr << error.dump() << "\n";
    return 1;
  }
  return 0;
}
