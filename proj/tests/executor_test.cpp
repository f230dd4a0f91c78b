#include <doctest.h>

#include <thread>

#include "irbed/digest.hpp"
#include "irbed/executor.hpp"
#include "irbed/io.hpp"
#include "irbed/oci_backend.hpp"
#include "irbed/platform.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_task.hpp"

using namespace irbed;
using namespace irbed::exec;

namespace {

struct PlatformFixture {
  test::TempDir dir;
  Platform platform;

  explicit PlatformFixture(int parallelism = 2)
      : platform(PlatformConfig{.store_root = dir / "store",
                                .backend = "mock",
                                .parallelism = parallelism}) {}

  void with_toy_dataset(const std::string& id = "toy") {
    test::register_toy_dataset(platform, id, dir.path());
  }

  registry::Node add(const std::string& id, const std::string& image, const std::string& command,
                     const std::vector<std::string>& preds = {},
                     registry::NodeKind kind = registry::NodeKind::generic) {
    std::vector<registry::NodeRef> refs;
    for (const auto& pred : preds) refs.push_back(registry::parse_node_ref(pred));
    return platform.components().add_component(id, image, command, refs, kind);
  }

  int launches() const {
    return const_cast<Platform&>(platform).backend().launch_count();
  }
};

}  // namespace

TEST_CASE("resolve_command substitutes variables and mirrors them as env") {
  auto resolved = resolve_command("run.sh --in $inputDataset --out $outputDir", "/mnt/input",
                                  "/mnt/output", std::nullopt);
  CHECK(resolved.command == "run.sh --in /mnt/input --out /mnt/output");
  CHECK(resolved.env.at("inputDataset") == "/mnt/input");
  CHECK(resolved.env.at("outputDir") == "/mnt/output");
  CHECK(resolved.env.count("inputRun") == 0);

  auto with_run = resolve_command("x ${inputRun}/1", "/i", "/o", std::string("/mnt/run"));
  CHECK(with_run.command == "x /mnt/run/1");
  CHECK(with_run.env.at("inputRun") == "/mnt/run");

  auto escaped = resolve_command("echo $$PATH $inputDataset", "/i", "/o", std::nullopt);
  CHECK(escaped.command == "echo $PATH /i");

  CHECK_THROWS_AS(resolve_command("x $bogus", "/i", "/o", std::nullopt), Error);
  CHECK_THROWS_AS(resolve_command("x $inputRun", "/i", "/o", std::nullopt), Error);
}

TEST_CASE("cache keys are deterministic and change with every constituent") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto node = fx.add("idx", "fixture/indexer:1", "index $inputDataset $outputDir");

  auto& executor = fx.platform.executor();
  std::string input_digest = fx.platform.datasets().input_digest("toy");
  auto key = executor.node_key(node, input_digest, {});
  CHECK(key == executor.node_key(node, input_digest, {}));

  // new version, new key
  auto revised = fx.platform.components().revise_component(
      "idx", std::nullopt, std::string("index --fast $inputDataset $outputDir"));
  CHECK_FALSE(key == executor.node_key(revised, input_digest, {}));

  // different dataset content, different key
  CHECK_FALSE(key == executor.node_key(node, "other-digest", {}));

  // different image, different key
  auto other_image = fx.platform.components().revise_component(
      "idx", std::string("fixture/overlap-ranker:1"), std::nullopt);
  other_image.command = node.command;
  other_image.ref = node.ref;  // isolate the image as the only change
  CHECK_FALSE(key == executor.node_key(other_image, input_digest, {}));

  // predecessor output digests enter the key
  CHECK_FALSE(key == executor.node_key(node, input_digest, {"abc"}));
}

TEST_CASE("pipeline executes, caches, and reuses shared stages") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());

  auto first = fx.platform.run_pipeline(toy.ranker, "toy");
  REQUIRE(first.report.ok());
  CHECK(fx.launches() == 2);  // indexer + ranker
  REQUIRE(first.run.has_value());
  CHECK_FALSE(first.run->lines.empty());

  // identical request: zero new launches, same terminal digest
  auto second = fx.platform.run_pipeline(toy.ranker, "toy");
  REQUIRE(second.report.ok());
  CHECK(fx.launches() == 2);
  CHECK(second.report.terminal->output_digest == first.report.terminal->output_digest);
  for (const auto& status : second.report.nodes) {
    CHECK(status.state == NodeState::cached);
  }

  // a re-ranker after the shared stage launches exactly one container
  auto third = fx.platform.run_pipeline(toy.reranker, "toy");
  REQUIRE(third.report.ok());
  CHECK(fx.launches() == 3);
}

TEST_CASE("upload outputs and multi-predecessor run layout") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());

  // the combiner takes [ranker run, uploaded features] via $inputRun/1, /2
  auto result = fx.platform.run_pipeline(toy.combiner, "toy");
  REQUIRE(result.report.ok());
  REQUIRE(result.run.has_value());
  CHECK(result.run->tag == "toy-combiner");

  // inspect the layout with the listing fixture
  fx.add("listing", "fixture/run-dir-list:1", "ls $inputRun $outputDir",
         {toy.ranker, toy.features_upload});
  auto listing = fx.platform.run_pipeline("listing", "toy");
  REQUIRE(listing.report.ok());
  auto parsed = formats::Json::parse(
      read_file(listing.report.terminal->output_path / "listing.json"));
  REQUIRE(parsed["entries"].size() == 2);
  CHECK(parsed["entries"][0] == "1");
  CHECK(parsed["entries"][1] == "2");
  // ordinal 1 is the ranker output, ordinal 2 the upload payload
  bool ranker_first = false, features_second = false;
  for (const auto& name : parsed["children"]["1"]) {
    if (name == "run.txt") ranker_first = true;
  }
  for (const auto& name : parsed["children"]["2"]) {
    if (name == "features.json") features_second = true;
  }
  CHECK(ranker_first);
  CHECK(features_second);
}

TEST_CASE("single predecessor mounts its output directly at $inputRun") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  fx.add("idx", "fixture/indexer:1", "index $inputDataset $outputDir");
  fx.add("listing", "fixture/run-dir-list:1", "ls $inputRun $outputDir", {"idx"});
  auto result = fx.platform.run_pipeline("listing", "toy");
  REQUIRE(result.report.ok());
  auto parsed = formats::Json::parse(
      read_file(result.report.terminal->output_path / "listing.json"));
  // no ordinal indirection: the index files are at the top level
  bool saw_index = false;
  for (const auto& name : parsed["entries"]) {
    if (name == "index.json") saw_index = true;
  }
  CHECK(saw_index);
}

TEST_CASE("environment variables reach the sandbox") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  fx.add("envdump", "fixture/env-dump:1", "dump");
  auto result = fx.platform.run_pipeline("envdump", "toy");
  REQUIRE(result.report.ok());
  auto env = formats::Json::parse(read_file(result.report.terminal->output_path / "env.json"));
  CHECK(env["inputDataset"] == "/mnt/input");
  CHECK(env["outputDir"] == "/mnt/output");
  CHECK(env.contains("inputRun") == false);
}

TEST_CASE("failures: nonzero exit, empty retrieval output, timeout") {
  PlatformFixture fx;
  fx.with_toy_dataset();

  SUBCASE("nonzero exit captures logs") {
    fx.add("broken", "fixture/crash:1", "boom");
    auto result = fx.platform.run_pipeline("broken", "toy");
    CHECK_FALSE(result.report.ok());
    const auto* status = result.report.status_of(registry::parse_node_ref("broken@1"));
    REQUIRE(status != nullptr);
    CHECK(status->state == NodeState::failed);
    CHECK(status->message.find("exit code 3") != std::string::npos);
    // stderr was captured into the cache logs
    auto logs = fx.platform.cache().entry_dir(status->key) / "logs" / "stderr";
    CHECK(read_file(logs).find("synthetic failure") != std::string::npos);
  }

  SUBCASE("a retrieval node with an empty output dir fails verification") {
    fx.add("empty", "fixture/empty-output:1", "noop", {}, registry::NodeKind::full_rank);
    auto result = fx.platform.run_pipeline("empty", "toy");
    CHECK_FALSE(result.report.ok());
    const auto* status = result.report.status_of(registry::parse_node_ref("empty@1"));
    CHECK(status->message.find("empty output") != std::string::npos);
  }

  SUBCASE("a generic node may produce anything, even nothing") {
    fx.add("empty-ok", "fixture/empty-output:1", "noop");
    auto result = fx.platform.run_pipeline("empty-ok", "toy");
    CHECK(result.report.ok());
  }

  SUBCASE("timeout kills the node and fails the run") {
    fx.add("slow", "fixture/sleeper:1", "sleep --ms 5000");
    RunOptions options;
    options.limits.timeout = std::chrono::seconds(1);
    auto result = fx.platform.run_pipeline("slow", "toy", options);
    CHECK_FALSE(result.report.ok());
    const auto* status = result.report.status_of(registry::parse_node_ref("slow@1"));
    CHECK(status->state == NodeState::failed);
    CHECK(status->message.find("timed out") != std::string::npos);
  }

  SUBCASE("failed nodes skip their dependents") {
    fx.add("broken", "fixture/crash:1", "boom");
    fx.add("after", "fixture/env-dump:1", "dump", {"broken"});
    auto result = fx.platform.run_pipeline("after", "toy");
    CHECK_FALSE(result.report.ok());
    const auto* status = result.report.status_of(registry::parse_node_ref("after@1"));
    CHECK(status->state == NodeState::skipped);
  }
}

TEST_CASE("isolation: writes, reads, and network attempts all fail closed") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  // populate the staging area first, then freeze both digests
  fx.add("warmup", "fixture/env-dump:1", "dump");
  REQUIRE(fx.platform.run_pipeline("warmup", "toy").report.ok());
  std::string datasets_before = fx.platform.dataset_store_digest();
  std::string stage_before = tree_digest(fx.platform.store_root() / "stage");

  auto check_violation = [&](const std::string& id, const std::string& image,
                             const std::string& needle) {
    fx.add(id, image, "probe");
    auto result = fx.platform.run_pipeline(id, "toy");
    CHECK_FALSE(result.report.ok());
    const auto* status = result.report.status_of(registry::parse_node_ref(id + "@1"));
    REQUIRE(status != nullptr);
    CHECK(status->state == NodeState::failed);
    REQUIRE_FALSE(status->violations.empty());
    CHECK(status->violations[0].find(needle) != std::string::npos);
  };

  check_violation("writer", "fixture/input-writer:1", "read-only mount");
  check_violation("caller", "fixture/net-probe:1", "network is disabled");
  check_violation("reader", "fixture/outside-reader:1", "outside mounts");

  // the dataset store and the staged inputs are untouched
  CHECK(fx.platform.dataset_store_digest() == datasets_before);
  CHECK(tree_digest(fx.platform.store_root() / "stage") == stage_before);
}

TEST_CASE("schedule: independent nodes overlap, dependents wait for sealing") {
  PlatformFixture fx(/*parallelism=*/2);
  fx.with_toy_dataset();
  // both barrier nodes must be in flight at once for either to succeed
  fx.add("left", "fixture/barrier-pair:1", "meet --tag left");
  fx.add("right", "fixture/barrier-pair:1", "meet --tag right");
  fx.add("join", "fixture/env-dump:1", "dump", {"left", "right"});
  auto result = fx.platform.run_pipeline("join", "toy");
  REQUIRE(result.report.ok());
  CHECK(result.report.status_of(registry::parse_node_ref("left@1"))->state ==
        NodeState::executed);
  CHECK(result.report.status_of(registry::parse_node_ref("right@1"))->state ==
        NodeState::executed);
}

TEST_CASE("at-most-once: concurrent executions share one container per node") {
  PlatformFixture fx(/*parallelism=*/4);
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());

  std::vector<std::thread> threads;
  std::vector<exec::ExecutionReport> reports(4);
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&fx, &toy, &reports, i] {
      RunOptions options;
      options.auto_evaluate = false;
      reports[static_cast<std::size_t>(i)] =
          fx.platform.run_pipeline(toy.ranker, "toy", options).report;
    });
  }
  for (auto& thread : threads) thread.join();

  for (const auto& report : reports) {
    REQUIRE(report.ok());
    CHECK(report.terminal->output_digest == reports[0].terminal->output_digest);
  }
  CHECK(fx.launches() == 2);  // indexer and ranker ran exactly once in total
}

TEST_CASE("re-rank depth bounds the materialized input and enters the cache key") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());

  RunOptions shallow;
  shallow.rerank_depth = 2;
  shallow.auto_evaluate = false;
  auto cut = fx.platform.run_pipeline(toy.reranker, "toy", shallow);
  REQUIRE(cut.report.ok());
  std::map<std::string, int> per_qid;
  for (const auto& line : cut.run->lines) per_qid[line.qid]++;
  for (const auto& [qid, count] : per_qid) {
    CHECK(count <= 2);
  }

  RunOptions deep;
  deep.rerank_depth = 100;
  deep.auto_evaluate = false;
  auto full = fx.platform.run_pipeline(toy.reranker, "toy", deep);
  REQUIRE(full.report.ok());
  CHECK(full.report.terminal->key.digest != cut.report.terminal->key.digest);
  CHECK(full.run->lines.size() > cut.run->lines.size());
}

TEST_CASE("nondeterministic components are cached by inputs, not outputs") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  fx.add("noise", "fixture/nondet:1", "emit");
  auto first = fx.platform.run_pipeline("noise", "toy");
  auto second = fx.platform.run_pipeline("noise", "toy");
  REQUIRE(first.report.ok());
  REQUIRE(second.report.ok());
  CHECK(first.report.terminal->output_digest == second.report.terminal->output_digest);
  CHECK(fx.launches() == 1);
}

TEST_CASE("cache soundness: a clean store reproduces the same output digest") {
  std::string first_digest, second_digest;
  {
    PlatformFixture fx;
    fx.with_toy_dataset();
    auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());
    first_digest = fx.platform.run_pipeline(toy.ranker, "toy").report.terminal->output_digest;
  }
  {
    PlatformFixture fx;
    fx.with_toy_dataset();
    auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());
    second_digest = fx.platform.run_pipeline(toy.ranker, "toy").report.terminal->output_digest;
  }
  CHECK(first_digest == second_digest);
}

TEST_CASE("provenance records the full causal chain") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());
  auto result = fx.platform.run_pipeline(toy.ranker, "toy");
  REQUIRE(result.report.ok());

  const auto& provenance = result.report.terminal->provenance;
  CHECK(provenance["node"]["id"] == toy.ranker);
  CHECK(provenance["node"]["version"] == 1);
  CHECK(provenance["image_ref"] == "fixture/overlap-ranker:1");
  CHECK(provenance["image_digest"] ==
        fx.platform.backend().image_digest("fixture/overlap-ranker:1"));
  CHECK(provenance["dataset"]["id"] == "toy");
  CHECK(provenance["dataset"]["input_digest"] ==
        fx.platform.datasets().input_digest("toy"));
  REQUIRE(provenance["predecessors"].size() == 1);
  CHECK(provenance["predecessors"][0]["id"] == toy.indexer);
  CHECK(provenance["cache_key"] == result.report.terminal->key.digest);
  CHECK_FALSE(provenance["started_at"].get<std::string>().empty());
  CHECK(provenance.contains("wall_ms"));
  CHECK(provenance["exit_code"] == 0);

  // sealed outputs are read-only on disk
  auto output_file = result.report.terminal->output_path / "run.txt";
  auto perms = std::filesystem::status(output_file).permissions();
  CHECK((perms & std::filesystem::perms::owner_write) == std::filesystem::perms::none);
}

TEST_CASE("verify_output tolerates extra files next to a valid run") {
  test::TempDir dir;
  write_file(dir / "out" / "run.txt", "q1 Q0 d1 1 2.0 t\n");
  write_file(dir / "out" / "debug.log", "scratch");
  auto found = Executor::find_run_file(dir / "out");
  REQUIRE(found.has_value());
  CHECK(found->filename() == "run.txt");
}

TEST_CASE("unavailable images surface an actionable error") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  fx.add("mystery", "fixture/not-a-thing:9", "go");
  auto result = fx.platform.run_pipeline("mystery", "toy");
  CHECK_FALSE(result.report.ok());
  const auto* status = result.report.status_of(registry::parse_node_ref("mystery@1"));
  CHECK(status->message.find("fixture/not-a-thing:9") != std::string::npos);
}

TEST_CASE("components stay undeletable while cache entries or runs reference them") {
  PlatformFixture fx;
  fx.with_toy_dataset();
  auto toy = test::define_toy_pipelines(fx.platform, fx.dir.path());
  REQUIRE(fx.platform.run_pipeline(toy.ranker, "toy").report.ok());

  // the indexer is referenced by the ranker definition, cache entries, and
  // the recorded run
  try {
    fx.platform.delete_component(registry::parse_node_ref(toy.indexer + "@1"));
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::conflict);
    CHECK(std::string(e.what()).find("cache entry") != std::string::npos);
  }

  // a never-run leaf deletes fine
  fx.add("scratch", "fixture/env-dump:1", "dump");
  fx.platform.delete_component(registry::parse_node_ref("scratch@1"));
  CHECK_FALSE(fx.platform.components().exists(registry::parse_node_ref("scratch")));
}

TEST_CASE("oci backend builds the locked-down invocation") {
  sandbox::SandboxSpec spec;
  spec.image_ref = "example/ranker:3";
  spec.command = "run.sh --in /mnt/input";
  spec.env = {{"inputDataset", "/mnt/input"}, {"outputDir", "/mnt/output"}};
  spec.mounts = {{"/host/in", "/mnt/input", false}, {"/host/out", "/mnt/output", true}};
  spec.limits.cpu_cores = 1.0;
  spec.limits.memory_bytes = 10ull << 30;

  auto argv = sandbox::OciBackend::build_argv("docker", spec, "job-1");
  std::vector<std::string> expected{
      "docker", "run", "--rm", "--name", "job-1", "--network", "none",
      "--cpus", "1", "--memory", std::to_string(10ull << 30),
      "-v", "/host/in:/mnt/input:ro", "-v", "/host/out:/mnt/output:rw",
      "-e", "inputDataset=/mnt/input", "-e", "outputDir=/mnt/output",
      "example/ranker:3", "/bin/sh", "-c", "run.sh --in /mnt/input"};
  CHECK(argv == expected);
}
