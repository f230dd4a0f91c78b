#include <doctest.h>

#include "irbed/io.hpp"
#include "irbed/registry.hpp"
#include "support/temp_dir.hpp"

using namespace irbed;
using namespace irbed::registry;

namespace {

struct RegistryFixture {
  test::TempDir dir;
  Registry registry{dir / "registry", dir / "uploads"};

  Node add(const std::string& id, const std::vector<std::string>& preds = {},
           const std::string& command = "run $inputDataset $outputDir",
           NodeKind kind = NodeKind::generic) {
    std::vector<NodeRef> refs;
    for (const auto& pred : preds) refs.push_back(parse_node_ref(pred));
    std::string cmd = command;
    if (!preds.empty() && command.find("$inputRun") == std::string::npos) {
      cmd += " $inputRun";
    }
    return registry.add_component(id, "img/" + id + ":1", cmd, refs, kind);
  }
};

}  // namespace

TEST_CASE("two-node sequence like the simplest full-rank pipeline") {
  RegistryFixture fx;
  fx.add("index-corpus");
  auto bm25 = fx.add("bm25", {"index-corpus"}, "retrieve $inputRun $outputDir",
                     NodeKind::full_rank);
  CHECK(bm25.ref.version == 1);
  auto pipeline = fx.registry.resolve_pipeline(parse_node_ref("bm25"));
  REQUIRE(pipeline.order.size() == 2);
  CHECK(pipeline.order[0].id == "index-corpus");
  CHECK(pipeline.order[1].id == "bm25");
}

TEST_CASE("missing predecessor is rejected at definition time") {
  RegistryFixture fx;
  try {
    fx.add("x", {"ghost"});
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_found);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    CHECK(std::string(e.what()).find("must exist when defining") != std::string::npos);
  }
}

TEST_CASE("$inputRun requires predecessors; unknown variables are rejected") {
  RegistryFixture fx;
  CHECK_THROWS_AS(
      fx.registry.add_component("solo", "img", "go $inputRun", {}, NodeKind::generic), Error);
  CHECK_THROWS_AS(
      fx.registry.add_component("solo", "img", "go $bogus", {}, NodeKind::generic), Error);
  // $$ escapes a literal dollar
  fx.registry.add_component("solo", "img", "echo $$HOME $inputDataset", {},
                            NodeKind::generic);
}

TEST_CASE("DAG node with two in-edges keeps definition order") {
  RegistryFixture fx;
  fx.add("index-corpus");
  fx.add("bm25-run", {"index-corpus"});
  std::string features = (fx.dir / "features.json").string();
  write_file(features, "{}");
  fx.registry.add_upload("query-features", {features}, "uploaded query features");

  auto ltr = fx.add("ltr", {"bm25-run", "query-features"});
  REQUIRE(ltr.predecessors.size() == 2);
  CHECK(ltr.predecessors[0].id == "bm25-run");
  CHECK(ltr.predecessors[1].id == "query-features");

  auto pipeline = fx.registry.resolve_pipeline(parse_node_ref("ltr"));
  REQUIRE(pipeline.order.size() == 4);
  CHECK(pipeline.order.back().id == "ltr");
  // bm25-run's ancestors come before it; upload before ltr
  auto position = [&](const std::string& id) {
    for (std::size_t i = 0; i < pipeline.order.size(); ++i) {
      if (pipeline.order[i].id == id) return i;
    }
    return std::size_t(99);
  };
  CHECK(position("index-corpus") < position("bm25-run"));
  CHECK(position("bm25-run") < position("ltr"));
  CHECK(position("query-features") < position("ltr"));
}

TEST_CASE("revise creates a fresh version and keeps the old one resolvable") {
  RegistryFixture fx;
  fx.add("bm25");
  auto v2 = fx.registry.revise_component("bm25", std::nullopt,
                                         std::string("retrieve --k1 0.9 $inputDataset $outputDir"));
  CHECK(v2.ref.version == 2);

  auto v1 = fx.registry.get(parse_node_ref("bm25@1"));
  CHECK(v1.command == "run $inputDataset $outputDir");
  CHECK(fx.registry.get(parse_node_ref("bm25")).ref.version == 2);

  // revising with identical content still mints a new version
  auto v3 = fx.registry.revise_component("bm25", std::nullopt,
                                         std::string("retrieve --k1 0.9 $inputDataset $outputDir"));
  CHECK(v3.ref.version == 3);
  CHECK(v3.command == v2.command);

  CHECK_THROWS_AS(fx.registry.revise_component("nonexistent", std::nullopt, std::nullopt),
                  Error);
}

TEST_CASE("predecessors pin the version current at definition time") {
  RegistryFixture fx;
  fx.add("stage1");
  auto consumer = fx.add("stage2", {"stage1"});
  CHECK(consumer.predecessors[0].version == 1);
  fx.registry.revise_component("stage1", std::nullopt, std::string("other $inputDataset"));
  // the existing reference still points at version 1
  CHECK(fx.registry.get(consumer.ref).predecessors[0].version == 1);
  // a new definition picks up the latest
  auto late = fx.add("stage3", {"stage1"});
  CHECK(late.predecessors[0].version == 2);
}

TEST_CASE("delete refuses while referenced, naming the referent") {
  RegistryFixture fx;
  fx.add("index-corpus");
  fx.add("bm25", {"index-corpus"});
  try {
    fx.registry.delete_node(parse_node_ref("index-corpus@1"));
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::conflict);
    CHECK(std::string(e.what()).find("bm25@1") != std::string::npos);
  }
  // external referents (cache entries, runs) block deletion the same way
  fx.add("leaf");
  CHECK_THROWS_AS(fx.registry.delete_node(parse_node_ref("leaf@1"), {"cache entry 123"}),
                  Error);

  // unreferenced leaves delete fine; resolution then fails not_found
  fx.registry.delete_node(parse_node_ref("bm25@1"));
  CHECK_THROWS_AS(fx.registry.resolve_pipeline(parse_node_ref("bm25")), Error);
  fx.registry.delete_node(parse_node_ref("index-corpus@1"));
  CHECK_FALSE(fx.registry.exists(parse_node_ref("index-corpus")));
}

TEST_CASE("diamond dependencies resolve each shared ancestor once") {
  RegistryFixture fx;
  fx.add("base");
  fx.add("left", {"base"});
  fx.add("right", {"base"});
  fx.add("join", {"left", "right"});
  auto pipeline = fx.registry.resolve_pipeline(parse_node_ref("join"));
  REQUIRE(pipeline.order.size() == 4);
  int base_count = 0;
  for (const auto& ref : pipeline.order) {
    if (ref.id == "base") ++base_count;
  }
  CHECK(base_count == 1);
  CHECK(pipeline.order[0].id == "base");
}

TEST_CASE("resolution is deterministic and repeatable") {
  RegistryFixture fx;
  fx.add("a");
  fx.add("b", {"a"});
  fx.add("c", {"a"});
  fx.add("d", {"b", "c"});
  auto first = fx.registry.resolve_pipeline(parse_node_ref("d"));
  auto second = fx.registry.resolve_pipeline(parse_node_ref("d"));
  CHECK(first.order == second.order);
}

TEST_CASE("immutability: stored fields never change after creation") {
  RegistryFixture fx;
  auto created = fx.add("keeper", {}, "one $inputDataset", NodeKind::full_rank);
  fx.registry.revise_component("keeper", std::string("img/other:2"), std::nullopt);
  fx.add("noise");
  auto fetched = fx.registry.get(created.ref);
  CHECK(fetched.image_ref == created.image_ref);
  CHECK(fetched.command == created.command);
  CHECK(fetched.kind == created.kind);
}

TEST_CASE("the append-only log replays to the same state") {
  test::TempDir dir;
  std::vector<Node> before;
  {
    Registry registry(dir / "registry", dir / "uploads");
    registry.add_component("a", "img/a", "go $inputDataset", {}, NodeKind::generic);
    registry.add_component("b", "img/b", "go $inputDataset $inputRun", {parse_node_ref("a")},
                           NodeKind::re_rank);
    registry.revise_component("a", std::nullopt, std::string("go2 $inputDataset"));
    registry.add_component("c", "img/c", "x $inputDataset", {}, NodeKind::generic);
    registry.delete_node(parse_node_ref("c@1"));
    before = registry.list();
  }
  Registry reopened(dir / "registry", dir / "uploads");
  auto after = reopened.list();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].ref == before[i].ref);
    CHECK(after[i].command == before[i].command);
    CHECK(after[i].image_ref == before[i].image_ref);
    CHECK(after[i].predecessors == before[i].predecessors);
  }
  CHECK_FALSE(reopened.exists(parse_node_ref("c")));
}

TEST_CASE("long histories reopen identically through the snapshot") {
  test::TempDir dir;
  std::vector<Node> before;
  {
    Registry registry(dir / "registry", dir / "uploads");
    registry.add_component("seed", "img/seed", "go $inputDataset", {}, NodeKind::generic);
    // enough churn to cross the snapshot interval several times
    for (int i = 0; i < 300; ++i) {
      registry.revise_component("seed", std::nullopt,
                                std::string("go --round " + std::to_string(i) + " $inputDataset"));
      if (i % 50 == 0) {
        registry.add_component("probe" + std::to_string(i), "img/p", "p $inputDataset", {},
                               NodeKind::generic);
      }
    }
    registry.delete_node(parse_node_ref("probe0@1"));
    before = registry.list();
  }
  CHECK(std::filesystem::exists(dir / "registry" / "snapshot.json"));
  Registry reopened(dir / "registry", dir / "uploads");
  auto after = reopened.list();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].ref == before[i].ref);
    CHECK(after[i].command == before[i].command);
  }
  CHECK(reopened.latest_version("seed") == 301);
}

TEST_CASE("uploads are source nodes with payload digests") {
  RegistryFixture fx;
  write_file(fx.dir / "payload.txt", "variant data");
  auto upload = fx.registry.add_upload("variants", {fx.dir / "payload.txt"}, "query variants");
  CHECK(upload.ref.version == 1);
  CHECK_FALSE(upload.payload_digest.empty());
  CHECK(std::filesystem::exists(upload.payload_dir / "payload.txt"));

  // a second add makes a new version, both resolvable
  write_file(fx.dir / "payload.txt", "variant data v2");
  auto second = fx.registry.add_upload("variants", {fx.dir / "payload.txt"}, "more");
  CHECK(second.ref.version == 2);
  CHECK(second.payload_digest != upload.payload_digest);
  CHECK(fx.registry.get(parse_node_ref("variants@1")).payload_digest == upload.payload_digest);

  CHECK_THROWS_AS(fx.registry.add_upload("empty", {}, ""), Error);
}
