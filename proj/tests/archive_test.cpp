#include <doctest.h>

#include "irbed/archive.hpp"
#include "irbed/digest.hpp"
#include "irbed/io.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_task.hpp"

using namespace irbed;
using formats::Json;

namespace {

struct ArchiveFixture {
  test::TempDir dir;
  Platform platform;

  ArchiveFixture()
      : platform(PlatformConfig{.store_root = dir / "store", .backend = "mock",
                                .task_id = "toy-task"}) {}

  test::ToyPipelines run_toy(bool confidential = false) {
    test::register_toy_dataset(platform, "toy", dir.path(), confidential);
    auto toy = test::define_toy_pipelines(platform, dir.path());
    REQUIRE(platform.run_pipeline(toy.ranker, "toy").report.ok());
    REQUIRE(platform.run_pipeline(toy.reranker, "toy").report.ok());
    return toy;
  }

  Platform fresh_platform(const std::string& name) {
    return Platform(PlatformConfig{.store_root = dir / name, .backend = "mock"});
  }
};

Json strip_created_at(Json manifest) {
  manifest.erase("created_at");
  return manifest;
}

}  // namespace

TEST_CASE("export requires at least one run") {
  ArchiveFixture fx;
  CHECK_THROWS_AS(archive::export_archive(fx.platform, fx.dir / "arch"), Error);
}

TEST_CASE("export / import round trip reproduces every query") {
  ArchiveFixture fx;
  fx.run_toy();
  auto manifest = archive::export_archive(fx.platform, fx.dir / "arch");
  CHECK(manifest["task_id"] == "toy-task");
  CHECK(manifest["runs"].size() == 2);

  auto leaderboard_of = [](Platform& platform) {
    auto evals = platform.collect_evaluations("ndcg@10");
    return analytics::leaderboard_json(analytics::build_leaderboard(evals, {})).dump();
  };
  std::string original_leaderboard = leaderboard_of(fx.platform);

  Platform imported = fx.fresh_platform("store2");
  archive::import_archive(fx.dir / "arch", imported);
  CHECK(leaderboard_of(imported) == original_leaderboard);

  // repro reports agree as well
  auto repro_of = [](Platform& platform) {
    auto evals = platform.collect_evaluations("ndcg@10");
    std::vector<analytics::EvalRecord> origin;
    for (const auto& record : evals) {
      if (record.task == "toy") origin.push_back(record);
    }
    auto pairs = analytics::make_preference_pairs(origin);
    return analytics::repro_json(
               analytics::repro_report(pairs, "toy", "toy", platform.evaluation_index("ndcg@10")))
        .dump();
  };
  CHECK(repro_of(imported) == repro_of(fx.platform));

  // datasets and components came along
  CHECK(imported.datasets().exists("toy"));
  CHECK(imported.components().exists(registry::parse_node_ref("toy-ranker")));
}

TEST_CASE("re-export is byte-identical apart from created_at") {
  ArchiveFixture fx;
  fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch1");
  archive::export_archive(fx.platform, fx.dir / "arch2");

  auto m1 = archive::read_manifest(fx.dir / "arch1");
  auto m2 = archive::read_manifest(fx.dir / "arch2");
  CHECK(strip_created_at(m1) == strip_created_at(m2));

  // every other file is byte-identical
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(fx.dir / "arch1")) {
    if (!entry.is_regular_file()) continue;
    auto rel = std::filesystem::relative(entry.path(), fx.dir / "arch1");
    if (rel == "manifest.json") continue;
    CHECK(read_file(entry.path()) == read_file(fx.dir / "arch2" / rel));
  }
}

TEST_CASE("export -> import -> export is manifest-stable") {
  ArchiveFixture fx;
  fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch1");
  Platform imported = fx.fresh_platform("store2");
  archive::import_archive(fx.dir / "arch1", imported);
  archive::export_archive(imported, fx.dir / "arch2",
                          archive::ExportOptions{.task_id = "toy-task"});
  CHECK(strip_created_at(archive::read_manifest(fx.dir / "arch1")) ==
        strip_created_at(archive::read_manifest(fx.dir / "arch2")));
}

TEST_CASE("confidential datasets export without content by default") {
  ArchiveFixture fx;
  fx.run_toy(/*confidential=*/true);
  auto manifest = archive::export_archive(fx.platform, fx.dir / "arch");

  CHECK_FALSE(std::filesystem::exists(fx.dir / "arch" / "datasets/toy/documents.jsonl.gz"));
  CHECK(std::filesystem::exists(fx.dir / "arch" / "datasets/toy/documents.jsonl.gz.withheld"));
  CHECK_FALSE(std::filesystem::exists(fx.dir / "arch" / "datasets/toy/qrels.txt"));
  // run files are withheld too: blind datasets publish scores only
  CHECK_FALSE(
      std::filesystem::exists(fx.dir / "arch" / "runs/toy-ranker/toy/run.txt"));
  CHECK(std::filesystem::exists(fx.dir / "arch" / "runs/toy-ranker/toy/evaluation.json"));

  for (const auto& dataset : manifest["datasets"]) {
    CHECK(dataset["content_included"] == false);
  }

  SUBCASE("no document text or qrel line appears anywhere in the archive") {
    auto corpus = test::make_toy_corpus();
    std::vector<std::string> needles;
    for (const auto& doc : corpus.documents) needles.push_back(doc.text);
    for (const auto& qrel : corpus.qrels) {
      needles.push_back(qrel.topic + " " + qrel.iteration + " " + qrel.docno + " " +
                        std::to_string(qrel.relevance));
    }
    for (const auto& entry :
         std::filesystem::recursive_directory_iterator(fx.dir / "arch")) {
      if (!entry.is_regular_file()) continue;
      std::string content = read_file(entry.path());
      if (is_gzip(content)) content += gzip_decompress(content);
      for (const auto& needle : needles) {
        REQUIRE(content.find(needle) == std::string::npos);
      }
    }
  }

  SUBCASE("withheld data blocks replay and fetch_run after import") {
    Platform imported = fx.fresh_platform("store2");
    archive::import_archive(fx.dir / "arch", imported);
    // scores still answer queries
    CHECK_FALSE(imported.collect_evaluations("ndcg@10").empty());
    try {
      archive::replay(imported, "toy-ranker", "toy");
      FAIL("expected withheld error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::withheld);
      CHECK(std::string(e.what()).find("withheld") != std::string::npos);
    }
    CHECK_THROWS_AS(archive::fetch_run(fx.dir / "arch", "toy-ranker", "toy"), Error);
  }

  SUBCASE("an organizer export with test data embeds everything") {
    archive::export_archive(fx.platform, fx.dir / "arch-full",
                            archive::ExportOptions{.include_test_data = true});
    CHECK(std::filesystem::exists(fx.dir / "arch-full" / "datasets/toy/documents.jsonl.gz"));
    CHECK(std::filesystem::exists(fx.dir / "arch-full" / "runs/toy-ranker/toy/run.txt"));
  }
}

TEST_CASE("tampered archives are refused naming the corrupted file") {
  ArchiveFixture fx;
  fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch");
  // flip a byte in a run file
  auto victim = fx.dir / "arch" / "runs/toy-ranker/toy/run.txt";
  std::string content = read_file(victim);
  content[0] = content[0] == 'X' ? 'Y' : 'X';
  write_file(victim, content);

  Platform imported = fx.fresh_platform("store2");
  try {
    archive::import_archive(fx.dir / "arch", imported);
    FAIL("expected digest mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::digest_mismatch);
    CHECK(std::string(e.what()).find("runs/toy-ranker/toy/run.txt") != std::string::npos);
  }
}

TEST_CASE("import refuses a non-empty store") {
  ArchiveFixture fx;
  fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch");
  CHECK_THROWS_AS(archive::import_archive(fx.dir / "arch", fx.platform), Error);
}

TEST_CASE("export aborts when a recorded cache entry is gone") {
  ArchiveFixture fx;
  fx.run_toy();
  // wipe the cache out from under the recorded runs
  make_tree_writable(fx.platform.store_root() / "cache");
  std::filesystem::remove_all(fx.platform.store_root() / "cache");
  try {
    archive::export_archive(fx.platform, fx.dir / "arch");
    FAIL("expected abort");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cache entries missing") != std::string::npos);
  }
}

TEST_CASE("replay reproduces the recorded digest on the original dataset") {
  ArchiveFixture fx;
  auto toy = fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch");

  Platform imported = fx.fresh_platform("store2");
  archive::import_archive(fx.dir / "arch", imported);
  auto result = archive::replay(imported, "toy-ranker", "toy");
  REQUIRE(result.report.ok());

  auto record = imported.run_record("toy-ranker", "toy");
  Json provenance = Json::parse(read_file(record.dir / "provenance.json"));
  CHECK(result.report.terminal->output_digest == provenance["output_digest"]);

  SUBCASE("replay on a different dataset makes a fresh cache entry") {
    test::register_toy_dataset(imported, "toy-b", fx.dir.path(), false, /*seed=*/1234);
    auto other = archive::replay(imported, "toy-ranker", "toy-b");
    REQUIRE(other.report.ok());
    CHECK(other.report.terminal->key.digest != result.report.terminal->key.digest);
  }
}

TEST_CASE("embed-images is an OCI-backend feature and says so on mock") {
  ArchiveFixture fx;
  fx.run_toy();
  try {
    archive::export_archive(fx.platform, fx.dir / "arch",
                            archive::ExportOptions{.embed_images = true});
    FAIL("expected unsupported");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
  // the default export carries image references only
  archive::export_archive(fx.platform, fx.dir / "arch");
  auto manifest = archive::read_manifest(fx.dir / "arch");
  CHECK(manifest["images"].empty());
  bool ranker_ref_present = false;
  for (const auto& component : manifest["components"]) {
    if (component.contains("image") && component["image"] == "fixture/overlap-ranker:1") {
      ranker_ref_present = true;
    }
  }
  CHECK(ranker_ref_present);
}

TEST_CASE("fetch_run reads runs straight from the archive") {
  ArchiveFixture fx;
  fx.run_toy();
  archive::export_archive(fx.platform, fx.dir / "arch");

  auto run = archive::fetch_run(fx.dir / "arch", "toy-ranker", "toy");
  CHECK(run.tag == "toy-ranker");
  CHECK_FALSE(run.lines.empty());

  try {
    archive::fetch_run(fx.dir / "arch", "nonexistent", "toy");
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_found);
  }
}
