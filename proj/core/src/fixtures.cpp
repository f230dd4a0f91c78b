#include <algorithm>
#include <atomic>
#include <map>
#include <set>
#include <thread>

#include "irbed/formats.hpp"
#include "irbed/sandbox.hpp"

// Bundled fixture "images" for the mock backend. Every fixture is fully
// deterministic: identical inputs produce byte-identical outputs, which is
// what the cache-soundness and replay checks rely on.

namespace irbed::sandbox {

namespace {

using formats::Json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(std::exchange(current, {}));
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

std::set<std::string> distinct_tokens(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

std::string arg_value(const std::vector<std::string>& args, const std::string& flag,
                      const std::string& fallback) {
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == flag) return args[i + 1];
  }
  return fallback;
}

// Builds a token index over the corpus: index.json maps docno to its
// distinct sorted tokens, stats.json carries corpus counts.
int fixture_indexer(SandboxContext& ctx, const std::vector<std::string>&) {
  const std::string in = ctx.env().at("inputDataset");
  const std::string out = ctx.env().at("outputDir");
  auto documents = formats::parse_documents(ctx.read_file(in + "/documents.jsonl.gz"), true);

  Json index = Json::object();
  std::size_t total_tokens = 0;
  for (const auto& doc : documents) {
    auto tokens = distinct_tokens(doc.text);
    index[doc.docno] = std::vector<std::string>(tokens.begin(), tokens.end());
    total_tokens += tokens.size();
  }
  Json stats;
  stats["doc_count"] = documents.size();
  stats["distinct_token_total"] = total_tokens;

  ctx.write_file(out + "/index.json", index.dump());
  ctx.write_file(out + "/stats.json", stats.dump());
  ctx.out << "indexed " << documents.size() << " documents\n";
  return 0;
}

// Term-overlap ranker: score(q, d) = number of distinct query tokens that
// occur in d. Reads the index produced by fixture/indexer via $inputRun.
int fixture_overlap_ranker(SandboxContext& ctx, const std::vector<std::string>& args) {
  const std::string in = ctx.env().at("inputDataset");
  const std::string run_dir = ctx.env().at("inputRun");
  const std::string out = ctx.env().at("outputDir");
  const auto top = static_cast<std::size_t>(std::stoul(arg_value(args, "--top", "100")));
  const std::string tag = arg_value(args, "--tag", "overlap");

  auto topics = formats::parse_topics(ctx.read_file(in + "/topics.jsonl.gz"), true);
  Json index = Json::parse(ctx.read_file(run_dir + "/index.json"));

  formats::RunFile run;
  run.tag = tag;
  for (const auto& topic : topics) {
    auto query_tokens = distinct_tokens(topic.query);
    std::vector<std::pair<std::string, std::int64_t>> scored;
    for (const auto& [docno, tokens] : index.items()) {
      std::int64_t overlap = 0;
      for (const auto& token : tokens) {
        if (query_tokens.count(token.get<std::string>())) ++overlap;
      }
      if (overlap > 0) scored.emplace_back(docno, overlap);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (scored.size() > top) scored.resize(top);
    std::int64_t rank = 0;
    for (const auto& [docno, score] : scored) {
      run.lines.push_back(formats::make_run_line(topic.qid, docno, ++rank,
                                                 static_cast<double>(score), tag));
    }
  }
  ctx.write_file(out + "/run.txt", formats::serialize_run(run));
  ctx.out << "ranked " << topics.size() << " topics\n";
  return 0;
}

// Re-ranker that demotes long documents: score' = 1000 * score - |text|.
// All quantities are integers, so output bytes are exactly reproducible.
int fixture_length_penalty(SandboxContext& ctx, const std::vector<std::string>& args) {
  const std::string in = ctx.env().at("inputDataset");
  const std::string out = ctx.env().at("outputDir");
  const std::string tag = arg_value(args, "--tag", "length-penalty");

  auto entries = formats::parse_rerank(ctx.read_file(in + "/re-rank.jsonl.gz"), true);

  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<const formats::RerankEntry*>> grouped;
  for (const auto& entry : entries) {
    if (grouped.find(entry.qid) == grouped.end()) qid_order.push_back(entry.qid);
    grouped[entry.qid].push_back(&entry);
  }

  formats::RunFile run;
  run.tag = tag;
  for (const auto& qid : qid_order) {
    auto group = grouped[qid];
    std::vector<std::pair<std::string, double>> scored;
    for (const auto* entry : group) {
      scored.emplace_back(entry->docno,
                          1000.0 * entry->score - static_cast<double>(entry->text.size()));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::int64_t rank = 0;
    for (const auto& [docno, score] : scored) {
      run.lines.push_back(formats::make_run_line(qid, docno, ++rank, score, tag));
    }
  }
  ctx.write_file(out + "/run.txt", formats::serialize_run(run));
  return 0;
}

// Learning-to-rank stand-in: combines the previous stage's scores with
// per-(qid, docno) bonuses from an uploaded features.json, which arrives
// as the second predecessor via $inputRun/2.
int fixture_ltr(SandboxContext& ctx, const std::vector<std::string>& args) {
  const std::string in = ctx.env().at("inputDataset");
  const std::string run_dir = ctx.env().at("inputRun");
  const std::string out = ctx.env().at("outputDir");
  const std::string tag = arg_value(args, "--tag", "ltr");

  auto entries = formats::parse_rerank(ctx.read_file(in + "/re-rank.jsonl.gz"), true);
  Json features = Json::parse(ctx.read_file(run_dir + "/2/features.json"));

  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<const formats::RerankEntry*>> grouped;
  for (const auto& entry : entries) {
    if (grouped.find(entry.qid) == grouped.end()) qid_order.push_back(entry.qid);
    grouped[entry.qid].push_back(&entry);
  }

  formats::RunFile run;
  run.tag = tag;
  for (const auto& qid : qid_order) {
    std::vector<std::pair<std::string, double>> scored;
    for (const auto* entry : grouped[qid]) {
      double bonus = 0.0;
      if (features.contains(qid) && features[qid].contains(entry->docno)) {
        bonus = features[qid][entry->docno].get<double>();
      }
      scored.emplace_back(entry->docno, 100.0 * entry->score + bonus);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::int64_t rank = 0;
    for (const auto& [docno, score] : scored) {
      run.lines.push_back(formats::make_run_line(qid, docno, ++rank, score, tag));
    }
  }
  ctx.write_file(out + "/run.txt", formats::serialize_run(run));
  return 0;
}

int fixture_net_probe(SandboxContext& ctx, const std::vector<std::string>&) {
  ctx.out << "attempting outbound connection\n";
  try {
    ctx.connect("example.org", 443);
  } catch (const Error& e) {
    // the component sees an ordinary connection error
    ctx.err << "connection failed: " << e.what() << "\n";
    return 7;
  }
  ctx.out << "connected\n";
  return 0;
}

int fixture_input_writer(SandboxContext& ctx, const std::vector<std::string>&) {
  const std::string in = ctx.env().at("inputDataset");
  ctx.out << "attempting to write into the input dataset\n";
  ctx.write_file(in + "/tampered.txt", "tampered");
  return 0;
}

int fixture_outside_reader(SandboxContext& ctx, const std::vector<std::string>&) {
  ctx.out << "attempting to read outside the mounts\n";
  ctx.read_file("/etc/passwd");
  return 0;
}

int fixture_empty_output(SandboxContext& ctx, const std::vector<std::string>&) {
  ctx.out << "producing no output\n";
  return 0;
}

int fixture_crash(SandboxContext& ctx, const std::vector<std::string>&) {
  ctx.err << "synthetic failure\n";
  return 3;
}

int fixture_sleeper(SandboxContext& ctx, const std::vector<std::string>& args) {
  auto total_ms = std::stol(arg_value(args, "--ms", "100"));
  const std::string out = ctx.env().at("outputDir");
  long slept = 0;
  while (slept < total_ms) {
    if (ctx.cancelled()) return 1;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    slept += 5;
  }
  ctx.write_file(out + "/done.txt", "slept " + std::to_string(total_ms) + "ms");
  return 0;
}

// Writes the environment the sandbox exposes; used to test variable
// injection end to end.
int fixture_env_dump(SandboxContext& ctx, const std::vector<std::string>&) {
  Json env = Json::object();
  for (const auto& [key, value] : ctx.env()) env[key] = value;
  ctx.write_file(ctx.env().at("outputDir") + "/env.json", env.dump());
  return 0;
}

// Writes the directory listing of $inputRun; used to test the ordinal
// layout of multiple predecessor outputs.
int fixture_run_dir_list(SandboxContext& ctx, const std::vector<std::string>&) {
  Json listing = Json::object();
  const std::string run_dir = ctx.env().at("inputRun");
  auto top = ctx.list_dir(run_dir);
  listing["entries"] = top;
  for (const auto& name : top) {
    listing["children"][name] = ctx.list_dir(run_dir + "/" + name);
  }
  ctx.write_file(ctx.env().at("outputDir") + "/listing.json", listing.dump());
  return 0;
}

// Each instance writes something nondeterministic; demonstrates that the
// cache key is over inputs, not outputs.
int fixture_nondet(SandboxContext& ctx, const std::vector<std::string>&) {
  auto now = std::chrono::steady_clock::now().time_since_epoch().count();
  ctx.write_file(ctx.env().at("outputDir") + "/noise.txt", std::to_string(now));
  return 0;
}

// Rendezvous of two concurrently running instances; each succeeds only if
// the other is in flight before it finishes, proving independent nodes may
// overlap. One-shot per process: the arrival count never resets.
std::atomic<int> barrier_arrivals{0};

int fixture_barrier_pair(SandboxContext& ctx, const std::vector<std::string>&) {
  barrier_arrivals.fetch_add(1);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (barrier_arrivals.load() < 2) {
    if (ctx.cancelled() || std::chrono::steady_clock::now() > deadline) {
      ctx.err << "no second instance arrived\n";
      return 1;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ctx.write_file(ctx.env().at("outputDir") + "/met.txt", "rendezvous");
  return 0;
}

}  // namespace

void register_builtin_fixtures(MockBackend& backend) {
  backend.register_fixture("fixture/indexer", fixture_indexer);
  backend.register_fixture("fixture/overlap-ranker", fixture_overlap_ranker);
  backend.register_fixture("fixture/length-penalty", fixture_length_penalty);
  backend.register_fixture("fixture/ltr", fixture_ltr);
  backend.register_fixture("fixture/net-probe", fixture_net_probe);
  backend.register_fixture("fixture/input-writer", fixture_input_writer);
  backend.register_fixture("fixture/outside-reader", fixture_outside_reader);
  backend.register_fixture("fixture/empty-output", fixture_empty_output);
  backend.register_fixture("fixture/crash", fixture_crash);
  backend.register_fixture("fixture/sleeper", fixture_sleeper);
  backend.register_fixture("fixture/env-dump", fixture_env_dump);
  backend.register_fixture("fixture/run-dir-list", fixture_run_dir_list);
  backend.register_fixture("fixture/nondet", fixture_nondet);
  backend.register_fixture("fixture/barrier-pair", fixture_barrier_pair);
}

}  // namespace irbed::sandbox
