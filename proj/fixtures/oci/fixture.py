#!/usr/bin/env python3
"""Deterministic retrieval fixtures for container-backend runs.

Subcommands mirror the in-process mock fixtures:
  index   build a token index from documents.jsonl.gz
  rank    term-overlap ranking of topics against the index ($inputRun)
  rerank  length-penalty re-ranking of re-rank.jsonl.gz

Paths come from the standard environment variables inputDataset,
outputDir, and inputRun.
"""

import argparse
import gzip
import json
import os
import re
import sys


def read_jsonl(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def tokens(text):
    return sorted({t.lower() for t in re.findall(r"[0-9A-Za-z]+", text)})


def cmd_index(args):
    in_dir = os.environ["inputDataset"]
    out_dir = os.environ["outputDir"]
    index = {}
    for doc in read_jsonl(os.path.join(in_dir, "documents.jsonl.gz")):
        index[doc["docno"]] = tokens(doc["text"])
    with open(os.path.join(out_dir, "index.json"), "w", encoding="utf-8") as out:
        json.dump(index, out, separators=(",", ":"))
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as out:
        json.dump({"doc_count": len(index)}, out, separators=(",", ":"))


def write_run(out_dir, rows, tag):
    with open(os.path.join(out_dir, "run.txt"), "w", encoding="utf-8") as out:
        for qid, docno, rank, score in rows:
            out.write(f"{qid} Q0 {docno} {rank} {score} {tag}\n")


def cmd_rank(args):
    in_dir = os.environ["inputDataset"]
    run_dir = os.environ["inputRun"]
    out_dir = os.environ["outputDir"]
    with open(os.path.join(run_dir, "index.json"), encoding="utf-8") as handle:
        index = json.load(handle)
    rows = []
    for topic in read_jsonl(os.path.join(in_dir, "topics.jsonl.gz")):
        query_tokens = set(tokens(topic["query"]))
        scored = []
        for docno, doc_tokens in index.items():
            overlap = len(query_tokens.intersection(doc_tokens))
            if overlap > 0:
                scored.append((docno, overlap))
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        for rank, (docno, overlap) in enumerate(scored[: args.top], start=1):
            rows.append((topic["qid"], docno, rank, overlap))
    write_run(out_dir, rows, args.tag)


def cmd_rerank(args):
    in_dir = os.environ["inputDataset"]
    out_dir = os.environ["outputDir"]
    grouped = {}
    order = []
    for entry in read_jsonl(os.path.join(in_dir, "re-rank.jsonl.gz")):
        if entry["qid"] not in grouped:
            order.append(entry["qid"])
            grouped[entry["qid"]] = []
        grouped[entry["qid"]].append(entry)
    rows = []
    for qid in order:
        scored = [
            (entry["docno"], 1000 * entry["score"] - len(entry["text"]))
            for entry in grouped[qid]
        ]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        for rank, (docno, score) in enumerate(scored, start=1):
            rows.append((qid, docno, rank, score))
    write_run(out_dir, rows, args.tag)


def main():
    parser = argparse.ArgumentParser()
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("index")
    rank = subparsers.add_parser("rank")
    rank.add_argument("--top", type=int, default=100)
    rank.add_argument("--tag", default="rank")
    rerank = subparsers.add_parser("rerank")
    rerank.add_argument("--tag", default="rerank")
    args = parser.parse_args()
    {"index": cmd_index, "rank": cmd_rank, "rerank": cmd_rerank}[args.command](args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
