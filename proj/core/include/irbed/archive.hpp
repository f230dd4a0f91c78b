#pragma once

// Self-contained experiment archives. An archive is a plain directory:
//
//   manifest.json                      format version, digests of every file
//   datasets/<id>/...                  content, or digest stubs when withheld
//   registry/components.log            full component/upload history
//   uploads/<id>/vN/...                upload payloads
//   runs/<approach>/<dataset>/...      run.txt, evaluation.json, provenance.json
//
// Confidential datasets export without content by default, and without
// their run files (blind datasets only ever show aggregate scores), but
// always with evaluations and digests, so leaderboards and
// reproducibility reports survive the round trip bit for bit.

#include <filesystem>
#include <string>

#include "irbed/platform.hpp"

namespace irbed::archive {

struct ExportOptions {
  std::string task_id;  // defaults to the store's configured task id
  bool include_test_data = false;
  // images are normally stored by reference to keep archives small; this
  // saves image tarballs (OCI backend only) for fully offline replay
  bool embed_images = false;
};

inline constexpr int kFormatVersion = 1;

/// Writes the archive and returns its manifest.
formats::Json export_archive(Platform& platform, const std::filesystem::path& destination,
                             const ExportOptions& options = {});

/// Imports into an empty store. Every included file is digest-verified
/// against the manifest; a mismatch aborts naming the corrupted file.
void import_archive(const std::filesystem::path& archive_dir, Platform& platform);

formats::Json read_manifest(const std::filesystem::path& archive_dir);

/// Re-executes an archived (or locally recorded) approach on any registered
/// dataset through the executor. The pipeline terminal comes from the
/// approach's recorded provenance.
RunResult replay(Platform& platform, const std::string& approach, const std::string& dataset_id,
                 const RunOptions& options = {});

/// Reads a run straight out of an archive directory, no execution.
formats::RunFile fetch_run(const std::filesystem::path& archive_dir, const std::string& approach,
                           const std::string& dataset_id);

}  // namespace irbed::archive
