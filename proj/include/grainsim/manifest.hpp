#pragma once

#include <string>
#include <vector>

namespace grainsim {

/// Append-only JSONL run manifest. Every output file a subcommand
/// produces is listed here, after the file exists (writes are staged and
/// renamed, so a manifest never references a missing file). No wall
/// clock anywhere: identical runs produce identical manifests.
class RunManifest {
 public:
  RunManifest(const std::string& out_dir, const std::string& subcommand,
              uint64_t seed,
              const std::vector<std::pair<std::string, std::string>>& inputs);

  const std::string& run_id() const { return run_id_; }
  const std::string& path() const { return path_; }

  void add_output(const std::string& kind, const std::string& file_path);
  void note(const std::string& key, const std::string& value);
  void note(const std::string& key, double value);

 private:
  void append(const std::string& line);
  std::string dir_;
  std::string path_;
  std::string run_id_;
};

/// FNV-1a hash of a file's bytes, hex-encoded (config fingerprints).
std::string hash_file(const std::string& path);
std::string hash_bytes(const std::string& bytes);

}  // namespace grainsim
