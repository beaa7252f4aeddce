#include "grainsim/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grainsim/errors.hpp"
#include "grainsim/rng.hpp"

namespace grainsim {

std::string hash_bytes(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot hash missing file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return hash_bytes(ss.str());
}

RunManifest::RunManifest(
    const std::string& out_dir, const std::string& subcommand, uint64_t seed,
    const std::vector<std::pair<std::string, std::string>>& inputs) {
  dir_ = out_dir;
  path_ = out_dir + "/manifest.jsonl";
  std::string id_src = subcommand + ":" + std::to_string(seed);
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, hash] : inputs) {
    in[name] = hash;
    id_src += ":" + hash;
  }
  run_id_ = hash_bytes(id_src);
  nlohmann::json j{{"event", "run"},
                   {"run_id", run_id_},
                   {"subcommand", subcommand},
                   {"seed", seed},
                   {"inputs", in}};
  append(j.dump());
}

void RunManifest::add_output(const std::string& kind, const std::string& file_path) {
  // store paths relative to the manifest's directory so identical runs
  // into different out-dirs stay byte-identical
  std::string rel = file_path;
  const std::string prefix = dir_ + "/";
  if (rel.rfind(prefix, 0) == 0) rel = rel.substr(prefix.size());
  nlohmann::json j{{"event", "output"},
                   {"run_id", run_id_},
                   {"kind", kind},
                   {"path", rel}};
  append(j.dump());
}

void RunManifest::note(const std::string& key, const std::string& value) {
  append(nlohmann::json{{"event", "note"}, {"run_id", run_id_}, {key, value}}.dump());
}

void RunManifest::note(const std::string& key, double value) {
  append(nlohmann::json{{"event", "note"}, {"run_id", run_id_}, {key, value}}.dump());
}

void RunManifest::append(const std::string& line) {
  std::ofstream f(path_, std::ios::app);
  if (!f) throw ValidationError("cannot append to manifest '" + path_ + "'");
  f << line << "\n";
}

}  // namespace grainsim
