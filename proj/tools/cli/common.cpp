#include "common.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include "clip/nd/serialize.hpp"

namespace clip::cli {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

nlohmann::json parse_key_values(const std::string& text, const std::string& path) {
  nlohmann::json out = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(path + ":" + std::to_string(n) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(path + ":" + std::to_string(n) + ": empty key");
    auto value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    nlohmann::json::json_pointer ptr;
    std::istringstream parts(key);
    for (std::string part; std::getline(parts, part, '.');) ptr /= part;
    out[ptr] = value;
  }
  return out;
}

}  // namespace

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  require_file(path, "config");
  const auto text = nd::read_file(path);
  const auto start = text.find_first_not_of(" \t\r\n");
  if (start != std::string::npos && text[start] == '{') {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config " + path + " is not valid JSON");
    return j;
  }
  return parse_key_values(text, path);
}

void emit(const Globals& g, const nlohmann::json& report) {
  const auto text = report.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    nd::write_file(g.out, text);
  }
}

void require_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw ValidationError(what + " '" + path.string() + "' does not exist");
}

std::string file_digest(const std::filesystem::path& path) { return nd::fnv1a_hex(nd::read_file(path)); }

LoadedModel load_model(const std::filesystem::path& path) {
  require_file(path, "checkpoint");
  const auto ckpt = nd::load_checkpoint(path);
  if (!ckpt.meta.contains("tokenizer")) {
    throw ValidationError("checkpoint '" + path.string() + "' carries no tokenizer; was it written by train?");
  }
  return {contrastive::ClipModel::from_checkpoint(ckpt),
          textproc::from_text(ckpt.meta.at("tokenizer").get<std::string>()), nd::fingerprint(ckpt)};
}

datakit::PairDataset load_data(const std::filesystem::path& path) {
  require_file(path, "dataset");
  return datakit::load_dataset(path);
}

std::vector<std::string> dataset_labels(const datakit::PairDataset& data) {
  std::set<std::string> labels;
  for (const auto& r : data.records) {
    if (!r.metadata.contains("label")) throw ValidationError("record '" + r.image_ref + "' has no label");
    labels.insert(r.metadata.at("label").get<std::string>());
  }
  return {labels.begin(), labels.end()};
}

}  // namespace clip::cli
