#include "ofnlab/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ofnlab/errors.hpp"

namespace ofn {

namespace {
constexpr const char* kFormat = "ofnlab-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const ParamMap& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  auto& p = j["params"] = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    p[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
}

ParamMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
    throw std::runtime_error("'" + path + "' is not a version " + std::to_string(kVersion) +
                             " checkpoint");
  }
  ParamMap out;
  for (const auto& [name, entry] : j.at("params").items()) {
    Tensor t(entry.at("shape").get<std::vector<std::size_t>>());
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) {
      throw std::runtime_error("checkpoint entry '" + name + "' has the wrong element count");
    }
    std::copy(data.begin(), data.end(), t.data().begin());
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace ofn
