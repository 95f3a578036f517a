#include <json.hpp>

#include "gunet/model.hpp"

namespace gunet {

std::string architecture_config_to_json(const ArchitectureConfig& cfg) {
  nlohmann::json j;
  j["group"] = cfg.group_spec().name();
  j["depth"] = cfg.depth;
  j["base_width"] = cfg.base_width;
  j["input_channels"] = cfg.input_channels;
  j["num_classes"] = cfg.num_classes;
  j["kernel_size"] = cfg.kernel_size;
  j["skip_connections"] = cfg.skip_connections;
  return j.dump();
}

ArchitectureConfig architecture_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid architecture config: ") + e.what());
  }
  ArchitectureConfig cfg;
  try {
    cfg.group = GroupSpec::from_name(j.at("group").get<std::string>()).kind;
    cfg.depth = j.at("depth").get<int>();
    cfg.base_width = j.at("base_width").get<int>();
    cfg.input_channels = j.at("input_channels").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.kernel_size = j.at("kernel_size").get<int>();
    cfg.skip_connections = j.at("skip_connections").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid architecture config: ") + e.what());
  }
  return cfg;
}

}  // namespace gunet
