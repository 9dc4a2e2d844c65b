#include "invo/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>
#include <type_traits>

namespace invo {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::string_view what, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view k : keys) known = known || key == k;
    if (!known) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!it->is_number_unsigned()) throw ConfigError(std::string("key '") + key + "' must be a non-negative integer");
  }
  try {
    it->get_to(out);
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const StageSpec& s) {
  j = json{{"out_channels", s.out_channels}, {"downsample", s.downsample}};
}

void from_json(const json& j, StageSpec& s) {
  reject_unknown(j, "pyramid stage", {"out_channels", "downsample"});
  read(j, "out_channels", s.out_channels);
  read(j, "downsample", s.downsample);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"operator", to_string(c.core)},
           {"in_channels", c.in_channels},
           {"stem_channels", c.stem_channels},
           {"stem_kernel", c.stem_kernel},
           {"pyramid", c.pyramid},
           {"kernel", c.kernel},
           {"groups", c.groups},
           {"reduction", c.reduction},
           {"conv_kernel", c.conv_kernel},
           {"num_classes", c.num_classes},
           {"mid_ratio", c.mid_ratio}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, "model config",
                 {"operator", "in_channels", "stem_channels", "stem_kernel", "pyramid", "kernel", "groups",
                  "reduction", "conv_kernel", "num_classes", "mid_ratio"});
  if (auto it = j.find("operator"); it != j.end()) c.core = parse_core_operator(it->get<std::string>());
  read(j, "in_channels", c.in_channels);
  read(j, "stem_channels", c.stem_channels);
  read(j, "stem_kernel", c.stem_kernel);
  read(j, "pyramid", c.pyramid);
  read(j, "kernel", c.kernel);
  read(j, "groups", c.groups);
  read(j, "reduction", c.reduction);
  read(j, "conv_kernel", c.conv_kernel);
  read(j, "num_classes", c.num_classes);
  read(j, "mid_ratio", c.mid_ratio);
}

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"formats", s.formats},
           {"frame_length", s.frame_length},
           {"frames_per_cell", s.frames_per_cell},
           {"snr_db", s.snr_db},
           {"sps", s.sps},
           {"rolloff", s.rolloff},
           {"span_symbols", s.span_symbols},
           {"random_phase", s.random_phase},
           {"seed", s.seed},
           {"split_fraction", s.split_fraction}};
}

void from_json(const json& j, DatasetSpec& s) {
  reject_unknown(j, "dataset spec",
                 {"formats", "frame_length", "frames_per_cell", "snr_db", "sps", "rolloff", "span_symbols",
                  "random_phase", "seed", "split_fraction"});
  read(j, "formats", s.formats);
  read(j, "frame_length", s.frame_length);
  read(j, "frames_per_cell", s.frames_per_cell);
  read(j, "snr_db", s.snr_db);
  read(j, "sps", s.sps);
  read(j, "rolloff", s.rolloff);
  read(j, "span_symbols", s.span_symbols);
  read(j, "random_phase", s.random_phase);
  read(j, "seed", s.seed);
  read(j, "split_fraction", s.split_fraction);
}

void to_json(json& j, const SgdConfig& c) {
  j = json{{"lr", c.lr},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"milestones", c.milestones},
           {"lr_factor", c.lr_factor},
           {"seed", c.seed},
           {"augment_phase", c.augment_phase},
           {"augment_flip", c.augment_flip}};
}

void from_json(const json& j, SgdConfig& c) {
  reject_unknown(j, "sgd config",
                 {"lr", "momentum", "weight_decay", "epochs", "batch_size", "milestones", "lr_factor", "seed",
                  "augment_phase", "augment_flip"});
  read(j, "lr", c.lr);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "milestones", c.milestones);
  read(j, "lr_factor", c.lr_factor);
  read(j, "seed", c.seed);
  read(j, "augment_phase", c.augment_phase);
  read(j, "augment_flip", c.augment_flip);
}

void to_json(json& j, const RunConfig& c) { j = json{{"model", c.model}, {"sgd", c.sgd}}; }

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j, "run config", {"model", "sgd"});
  read(j, "model", c.model);
  read(j, "sgd", c.sgd);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace invo
