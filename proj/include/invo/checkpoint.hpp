#pragma once

// Single-file model checkpoint.
//
//   invo-checkpoint 1
//   dtype f32|f64
//   seed <u64>
//   epoch <int>
//   config <model config as one-line JSON>
//   tensors <count>
//   tensor <name> param|buffer <rank> <d0> ... <dn-1>     (one per array, layer order)
//   blob <nbytes>
//   <nbytes of little-endian IEEE-754 values, arrays concatenated in manifest order>
//
// Buffers are the batch-norm running statistics. f32 is the default storage
// precision; f64 round-trips double-precision weights exactly.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "invo/model.hpp"

namespace invo {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& name);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
  Precision precision = Precision::f32;
};

struct LoadedCheckpoint {
  Model model;  // in inference mode
  CheckpointInfo info;
};

std::string serialize_checkpoint(const Model& model, const CheckpointInfo& info);
LoadedCheckpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const CheckpointInfo& info, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Little-endian scalar encoding shared with the dataset files.
void append_le(std::string& out, double v, Precision p);
double read_le(const char* in, Precision p);
std::size_t byte_width(Precision p);

}  // namespace invo
