#pragma once

// On-disk formats. All integers and floats are little-endian.
//
// Dataset container ("TWPS", version 1):
//   char[4] magic, u16 version, u32 bins, u32 frames, u32 run_count, u32 n_total,
//   u8 sensor_pos, u8 material_count, { u8 len, char[len] name } * material_count,
//   then run_count records of { u32 run_label, u8 material, f32[bins * frames] }
//   with values row-major (bin, frame).
//
// Checkpoint ("TWCK", version 1):
//   char[4] magic, u16 version,
//   architecture: u32 input_h, u32 input_w, u32 kernel, u32 stride, u32 padding,
//     u32 pool, u8 pool_kind, u8 norm_kind, f64 leaky_slope, f64 dropout,
//     u32 fc_hidden, u32 block_count, u32 channels[block_count],
//   u32 n_total, u32 tensor_count,
//   { u16 len, char[len] name, u8 rank, u32 dims[rank], u8 trainable } * tensor_count,
//   u64 param_count, f64 params[param_count], f64 best_val_loss, u32 best_epoch.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "toolwear/nn/train.hpp"
#include "toolwear/spectrogram.hpp"

namespace toolwear {

using Bytes = std::vector<std::uint8_t>;

constexpr std::uint16_t kDatasetVersion = 1;
constexpr std::uint16_t kCheckpointVersion = 1;

Bytes encode_dataset(const SpectrogramDataset& ds);
SpectrogramDataset decode_dataset(std::span<const std::uint8_t> bytes);

struct CheckpointFile {
  nn::Checkpoint checkpoint;
  int n_total = 0;
};

Bytes encode_checkpoint(const CheckpointFile& ckpt);
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
// Fails early (ErrorKind::io) when the target's directory cannot take the file.
void ensure_writable(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const SpectrogramDataset& ds);
SpectrogramDataset read_dataset(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace toolwear
