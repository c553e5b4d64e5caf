#pragma once

// Weights archive ("SLWA") and IDX dataset I/O.
//
// Archive layout, all integers little-endian:
//   "SLWA" | u16 version | u32 manifest_len | manifest (UTF-8 JSON)
//   u32 tensor_count | per tensor:
//     u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 values[prod(dims)]
//
// The manifest describes the layer graph (see model_from_archive) plus the
// variant tag, training hyperparameters and recorded test accuracy.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mrfault/model.hpp"
#include "mrfault/tensor.hpp"

namespace mrfault::io {

inline constexpr std::uint16_t kArchiveVersion = 1;

struct NamedTensor {
    std::string name;
    nn::Tensor tensor;

    bool operator==(const NamedTensor&) const = default;
};

struct Archive {
    std::string manifest;
    std::vector<NamedTensor> tensors;

    const nn::Tensor* find(const std::string& name) const;
    bool operator==(const Archive&) const = default;
};

/// Throws FormatError(duplicate_name) when two tensors share a name.
std::vector<std::uint8_t> write_archive(const Archive& archive);

/// Throws FormatError with bad_magic, version_mismatch, truncated,
/// trailing_data or duplicate_name.
Archive read_archive(std::span<const std::uint8_t> bytes);

Archive read_archive_file(const std::filesystem::path& path);
void write_archive_file(const std::filesystem::path& path, const Archive& archive);

/// Builds the layer graph described by the manifest. Manifest layer entries:
///   {"type":"conv2d","name","in_channels","out_channels","kernel":[h,w],"stride","padding","bias"}
///   {"type":"fc","name","in","out","bias"}
///   {"type":"relu"} {"type":"flatten"}
///   {"type":"maxpool2d"|"avgpool2d","kernel","stride"}
///   {"type":"add","from": layer index | "input"}
///   {"type":"batchnorm","name","eps"}  (tensors name.weight/.bias/.running_mean/.running_var,
///                                       or name.scale/.shift)
/// Weights are looked up as "<name>.weight" / "<name>.bias". BatchNorm
/// following a conv or fc is folded into it. Throws FormatError(bad_manifest).
nn::Model model_from_archive(const Archive& archive);

/// Inverse of model_from_archive. `extra` is a JSON object whose keys are
/// merged into the manifest (training hyperparameters, accuracy, ...).
Archive archive_from_model(const nn::Model& model, const std::string& extra_json = "{}");

nn::Model load_model(const std::filesystem::path& path);

/// Standard IDX pair (gzip-compressed or raw). Pixels are scaled to [0, 1].
/// Throws FormatError with bad_magic, truncated, trailing_data, count_mismatch or bad_label.
nn::Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                     std::size_t num_classes = 10);

/// Whole file, transparently gunzipped.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace mrfault::io
