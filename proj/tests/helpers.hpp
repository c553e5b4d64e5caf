#pragma once

#include <filesystem>
#include <string>

inline std::filesystem::path source_path(const std::string& rel) {
    return std::filesystem::path(MRFAULT_SOURCE_DIR) / rel;
}

inline std::filesystem::path fixture_model() { return source_path("fixtures/models/original.slwa"); }
inline std::filesystem::path fixture_images() { return source_path("fixtures/mnist/t10k-images-idx3-ubyte.gz"); }
inline std::filesystem::path fixture_labels() { return source_path("fixtures/mnist/t10k-labels-idx1-ubyte.gz"); }
