#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace artbrain {

struct NamedTensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;
};

/// In-memory form of an `.acnx` weight archive.
///
/// File layout: the 6 magic bytes `ACNX1\0`, a little-endian u64 header length, a UTF-8
/// JSON header and the raw tensor data region. Each header entry carries `name`,
/// `dtype` ("f32"), `shape`, `offset` (relative to the data region) and `nbytes`.
/// Tensors are row-major little-endian 32-bit floats. Extra header keys (such as the
/// `model` block written by the network) are preserved in `metadata`.
class WeightArchive {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    WeightArchive() = default;
    explicit WeightArchive(std::string variant) : variant_(std::move(variant)) {}

    const std::string &variant() const noexcept { return variant_; }
    void set_variant(std::string variant) { variant_ = std::move(variant); }

    /// Free-form header keys besides format_version, variant and tensors.
    nlohmann::json &metadata() noexcept { return metadata_; }
    const nlohmann::json &metadata() const noexcept { return metadata_; }

    /// Throws ConfigError when the name already exists or the data length disagrees with the shape.
    void add(NamedTensor tensor);
    bool contains(const std::string &name) const;
    const NamedTensor &at(const std::string &name) const;
    const std::vector<NamedTensor> &tensors() const noexcept { return tensors_; }

    std::vector<std::byte> serialize() const;
    void save(const std::filesystem::path &path) const;

    /// Throws ParseError with kind bad_magic, truncated, duplicate_name or bad_header.
    static WeightArchive parse(std::span<const std::byte> bytes);
    static WeightArchive load(const std::filesystem::path &path);

private:
    std::string variant_;
    nlohmann::json metadata_ = nlohmann::json::object();
    std::vector<NamedTensor> tensors_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace artbrain
