#include "artbrain/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

constexpr std::array<char, 6> kMagic = {'A', 'C', 'N', 'X', '1', '\0'};

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFU) << 24U) | ((v & 0xFF00U) << 8U) | ((v >> 8U) & 0xFF00U) | (v >> 24U);
    }
    return v;
}

void put_u64(std::vector<std::byte> &out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFU));
    }
}

std::uint64_t get_u64(std::span<const std::byte> bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes[i])) << (8 * i);
    }
    return v;
}

std::size_t product(const std::vector<std::int64_t> &shape) {
    std::size_t n = 1;
    for (const auto d : shape) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

std::size_t NamedTensor::element_count() const { return product(shape); }

void WeightArchive::add(NamedTensor tensor) {
    for (const auto d : tensor.shape) {
        if (d < 0) throw ConfigError("tensor '" + tensor.name + "' has a negative dimension");
    }
    if (tensor.data.size() != tensor.element_count()) {
        throw ConfigError("tensor '" + tensor.name + "' holds " + std::to_string(tensor.data.size()) +
                          " values for a shape of " + std::to_string(tensor.element_count()));
    }
    if (index_.contains(tensor.name)) {
        throw ConfigError("duplicate tensor name '" + tensor.name + "'");
    }
    index_.emplace(tensor.name, tensors_.size());
    tensors_.push_back(std::move(tensor));
}

bool WeightArchive::contains(const std::string &name) const { return index_.contains(name); }

const NamedTensor &WeightArchive::at(const std::string &name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("archive has no tensor '" + name + "'");
    return tensors_[it->second];
}

std::vector<std::byte> WeightArchive::serialize() const {
    nlohmann::json header = metadata_;
    header["format_version"] = kFormatVersion;
    header["variant"] = variant_;
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto &t : tensors_) {
        const std::uint64_t nbytes = 4 * t.data.size();
        entries.push_back(
            {{"name", t.name}, {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    header["tensors"] = std::move(entries);
    const std::string text = header.dump();

    std::vector<std::byte> out;
    out.reserve(kMagic.size() + 8 + text.size() + offset);
    for (const char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_u64(out, text.size());
    for (const char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto &t : tensors_) {
        for (const float f : t.data) {
            const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
            for (int i = 0; i < 4; ++i) {
                out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFU));
            }
        }
    }
    return out;
}

void WeightArchive::save(const std::filesystem::path &path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

WeightArchive WeightArchive::parse(std::span<const std::byte> bytes) {
    using Kind = ParseError::Kind;
    if (bytes.size() < kMagic.size() ||
        std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw ParseError(Kind::bad_magic, "not an ACNX1 weight archive");
    }
    if (bytes.size() < kMagic.size() + 8) {
        throw ParseError(Kind::truncated, "archive ends inside the header length");
    }
    const std::uint64_t header_len = get_u64(bytes.subspan(kMagic.size(), 8));
    const std::size_t header_start = kMagic.size() + 8;
    if (header_len > bytes.size() - header_start) {
        throw ParseError(Kind::truncated, "archive ends inside the JSON header");
    }
    const auto header_bytes = bytes.subspan(header_start, header_len);
    const auto data = bytes.subspan(header_start + header_len);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(reinterpret_cast<const char *>(header_bytes.data()),
                                       reinterpret_cast<const char *>(header_bytes.data()) + header_bytes.size());
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(Kind::bad_header, std::string("malformed archive header: ") + e.what());
    }

    WeightArchive archive;
    try {
        if (header.at("format_version").get<std::uint32_t>() != kFormatVersion) {
            throw ParseError(Kind::bad_header, "unsupported archive format_version");
        }
        archive.variant_ = header.at("variant").get<std::string>();
        std::set<std::string, std::less<>> seen;
        for (const auto &entry : header.at("tensors")) {
            NamedTensor t;
            t.name = entry.at("name").get<std::string>();
            if (!seen.insert(t.name).second) {
                throw ParseError(Kind::duplicate_name, "duplicate tensor name '" + t.name + "'");
            }
            if (entry.at("dtype").get<std::string>() != "f32") {
                throw ParseError(Kind::bad_header, "tensor '" + t.name + "' is not f32");
            }
            t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            for (const auto d : t.shape) {
                if (d < 0) throw ParseError(Kind::bad_header, "tensor '" + t.name + "' has a negative dimension");
            }
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            const std::uint64_t expected = 4 * static_cast<std::uint64_t>(t.element_count());
            if (nbytes != expected) {
                throw ParseError(Kind::truncated, "tensor '" + t.name + "' has " + std::to_string(nbytes) +
                                                      " bytes, shape needs " + std::to_string(expected));
            }
            if (offset > data.size() || nbytes > data.size() - offset) {
                throw ParseError(Kind::truncated, "tensor '" + t.name + "' runs past the end of the data region");
            }
            t.data.resize(t.element_count());
            for (std::size_t i = 0; i < t.data.size(); ++i) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) {
                    bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(data[offset + 4 * i + b]))
                            << (8 * b);
                }
                t.data[i] = std::bit_cast<float>(to_little_endian(bits));
            }
            archive.index_.emplace(t.name, archive.tensors_.size());
            archive.tensors_.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(Kind::bad_header, std::string("malformed archive header: ") + e.what());
    }
    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() != "format_version" && it.key() != "variant" && it.key() != "tensors") {
            archive.metadata_[it.key()] = it.value();
        }
    }
    return archive;
}

WeightArchive WeightArchive::load(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight archive " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace artbrain
