#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "artbrain/weights.hpp"

namespace artbrain {

/// Freezing unit. Backbone parameters belong to low/mid/high by the tap they feed.
enum class ParamGroup : std::uint8_t { low, mid, high, attention, classifier };

inline constexpr std::size_t kNumParamGroups = 5;

template <typename T>
struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> value;
    ParamGroup group = ParamGroup::low;
};

/// Which parameter groups an optimizer may touch.
struct TrainableMask {
    bool low = false;
    bool mid = false;
    bool high = true;
    bool attention = true;
    bool classifier = true;

    bool operator[](ParamGroup group) const noexcept;
    bool any() const noexcept { return low || mid || high || attention || classifier; }

    static TrainableMask all() { return {true, true, true, true, true}; }
    static TrainableMask none() { return {false, false, false, false, false}; }
};

/// Gradient buffers laid out parallel to a ParameterSet.
template <typename T>
using Gradients = std::vector<std::vector<T>>;

/// Ordered, name-addressable parameter storage. Registration order is deterministic,
/// so float and double copies of one model share indices.
template <typename T>
class ParameterSet {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, ParamGroup group);

    Parameter<T> &operator[](std::size_t i) { return items_[i]; }
    const Parameter<T> &operator[](std::size_t i) const { return items_[i]; }
    std::size_t size() const noexcept { return items_.size(); }
    auto begin() const noexcept { return items_.begin(); }
    auto end() const noexcept { return items_.end(); }

    /// Index of a named parameter, or size() when absent.
    std::size_t find(const std::string &name) const noexcept;
    std::size_t element_count() const noexcept;

    Gradients<T> zero_gradients() const;

    /// Copies every registered parameter out of the archive. Missing names or
    /// shape mismatches throw ConfigError.
    void import_from(const WeightArchive &archive);
    void export_to(WeightArchive &archive) const;

    /// FNV-1a over the raw bytes of every parameter in `group`.
    std::uint64_t checksum(ParamGroup group) const;

    template <typename U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto &p : items_) {
            const auto idx = out.add(p.name, p.shape, p.group);
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                out[idx].value[i] = static_cast<U>(p.value[i]);
            }
        }
        return out;
    }

private:
    std::vector<Parameter<T>> items_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace artbrain
