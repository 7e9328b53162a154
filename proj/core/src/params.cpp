#include "artbrain/params.hpp"

#include <cstring>

#include "artbrain/error.hpp"

namespace artbrain {

bool TrainableMask::operator[](ParamGroup group) const noexcept {
    switch (group) {
    case ParamGroup::low: return low;
    case ParamGroup::mid: return mid;
    case ParamGroup::high: return high;
    case ParamGroup::attention: return attention;
    case ParamGroup::classifier: return classifier;
    }
    return false;
}

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, std::vector<std::size_t> shape, ParamGroup group) {
    if (find(name) != items_.size()) throw ConfigError("parameter '" + name + "' registered twice");
    std::size_t n = 1;
    for (const auto d : shape) n *= d;
    items_.push_back({std::move(name), std::move(shape), std::vector<T>(n, T{0}), group});
    return items_.size() - 1;
}

template <typename T>
std::size_t ParameterSet<T>::find(const std::string &name) const noexcept {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].name == name) return i;
    }
    return items_.size();
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const noexcept {
    std::size_t n = 0;
    for (const auto &p : items_) n += p.value.size();
    return n;
}

template <typename T>
Gradients<T> ParameterSet<T>::zero_gradients() const {
    Gradients<T> g;
    g.reserve(items_.size());
    for (const auto &p : items_) g.emplace_back(p.value.size(), T{0});
    return g;
}

template <typename T>
void ParameterSet<T>::import_from(const WeightArchive &archive) {
    for (auto &p : items_) {
        if (!archive.contains(p.name)) throw ConfigError("weight archive lacks parameter '" + p.name + "'");
        const auto &t = archive.at(p.name);
        bool same = t.shape.size() == p.shape.size();
        for (std::size_t i = 0; same && i < p.shape.size(); ++i) {
            same = static_cast<std::size_t>(t.shape[i]) == p.shape[i];
        }
        if (!same) throw ConfigError("shape mismatch for parameter '" + p.name + "'");
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(t.data[i]);
    }
}

template <typename T>
void ParameterSet<T>::export_to(WeightArchive &archive) const {
    for (const auto &p : items_) {
        NamedTensor t;
        t.name = p.name;
        t.shape.assign(p.shape.begin(), p.shape.end());
        t.data.assign(p.value.begin(), p.value.end());
        archive.add(std::move(t));
    }
}

template <typename T>
std::uint64_t ParameterSet<T>::checksum(ParamGroup group) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &p : items_) {
        if (p.group != group) continue;
        const auto *bytes = reinterpret_cast<const unsigned char *>(p.value.data());
        for (std::size_t i = 0; i < p.value.size() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace artbrain
