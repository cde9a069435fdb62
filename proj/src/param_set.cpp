#include "metareg/param_set.hpp"

#include <algorithm>

namespace metareg {

const char* segment_name(Segment s) {
    switch (s) {
        case Segment::encoder: return "encoder";
        case Segment::solver: return "solver";
        case Segment::other: return "other";
    }
    throw ContractError("segment_name: unknown segment tag");
}

Segment segment_from_name(std::string_view name) {
    if (name == "encoder") return Segment::encoder;
    if (name == "solver") return Segment::solver;
    if (name == "other") return Segment::other;
    throw ValidationError("segment_from_name: unknown segment '" + std::string(name) + "'");
}

void ParamSet::add(std::string name, Segment segment, Tensor tensor) {
    if (!tensor.defined()) throw ContractError("ParamSet::add: undefined tensor for '" + name + "'");
    if (index_.count(name))
        throw ContractError("ParamSet::add: duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), segment, std::move(tensor)});
}

bool ParamSet::contains(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
}

const Tensor& ParamSet::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ContractError("ParamSet: no parameter named '" + std::string(name) + "'");
    return entries_[it->second].tensor;
}

Segment ParamSet::segment_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ContractError("ParamSet: no parameter named '" + std::string(name) + "'");
    return entries_[it->second].segment;
}

void ParamSet::set(std::string_view name, Tensor tensor) {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ContractError("ParamSet::set: no parameter named '" + std::string(name) + "'");
    if (!tensor.defined())
        throw ContractError("ParamSet::set: undefined tensor for '" + std::string(name) + "'");
    entries_[it->second].tensor = std::move(tensor);
}

std::int64_t ParamSet::total_size() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

std::vector<Tensor> ParamSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
}

ParamSet ParamSet::with_tensors(const std::vector<Tensor>& tensors) const {
    if (tensors.size() != entries_.size())
        throw ContractError("ParamSet::with_tensors: got " + std::to_string(tensors.size()) +
                            " tensors for " + std::to_string(entries_.size()) + " entries");
    ParamSet out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (tensors[i].shape() != entries_[i].tensor.shape())
            throw DimensionError("ParamSet::with_tensors: shape " +
                                 shape_str(tensors[i].shape()) + " for '" + entries_[i].name +
                                 "' which is " + shape_str(entries_[i].tensor.shape()));
        out.add(entries_[i].name, entries_[i].segment, tensors[i]);
    }
    return out;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_size()));
    for (const auto& e : entries_) {
        auto v = e.tensor.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

ParamSet ParamSet::unflattened(std::span<const double> flat, bool tracked) const {
    if (static_cast<std::int64_t>(flat.size()) != total_size())
        throw DimensionError("ParamSet::unflattened: buffer of " + std::to_string(flat.size()) +
                             " doubles for a set of " + std::to_string(total_size()));
    ParamSet out;
    std::size_t off = 0;
    for (const auto& e : entries_) {
        const auto n = static_cast<std::size_t>(e.tensor.size());
        std::vector<double> vals(flat.begin() + off, flat.begin() + off + n);
        out.add(e.name, e.segment, Tensor::from_values(e.tensor.shape(), std::move(vals), tracked));
        off += n;
    }
    return out;
}

ParamSet ParamSet::detached(bool tracked) const {
    ParamSet out;
    for (const auto& e : entries_) {
        auto v = e.tensor.values();
        out.add(e.name, e.segment,
                Tensor::from_values(e.tensor.shape(), {v.begin(), v.end()}, tracked));
    }
    return out;
}

Tensor ParamSet::flatten_segment(Segment segment) const {
    std::vector<Tensor> parts;
    for (const auto& e : entries_)
        if (e.segment == segment)
            parts.push_back(reshape(e.tensor, {e.tensor.size()}));
    if (parts.empty())
        throw ContractError(std::string("ParamSet::flatten_segment: no '") +
                            segment_name(segment) + "' entries");
    return concat_vec(parts);
}

Tensor ParamSet::flatten_all() const {
    std::vector<Tensor> parts;
    parts.reserve(entries_.size());
    for (const auto& e : entries_) parts.push_back(reshape(e.tensor, {e.tensor.size()}));
    if (parts.empty()) throw ContractError("ParamSet::flatten_all: empty set");
    return concat_vec(parts);
}

ParamSet grad_params(const Tensor& loss, const ParamSet& wrt, bool create_graph) {
    auto tensors = wrt.tensors();
    auto grads = backward(loss, tensors, create_graph);
    return wrt.with_tensors(grads);
}

}  // namespace metareg
