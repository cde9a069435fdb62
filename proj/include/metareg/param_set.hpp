#pragma once

// Ordered, named collection of parameter tensors.  Each entry carries a
// segment tag so the meta-learner can measure distances over the encoder or
// solver portion of an adapted model separately.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metareg/tensor.hpp"

namespace metareg {

enum class Segment { encoder, solver, other };

const char* segment_name(Segment s);
Segment segment_from_name(std::string_view name);

struct ParamEntry {
    std::string name;
    Segment segment;
    Tensor tensor;
};

class ParamSet {
public:
    void add(std::string name, Segment segment, Tensor tensor);

    bool contains(std::string_view name) const;
    const Tensor& at(std::string_view name) const;
    Segment segment_of(std::string_view name) const;
    // Replaces the tensor behind an existing name; the segment tag stays.
    void set(std::string_view name, Tensor tensor);

    std::size_t count() const { return entries_.size(); }
    std::int64_t total_size() const;
    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;

    // Same names and segments, entry i backed by tensors[i].
    ParamSet with_tensors(const std::vector<Tensor>& tensors) const;

    // Raw doubles in entry order; unflattened() rebuilds fresh leaf tensors
    // from such a buffer.  The round trip is bit-exact.
    std::vector<double> flatten() const;
    ParamSet unflattened(std::span<const double> flat, bool tracked = true) const;

    // Fresh leaves copying current values (drops any tape history).
    ParamSet detached(bool tracked = true) const;

    // Differentiable 1-D concatenation of every tensor in the segment, in
    // entry order.  Errors if the segment is empty.
    Tensor flatten_segment(Segment segment) const;
    // Same, over all entries.
    Tensor flatten_all() const;

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Gradient of a scalar loss with respect to every entry; same schema as wrt,
// unreachable entries get zeros.
ParamSet grad_params(const Tensor& loss, const ParamSet& wrt, bool create_graph = false);

}  // namespace metareg
