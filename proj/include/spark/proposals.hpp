#pragma once

// Recent proposal outcomes (the FIFO window fed back to the directive step)
// and the stagnation signal over evaluated candidates.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spark/feasibility.hpp"
#include "spark/program.hpp"

namespace spark {

struct ProposalRecord {
    std::uint64_t iteration = 0;
    std::optional<Factor> factor;
    bool passed = false;
    std::optional<FailureType> failure;  // set iff !passed
};

/// Bounded FIFO; the oldest record is dropped when full.
class ProposalBuffer {
public:
    explicit ProposalBuffer(std::size_t capacity = 10);

    void push(ProposalRecord r);
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const std::deque<ProposalRecord>& records() const noexcept { return records_; }

    nlohmann::json to_json() const;
    static ProposalBuffer from_json(const nlohmann::json& j, std::size_t capacity);

private:
    std::size_t capacity_;
    std::deque<ProposalRecord> records_;
};

struct ProposalSummary {
    std::size_t window = 0;
    std::size_t failures = 0;
    double failure_rate = 0.0;
    /// Failure types by descending count (ties in enum order).
    std::vector<std::pair<FailureType, std::size_t>> histogram;
    /// Every type sharing the highest count; empty without failures.
    std::vector<FailureType> dominant;
};

ProposalSummary summarize(const ProposalBuffer& q);

struct StagnationSignal {
    std::size_t window = 0;
    double improvement = 0.0;  // best in window minus the window's first value
    bool stagnant = false;     // window of two or more with no improvement
};

/// `recent` is the fitness of the last k evaluated candidates, oldest first.
StagnationSignal compute_stagnation(std::span<const double> recent);

}  // namespace spark
