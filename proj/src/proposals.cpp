#include "spark/proposals.hpp"

#include <algorithm>
#include <array>

#include "spark/errors.hpp"

namespace spark {

ProposalBuffer::ProposalBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("proposal window must be positive");
}

void ProposalBuffer::push(ProposalRecord r) {
    records_.push_back(std::move(r));
    while (records_.size() > capacity_) records_.pop_front();
}

nlohmann::json ProposalBuffer::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records_) {
        nlohmann::json j = {{"iteration", r.iteration}, {"passed", r.passed}};
        j["factor"] = r.factor ? nlohmann::json(std::string(to_string(*r.factor))) : nlohmann::json(nullptr);
        j["failure_type"] = r.failure ? nlohmann::json(std::string(to_string(*r.failure))) : nlohmann::json(nullptr);
        arr.push_back(std::move(j));
    }
    return arr;
}

ProposalBuffer ProposalBuffer::from_json(const nlohmann::json& j, std::size_t capacity) {
    ProposalBuffer q(capacity);
    for (const auto& e : j) {
        ProposalRecord r;
        r.iteration = e.at("iteration").get<std::uint64_t>();
        r.passed = e.at("passed").get<bool>();
        if (e.at("factor").is_string()) r.factor = parse_factor_token(e["factor"].get<std::string>());
        if (e.at("failure_type").is_string()) {
            r.failure = failure_type_from_string(e["failure_type"].get<std::string>());
            if (!r.failure) throw TraceError("unknown failure type in checkpoint");
        }
        q.push(std::move(r));
    }
    return q;
}

ProposalSummary summarize(const ProposalBuffer& q) {
    ProposalSummary s;
    s.window = q.size();
    std::array<std::size_t, kFailureTypeCount> counts{};
    for (const auto& r : q.records()) {
        if (r.passed) continue;
        ++s.failures;
        if (r.failure) ++counts[static_cast<std::size_t>(*r.failure)];
    }
    if (s.window > 0) s.failure_rate = static_cast<double>(s.failures) / static_cast<double>(s.window);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) s.histogram.emplace_back(static_cast<FailureType>(i), counts[i]);
    }
    std::stable_sort(s.histogram.begin(), s.histogram.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [type, n] : s.histogram) {
        if (n == s.histogram.front().second) s.dominant.push_back(type);
    }
    return s;
}

StagnationSignal compute_stagnation(std::span<const double> recent) {
    StagnationSignal s;
    s.window = recent.size();
    if (recent.empty()) return s;
    s.improvement = *std::max_element(recent.begin(), recent.end()) - recent.front();
    s.stagnant = recent.size() >= 2 && s.improvement <= 0.0;
    return s;
}

}  // namespace spark
