#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace rls {

/// One row of a convergence trace.
struct TraceRecord {
    std::int64_t outer_iter = 0;
    std::int64_t fom_iters = 0;
    std::int64_t data_passes = 0;
    double f = 0.0;  // f₀(x_best)
    double g = 0.0;  // g(x_best)
    std::optional<double> p_at_fstar;
    std::int64_t restarts = 0;
    std::optional<std::size_t> last_kprime;

    bool operator==(const TraceRecord&) const = default;
};

class TraceSink {
public:
    virtual ~TraceSink() = default;
    virtual void record(const TraceRecord& rec) = 0;
};

class MemoryTraceSink : public TraceSink {
public:
    void record(const TraceRecord& rec) override { records.push_back(rec); }
    std::vector<TraceRecord> records;
};

}  // namespace rls
