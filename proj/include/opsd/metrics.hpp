#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace opsd::metrics {

struct MetricsRecord {
    long long step = 0;
    std::string method;  // training method; eval rows use "<method>.eval"
    double loss = 0.0;
    double mean_reward = 0.0;
    long long cumulative_generated_tokens = 0;
    double learning_rate = 0.0;
    double wallclock_seconds = 0.0;
};

// Append-only CSV writer; the header is emitted when starting a fresh file.
class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path, bool append = false);
    ~MetricsWriter();
    MetricsWriter(const MetricsWriter&) = delete;
    MetricsWriter& operator=(const MetricsWriter&) = delete;
    void write(const MetricsRecord& r);

  private:
    std::FILE* f_ = nullptr;
};

std::vector<MetricsRecord> load_metrics(const std::string& path);

}  // namespace opsd::metrics
