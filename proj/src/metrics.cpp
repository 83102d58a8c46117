#include "opsd/metrics.hpp"

#include <cstring>
#include <stdexcept>

namespace opsd::metrics {

namespace {
constexpr const char* kHeader =
    "step,method,loss,mean_reward,cumulative_generated_tokens,learning_rate,wallclock_seconds";
}

MetricsWriter::MetricsWriter(const std::string& path, bool append) {
    f_ = std::fopen(path.c_str(), append ? "ab" : "wb");
    if (!f_) throw std::runtime_error("metrics: cannot open '" + path + "' for writing");
    if (!append) std::fprintf(f_, "%s\n", kHeader);
}

MetricsWriter::~MetricsWriter() {
    if (f_) std::fclose(f_);
}

void MetricsWriter::write(const MetricsRecord& r) {
    std::fprintf(f_, "%lld,%s,%.17g,%.17g,%lld,%.17g,%.17g\n", r.step, r.method.c_str(), r.loss,
                 r.mean_reward, r.cumulative_generated_tokens, r.learning_rate,
                 r.wallclock_seconds);
    std::fflush(f_);
}

std::vector<MetricsRecord> load_metrics(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("metrics: cannot open '" + path + "'");
    std::vector<MetricsRecord> out;
    char buf[512];
    int line = 0;
    while (std::fgets(buf, sizeof buf, f)) {
        ++line;
        std::string s(buf);
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        if (s.empty()) continue;
        if (line == 1) {
            if (s != kHeader) {
                std::fclose(f);
                throw std::runtime_error("metrics: bad header in '" + path + "'");
            }
            continue;
        }
        MetricsRecord r;
        char method[128];
        int n = std::sscanf(s.c_str(), "%lld,%127[^,],%lg,%lg,%lld,%lg,%lg", &r.step, method,
                            &r.loss, &r.mean_reward, &r.cumulative_generated_tokens,
                            &r.learning_rate, &r.wallclock_seconds);
        if (n != 7) {
            std::fclose(f);
            throw std::runtime_error("metrics: malformed row at line " + std::to_string(line) +
                                     " of '" + path + "'");
        }
        r.method = method;
        out.push_back(std::move(r));
    }
    std::fclose(f);
    return out;
}

}  // namespace opsd::metrics
