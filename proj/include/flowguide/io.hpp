#pragma once

#include "flowguide/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace flowguide {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_g6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Write via a temp file in the same directory, then rename into place.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + tmp.string());
        f << content;
        if (!f) throw ConfigError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// Column-labeled CSV accumulator; floats serialize at full precision so
// repeated runs are byte-identical.
class Csv {
public:
    explicit Csv(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(const std::vector<double>& vals) {
        if (vals.size() != columns_.size()) throw ConfigError("csv row width mismatch");
        std::string row;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) row += ',';
            row += fmt_double(vals[i]);
        }
        rows_.push_back(std::move(row));
    }

    void add_row_mixed(const std::vector<std::string>& vals) {
        if (vals.size() != columns_.size()) throw ConfigError("csv row width mismatch");
        std::string row;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) row += ',';
            row += vals[i];
        }
        rows_.push_back(std::move(row));
    }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (i) out += ',';
            out += columns_[i];
        }
        out += '\n';
        for (const auto& r : rows_) {
            out += r;
            out += '\n';
        }
        return out;
    }

    void write(const std::filesystem::path& path) const { atomic_write_file(path, str()); }

private:
    std::vector<std::string> columns_;
    std::vector<std::string> rows_;
};

// Index-parallel map with deterministic aggregation: results land in a
// pre-sized slot per index regardless of scheduling.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += jobs) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace flowguide
