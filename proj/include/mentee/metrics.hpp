#pragma once
// Per-epoch metrics records and the CSV emitter. Column order is fixed and
// versioned by the leading comment line; runs in deterministic mode write
// 0.000 for wall-clock seconds so byte-identical reruns stay byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mentee/errors.hpp"

namespace mentee {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct MetricsRecord {
    int epoch = 0;             // 0 is the pre-training evaluation row
    std::uint64_t iteration = 0; // last optimizer step index of the epoch
    double alpha = 0, beta = 0, gamma = 0;
    double eta = 0;
    double label_loss = 0;
    bool has_label_loss = false;
    std::vector<double> psi; // per-probe means: body probes in order, then softmax
    double total_loss = 0;
    double train_acc = 0;
    bool has_train_acc = false;
    double test_acc = 0;
    bool has_test_acc = false;
    int recoveries = 0;
    double seconds = 0;
};

class MetricsCsv {
public:
    MetricsCsv() = default;

    explicit MetricsCsv(const std::filesystem::path& path) : path_(path) {
        out_.open(path, std::ios::trunc);
        if (!out_) throw Error("cannot write metrics csv " + path.string());
        out_ << "# mentee metrics v1\n";
        out_ << "epoch,iteration,alpha,beta,gamma,eta,label_loss,psi,total_loss,"
                "train_acc,test_acc,recoveries,seconds\n";
        out_.flush();
    }

    const std::filesystem::path& path() const { return path_; }

    void append(const MetricsRecord& r) {
        out_ << r.epoch << ',' << r.iteration << ',' << fmt_g(r.alpha) << ',' << fmt_g(r.beta)
             << ',' << fmt_g(r.gamma) << ',' << fmt_g(r.eta) << ',';
        if (r.has_label_loss) out_ << fmt_g(r.label_loss);
        out_ << ',';
        for (std::size_t i = 0; i < r.psi.size(); ++i) {
            if (i) out_ << ';';
            out_ << fmt_g(r.psi[i]);
        }
        out_ << ',' << fmt_g(r.total_loss) << ',';
        if (r.has_train_acc) out_ << fmt_g(r.train_acc);
        out_ << ',';
        if (r.has_test_acc) out_ << fmt_g(r.test_acc);
        out_ << ',' << r.recoveries << ',';
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
        out_ << buf << '\n';
        out_.flush();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// Minimal CSV-back reader used by tests and the grid summarizer.
struct ParsedMetrics {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static ParsedMetrics read(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw Error("cannot read metrics csv " + path.string());
        ParsedMetrics m;
        std::string line;
        bool header_done = false;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<std::string> cells;
            std::size_t start = 0;
            while (true) {
                const std::size_t comma = line.find(',', start);
                cells.push_back(line.substr(start, comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (!header_done) {
                m.header = cells;
                header_done = true;
            } else {
                m.rows.push_back(cells);
            }
        }
        return m;
    }

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error("metrics csv: no column '" + name + "'");
    }
};

} // namespace mentee
