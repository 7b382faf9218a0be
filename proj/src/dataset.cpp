#include "gplab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gplab/errors.hpp"
#include "gplab/format.hpp"

namespace gplab {

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw std::logic_error("dataset: label outside [0, C)");
        }
        ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

Vec Dataset::sample(std::size_t i) const {
    return Vec(features.data.begin() + i * features.cols,
               features.data.begin() + (i + 1) * features.cols);
}

Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dim,
                             std::size_t n_per_class, double separation, Rng& rng) {
    if (num_classes < 2) throw std::invalid_argument("gen_gaussian_mixture: need C >= 2");
    if (dim < 2) throw std::invalid_argument("gen_gaussian_mixture: need d >= 2");
    if (n_per_class == 0) throw std::invalid_argument("gen_gaussian_mixture: nonpositive count");
    if (separation <= 0.0) throw std::invalid_argument("gen_gaussian_mixture: nonpositive separation");

    const double radius =
        separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(num_classes)));
    Dataset ds;
    ds.num_classes = num_classes;
    ds.features = Matrix(num_classes * n_per_class, dim);
    ds.labels.resize(num_classes * n_per_class);

    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(num_classes);
        const double mx = radius * std::cos(angle);
        const double my = radius * std::sin(angle);
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            double* f = ds.features.data.data() + row * dim;
            for (std::size_t k = 0; k < dim; ++k) f[k] = rng.normal();
            f[0] += mx;
            f[1] += my;
            ds.labels[row] = static_cast<int>(c);
        }
    }
    return ds;
}

Dataset gen_longtail(const Dataset& base, double ratio, Rng& rng) {
    if (ratio < 1.0) throw std::invalid_argument("gen_longtail: ratio must be >= 1");
    const std::vector<std::size_t> counts = base.class_counts();
    const std::size_t n_max = counts.empty() ? 0 : counts.front();
    for (std::size_t n : counts) {
        if (n != n_max) throw std::invalid_argument("gen_longtail: base dataset must be balanced");
    }
    if (n_max == 0) throw std::invalid_argument("gen_longtail: empty base dataset");

    const std::size_t num_classes = base.num_classes;
    std::vector<std::size_t> keep(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double frac = std::pow(ratio, -static_cast<double>(c) /
                                                static_cast<double>(num_classes - 1));
        auto n = static_cast<std::size_t>(std::llround(static_cast<double>(n_max) * frac));
        if (n == 0) {
            std::cerr << "gen_longtail: class " << c << " count rounded to 0, clamping to 1\n";
            n = 1;
        }
        keep[c] = n;
    }

    // per class: shuffle that class's row indices, keep the first N_c, then
    // emit all selected rows in their original order
    std::vector<std::size_t> selected;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (static_cast<std::size_t>(base.labels[i]) == c) rows.push_back(i);
        }
        rng.shuffle(rows);
        rows.resize(keep[c]);
        selected.insert(selected.end(), rows.begin(), rows.end());
    }
    std::sort(selected.begin(), selected.end());

    Dataset out;
    out.num_classes = num_classes;
    out.features = Matrix(selected.size(), base.dim());
    out.labels.resize(selected.size());
    if (base.clean_labels) out.clean_labels.emplace(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const std::size_t src = selected[i];
        std::copy_n(base.features.data.begin() + src * base.dim(), base.dim(),
                    out.features.data.begin() + i * base.dim());
        out.labels[i] = base.labels[src];
        if (base.clean_labels) (*out.clean_labels)[i] = (*base.clean_labels)[src];
    }
    return out;
}

Dataset inject_symmetric_noise(const Dataset& ds, double rate, Rng& rng,
                               const std::vector<int>& class_subset) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("inject_symmetric_noise: rate outside [0, 1]");
    // the noise system: with no subset, all classes; with a subset, both the
    // flipped samples and the replacement labels stay inside it
    std::vector<int> universe;
    if (class_subset.empty()) {
        for (std::size_t c = 0; c < ds.num_classes; ++c) universe.push_back(static_cast<int>(c));
    } else {
        universe = class_subset;
        std::sort(universe.begin(), universe.end());
        universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
        for (int c : universe) {
            if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes) {
                throw std::invalid_argument("inject_symmetric_noise: subset class out of range");
            }
        }
        if (universe.size() < 2) {
            throw std::invalid_argument("inject_symmetric_noise: subset needs >= 2 classes");
        }
    }
    std::vector<int> position(ds.num_classes, -1);
    for (std::size_t i = 0; i < universe.size(); ++i) position[universe[i]] = static_cast<int>(i);

    Dataset out = ds;
    if (!out.clean_labels) out.clean_labels = ds.labels;
    const auto m = static_cast<std::uint64_t>(universe.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int pos = position[static_cast<std::size_t>(out.labels[i])];
        if (pos < 0) continue;
        const double coin = rng.uniform();
        if (coin >= rate) continue;
        const auto offset = static_cast<int>(rng.uniform_int(m - 1));
        out.labels[i] = universe[static_cast<std::size_t>(offset >= pos ? offset + 1 : offset)];
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary: no newline translation
    if (!out) throw ParseError("dataset: cannot open " + path.string() + " for writing");
    const bool has_clean = ds.clean_labels.has_value();
    out << "# C=" << ds.num_classes << " d=" << ds.dim() << " N=" << ds.size()
        << " has_clean=" << (has_clean ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* f = ds.features.data.data() + i * ds.dim();
        for (std::size_t k = 0; k < ds.dim(); ++k) out << fmt_double(f[k]) << ',';
        out << ds.labels[i];
        if (has_clean) out << ',' << (*ds.clean_labels)[i];
        out << '\n';
    }
    if (!out) throw ParseError("dataset: write failed for " + path.string());
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

long long header_field(const std::string& header, const std::string& key,
                       const std::filesystem::path& path) {
    const std::string tag = key + "=";
    const auto pos = header.find(tag);
    if (pos == std::string::npos) {
        throw ParseError("dataset " + path.string() + ": header missing field " + key);
    }
    const auto start = pos + tag.size();
    auto end = header.find(' ', start);
    if (end == std::string::npos) end = header.size();
    try {
        return parse_int(std::string_view(header).substr(start, end - start));
    } catch (const std::invalid_argument&) {
        throw ParseError("dataset " + path.string() + ": bad header field " + key);
    }
}
}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("dataset: cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header) || header.rfind("# ", 0) != 0) {
        throw ParseError("dataset " + path.string() + ": missing header line");
    }
    const long long c = header_field(header, "C", path);
    const long long d = header_field(header, "d", path);
    const long long n = header_field(header, "N", path);
    const long long has_clean = header_field(header, "has_clean", path);
    if (c < 2 || d < 1 || n < 0 || (has_clean != 0 && has_clean != 1)) {
        throw ParseError("dataset " + path.string() + ": invalid header values");
    }

    Dataset ds;
    ds.num_classes = static_cast<std::size_t>(c);
    ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    ds.labels.resize(static_cast<std::size_t>(n));
    if (has_clean) ds.clean_labels.emplace(static_cast<std::size_t>(n));

    const std::size_t expected_fields = static_cast<std::size_t>(d) + 1 + (has_clean ? 1 : 0);
    std::string line;
    std::size_t row = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (row >= static_cast<std::size_t>(n)) {
            throw ParseError("dataset " + path.string() + ": line " + std::to_string(line_no) +
                             ": more rows than header field N");
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != expected_fields) {
            throw ParseError("dataset " + path.string() + ": line " + std::to_string(line_no) +
                             ": expected " + std::to_string(expected_fields) + " fields, got " +
                             std::to_string(fields.size()));
        }
        try {
            for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
                ds.features(row, k) = parse_double(fields[k]);
            }
            const long long label = parse_int(fields[static_cast<std::size_t>(d)]);
            if (label < 0 || label >= c) {
                throw ParseError("dataset " + path.string() + ": line " + std::to_string(line_no) +
                                 ": label out of range");
            }
            ds.labels[row] = static_cast<int>(label);
            if (has_clean) {
                const long long clean = parse_int(fields[static_cast<std::size_t>(d) + 1]);
                if (clean < 0 || clean >= c) {
                    throw ParseError("dataset " + path.string() + ": line " +
                                     std::to_string(line_no) + ": clean_label out of range");
                }
                (*ds.clean_labels)[row] = static_cast<int>(clean);
            }
        } catch (const std::invalid_argument& e) {
            throw ParseError("dataset " + path.string() + ": line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        ++row;
    }
    if (row != static_cast<std::size_t>(n)) {
        throw ParseError("dataset " + path.string() + ": header field N=" + std::to_string(n) +
                         " but found " + std::to_string(row) + " rows");
    }
    return ds;
}

}  // namespace gplab
