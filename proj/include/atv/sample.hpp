#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace atv {

// Rectangular n x d data matrix, row major. The raw input of every test:
// real observations or points in the unit cube.
class Sample {
public:
    Sample(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows_ < 1) throw std::invalid_argument("Sample: need at least one row");
        if (cols_ < 2) throw std::invalid_argument("Sample: need at least two columns");
        if (data_.size() != rows_ * cols_) throw std::invalid_argument("Sample: size mismatch");
        for (double x : data_) {
            if (!std::isfinite(x)) throw std::invalid_argument("Sample: non-finite entry");
        }
    }

    static Sample from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::invalid_argument("Sample: need at least one row");
        const std::size_t d = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * d);
        for (const auto& r : rows) {
            if (r.size() != d) throw std::invalid_argument("Sample: ragged rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return Sample(rows.size(), d, std::move(flat));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

}  // namespace atv
