#pragma once

#include <Eigen/Dense>

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ganinv/errors.hpp"

namespace ganinv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<int>;

inline int shape_size(const Shape& s) {
    int n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// Shape-tagged flat array, row-major. Images are CHW.
struct Tensor {
    Shape shape;
    Vec data;

    Tensor() = default;
    Tensor(Shape s, Vec d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_size(shape) != static_cast<int>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        for (int e : shape)
            if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        int n = shape_size(s);
        return Tensor(std::move(s), Vec::Zero(n));
    }

    static Tensor vector(Vec d) {
        Shape s{static_cast<int>(d.size())};
        return Tensor(std::move(s), std::move(d));
    }

    int size() const { return static_cast<int>(data.size()); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void require_shape(const Shape& s, const std::string& ctx) const {
        if (shape != s)
            throw ShapeError(ctx + ": expected shape " + shape_str(s) + ", got " + shape_str(shape));
    }

    void require_finite(const std::string& ctx) const {
        if (!data.allFinite()) throw NumericError(ctx + ": non-finite value in tensor");
    }
};

} // namespace ganinv
