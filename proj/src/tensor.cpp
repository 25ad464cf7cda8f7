#include "stv/tensor.hpp"

#include <sstream>

namespace stv {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape) {
    Tensor t;
    t.p_ = std::make_shared<TensorData>();
    t.p_->v.assign(static_cast<size_t>(numel(shape)), 0.0);
    t.p_->shape = std::move(shape);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& x : t.p_->v) x = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (numel(shape) != static_cast<int64_t>(values.size())) {
        throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.p_ = std::make_shared<TensorData>();
    t.p_->shape = std::move(shape);
    t.p_->v = std::move(values);
    return t;
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item: tensor has " + std::to_string(size()) + " elements");
    }
    return p_->v[0];
}

void Tensor::set_requires_grad(bool rg) {
    p_->requires_grad = rg;
    if (rg) ensure_grad();
}

std::vector<double>& Tensor::grad() {
    ensure_grad();
    return p_->g;
}

void Tensor::ensure_grad() {
    if (p_->g.size() != p_->v.size()) p_->g.assign(p_->v.size(), 0.0);
}

void Tensor::zero_grad() {
    p_->g.assign(p_->v.size(), 0.0);
}

}  // namespace stv
