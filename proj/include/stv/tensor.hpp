#ifndef STV_TENSOR_HPP
#define STV_TENSOR_HPP

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "stv/common.hpp"

namespace stv {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // allocated lazily; same length as v when present
    bool requires_grad = false;
};

// Value-semantic handle over shared storage. Copies alias; forward ops always
// allocate fresh outputs, so aliasing is only ever observable through grads.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({}, {value}); }
    // Leaf with gradient storage.
    static Tensor param(Shape shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int64_t rank() const { return static_cast<int64_t>(p_->shape.size()); }
    int64_t dim(int64_t i) const { return p_->shape[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(p_->v.size()); }
    int64_t last_dim() const { return p_->shape.empty() ? 1 : p_->shape.back(); }

    std::vector<double>& values() { return p_->v; }
    const std::vector<double>& values() const { return p_->v; }
    double item() const;

    bool requires_grad() const { return p_ && p_->requires_grad; }
    void set_requires_grad(bool rg);
    std::vector<double>& grad();
    const std::vector<double>& grad() const { return p_->g; }
    void ensure_grad();
    void zero_grad();

    std::shared_ptr<TensorData> data_ptr() const { return p_; }

  private:
    std::shared_ptr<TensorData> p_;
};

}  // namespace stv

#endif  // STV_TENSOR_HPP
