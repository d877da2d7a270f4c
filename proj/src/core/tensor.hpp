#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"
#include "util.hpp"

namespace hamlet {

/// Global scalar precision. Storage and arithmetic are double either way; in
/// f32 mode every op output (and every gradient/optimizer buffer) is rounded
/// through IEEE float, so results carry single-precision resolution and
/// serialize losslessly as float32.
enum class Precision { f32, f64 };

Precision default_precision();
void set_default_precision(Precision p);

/// Rounds a buffer through float when the global mode is f32.
void round_to_precision(std::vector<double>& v);

bool grad_enabled();

/// Disables graph construction for its scope (frozen-backbone forward passes).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class Tensor;

/// Backward-graph record: the op that produced a tensor, its inputs, and a
/// closure that scatters the output gradient into the parents' gradients.
struct Node {
    const char* op = "";
    std::vector<Tensor> parents;
    std::function<void(Tensor&)> backward;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t size(std::size_t axis) const { return shape().at(axis); }
    std::size_t numel() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    /// Gradient buffer; allocated zero-filled on first access.
    std::vector<double>& grad();
    const std::vector<double>* grad_if_present() const;
    void zero_grad();

    std::shared_ptr<Node>& node();
    const std::shared_ptr<Node>& node() const;
    void set_node(std::shared_ptr<Node> n);

    double item() const;

    /// Same data (shared buffer), no graph linkage, requires_grad off.
    Tensor detach() const;

    /// Reverse-mode sweep from a scalar. Gradients accumulate additively into
    /// every reachable requires_grad tensor until zeroed by the caller.
    void backward();

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
    const void* impl_id() const { return impl_.get(); }

private:
    struct Impl {
        std::vector<std::size_t> shape;
        std::shared_ptr<std::vector<double>> data;
        std::shared_ptr<std::vector<double>> grad;
        std::shared_ptr<Node> node;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;

    static Tensor wrap(std::vector<std::size_t> shape, std::shared_ptr<std::vector<double>> values);
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Output-tensor builder shared by all ops: rounds per precision mode and
/// attaches a backward node when grads are enabled and any parent needs them.
Tensor make_op_output(std::vector<std::size_t> shape, std::vector<double> values, const char* op,
                      std::vector<Tensor> parents, std::function<void(Tensor&)> backward);

}  // namespace hamlet
