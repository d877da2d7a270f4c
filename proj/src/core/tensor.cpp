#include "tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace hamlet {

namespace {
Precision g_precision = Precision::f32;
// Thread-local so no-grad scopes in parallel workers stay independent.
thread_local bool g_grad_enabled = true;
}  // namespace

Precision default_precision() { return g_precision; }
void set_default_precision(Precision p) { g_precision = p; }

void round_to_precision(std::vector<double>& v) {
    if (g_precision != Precision::f32) return;
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
    ss << "]";
    return ss.str();
}

Tensor Tensor::wrap(std::vector<std::size_t> shape, std::shared_ptr<std::vector<double>> values) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    Tensor t = wrap(std::move(shape), std::make_shared<std::vector<double>>(n, 0.0));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = shape_numel(shape);
    auto vals = std::make_shared<std::vector<double>>(n, value);
    round_to_precision(*vals);
    return wrap(std::move(shape), std::move(vals));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw ConfigError("tensor: data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    auto vals = std::make_shared<std::vector<double>>(std::move(values));
    round_to_precision(*vals);
    return wrap(std::move(shape), std::move(vals));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> vals(n);
    for (double& x : vals) x = stddev * rng.normal();
    return from_data(std::move(shape), std::move(vals));
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> vals(n);
    for (double& x : vals) x = rng.uniform(lo, hi);
    return from_data(std::move(shape), std::move(vals));
}

const std::vector<std::size_t>& Tensor::shape() const {
    static const std::vector<std::size_t> empty;
    return impl_ ? impl_->shape : empty;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data->size() : 0; }

std::vector<double>& Tensor::data() { return *impl_->data; }
const std::vector<double>& Tensor::data() const { return *impl_->data; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
}

std::vector<double>& Tensor::grad() {
    if (!impl_->grad) impl_->grad = std::make_shared<std::vector<double>>(numel(), 0.0);
    return *impl_->grad;
}

const std::vector<double>* Tensor::grad_if_present() const {
    return impl_ && impl_->grad ? impl_->grad.get() : nullptr;
}

void Tensor::zero_grad() {
    if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

std::shared_ptr<Node>& Tensor::node() { return impl_->node; }
const std::shared_ptr<Node>& Tensor::node() const {
    static const std::shared_ptr<Node> none;
    return impl_ ? impl_->node : none;
}
void Tensor::set_node(std::shared_ptr<Node> n) { impl_->node = std::move(n); }

double Tensor::item() const {
    if (numel() != 1) throw ConfigError("item: tensor has " + std::to_string(numel()) + " elements");
    return (*impl_->data)[0];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;  // shared buffer
    return t;
}

void Tensor::backward() {
    if (numel() != 1) throw ConfigError("backward: loss must be a scalar, got shape " + shape_str(shape()));
    if (!requires_grad()) return;

    // Post-order DFS over the graph; reverse gives a valid execution order.
    std::vector<Tensor> order;
    std::unordered_set<const void*> seen;
    std::vector<std::pair<Tensor, std::size_t>> stack;
    stack.emplace_back(*this, 0);
    seen.insert(impl_id());
    while (!stack.empty()) {
        auto& [t, i] = stack.back();
        const auto& n = t.node();
        if (n && i < n->parents.size()) {
            Tensor p = n->parents[i++];
            if (p.requires_grad() && !seen.count(p.impl_id())) {
                seen.insert(p.impl_id());
                stack.emplace_back(std::move(p), 0);
            }
        } else {
            order.push_back(t);
            stack.pop_back();
        }
    }

    grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& n = it->node();
        if (n && n->backward) n->backward(*it);
    }
    if (default_precision() == Precision::f32) {
        for (auto& t : order)
            if (auto* g = const_cast<std::vector<double>*>(t.grad_if_present())) round_to_precision(*g);
    }
}

Tensor make_op_output(std::vector<std::size_t> shape, std::vector<double> values, const char* op,
                      std::vector<Tensor> parents, std::function<void(Tensor&)> backward) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool track = false;
    for (const auto& p : parents)
        if (p.requires_grad()) track = true;
    if (!track) return out;
    out.set_requires_grad(true);
    auto n = std::make_shared<Node>();
    n->op = op;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
    out.set_node(std::move(n));
    return out;
}

}  // namespace hamlet
