#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "atytts/common.hpp"
#include "atytts/rng.hpp"

namespace aty::nn {

using Matrix = Eigen::MatrixXd;

// Reverse-mode autodiff over dense double matrices. Graphs are built
// dynamically per forward pass; parameters are persistent nodes whose
// gradients accumulate until an optimizer step clears them.
//
// Node ids come from a thread-local counter, so backward traversal order is
// a deterministic function of construction order. Training is single-writer;
// concurrent inference threads each build their own graphs.
struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Matrix::Zero(value.rows(), value.cols());
        }
    }
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor constant(Matrix v);
    static Tensor variable(Matrix v);  // trainable leaf

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    long rows() const { return node_->value.rows(); }
    long cols() const { return node_->value.cols(); }
    double scalar() const;  // value of a 1x1 tensor

    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor cmul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_rowvec(const Tensor& a, const Tensor& row);   // broadcast 1xC over rows
Tensor scale_t(const Tensor& a, const Tensor& s_1x1);    // multiply by a 1x1 tensor
Tensor pow_scalar(const Tensor& a, double p);            // elementwise power
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gather_rows(const Tensor& a, std::vector<int> idx);
Tensor slice_rows(const Tensor& a, long start, long count);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);  // each 1xC
Tensor mean_all(const Tensor& a);                    // 1x1
Tensor sum_all(const Tensor& a);                     // 1x1
Tensor stop_gradient(const Tensor& a);

// Mean squared error over all entries, 1x1.
Tensor mse(const Tensor& a, const Tensor& b);

// Mean negative log-likelihood of labels under row-wise softmax(logits), 1x1.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean binary cross entropy with logits over all entries, 1x1.
Tensor bce_with_logits(const Tensor& logits, const Matrix& targets);

// Backpropagate from a 1x1 root; accumulates into leaf gradients.
void backward(const Tensor& root);

// Plain-matrix MSE, the non-graph twin of the loss operations.
double mse_value(const Matrix& a, const Matrix& b);

// --- parameters ------------------------------------------------------------

class ParamStore {
  public:
    Tensor create(const std::string& name, Matrix init);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grad();
    size_t count() const { return items_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    void save(std::ostream& out) const;
    // Loads values into existing parameters; names and shapes must match.
    void load(std::istream& in);

    uint64_t value_fingerprint() const;  // hash of all parameter bytes

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

struct Linear {
    Tensor W, b;

    static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }
};

// --- optimizer --------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    // Applies one update from accumulated gradients, then clears them.
    void step();
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }

  private:
    std::vector<Tensor> params_;
    std::vector<Matrix> m_, v_;
    AdamConfig cfg_;
    long t_ = 0;
};

// Xavier-uniform init.
Matrix xavier_init(int rows, int cols, Rng& rng);

}  // namespace aty::nn
