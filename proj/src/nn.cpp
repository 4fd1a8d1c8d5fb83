#include "atytts/nn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace aty::nn {

namespace {

thread_local uint64_t g_next_id = 1;

std::shared_ptr<Node> make_node(Matrix v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->id = g_next_id++;
    return n;
}

Tensor unary(const Tensor& a, Matrix value, std::function<void(Node&, Node&)> back) {
    auto n = make_node(std::move(value), a.requires_grad());
    if (n->requires_grad) {
        n->parents = {a.node()};
        auto pa = a.node().get();
        n->backprop = [pa, back = std::move(back)](Node& self) { back(self, *pa); };
    }
    return Tensor(n);
}

Tensor binary(const Tensor& a, const Tensor& b, Matrix value,
              std::function<void(Node&, Node&, Node&)> back) {
    auto n = make_node(std::move(value), a.requires_grad() || b.requires_grad());
    if (n->requires_grad) {
        n->parents = {a.node(), b.node()};
        auto pa = a.node().get();
        auto pb = b.node().get();
        n->backprop = [pa, pb, back = std::move(back)](Node& self) { back(self, *pa, *pb); };
    }
    return Tensor(n);
}

void accum(Node& p, const Matrix& g) {
    if (!p.requires_grad) return;
    p.ensure_grad();
    p.grad += g;
}

}  // namespace

Tensor Tensor::constant(Matrix v) { return Tensor(make_node(std::move(v), false)); }
Tensor Tensor::variable(Matrix v) { return Tensor(make_node(std::move(v), true)); }

double Tensor::scalar() const {
    require(rows() == 1 && cols() == 1, "scalar(): tensor is not 1x1");
    return node_->value(0, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
    return binary(a, b, a.value() * b.value(), [](Node& self, Node& pa, Node& pb) {
        if (pa.requires_grad) accum(pa, self.grad * pb.value.transpose());
        if (pb.requires_grad) accum(pb, pa.value.transpose() * self.grad);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    return binary(a, b, a.value() + b.value(), [](Node& self, Node& pa, Node& pb) {
        accum(pa, self.grad);
        accum(pb, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    return binary(a, b, a.value() - b.value(), [](Node& self, Node& pa, Node& pb) {
        accum(pa, self.grad);
        if (pb.requires_grad) accum(pb, -self.grad);
    });
}

Tensor cmul(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
    return binary(a, b, a.value().cwiseProduct(b.value()), [](Node& self, Node& pa, Node& pb) {
        if (pa.requires_grad) accum(pa, self.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) accum(pb, self.grad.cwiseProduct(pa.value));
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, a.value() * s, [s](Node& self, Node& pa) { accum(pa, self.grad * s); });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "add_rowvec: row must be 1 x cols(a)");
    Matrix v = a.value();
    v.rowwise() += row.value().row(0);
    return binary(a, row, std::move(v), [](Node& self, Node& pa, Node& pb) {
        accum(pa, self.grad);
        if (pb.requires_grad) {
            pb.ensure_grad();
            pb.grad.row(0) += self.grad.colwise().sum();
        }
    });
}

Tensor scale_t(const Tensor& a, const Tensor& s) {
    require(s.rows() == 1 && s.cols() == 1, "scale_t: scale must be 1x1");
    double sv = s.value()(0, 0);
    return binary(a, s, a.value() * sv, [sv](Node& self, Node& pa, Node& pb) {
        if (pa.requires_grad) accum(pa, self.grad * sv);
        if (pb.requires_grad) {
            pb.ensure_grad();
            pb.grad(0, 0) += self.grad.cwiseProduct(pa.value).sum();
        }
    });
}

Tensor pow_scalar(const Tensor& a, double p) {
    Matrix v = a.value().array().pow(p).matrix();
    return unary(a, std::move(v), [p](Node& self, Node& pa) {
        if (!pa.requires_grad) return;
        Matrix d = p * pa.value.array().pow(p - 1.0);
        accum(pa, self.grad.cwiseProduct(d));
    });
}

Tensor tanh_t(const Tensor& a) {
    Matrix v = a.value().array().tanh().matrix();
    auto n = make_node(std::move(v), a.requires_grad());
    if (n->requires_grad) {
        n->parents = {a.node()};
        auto pa = a.node().get();
        auto self_ptr = n.get();
        n->backprop = [pa, self_ptr](Node& self) {
            (void)self_ptr;
            Matrix d = 1.0 - self.value.array().square();
            accum(*pa, self.grad.cwiseProduct(d));
        };
    }
    return Tensor(n);
}

Tensor sigmoid(const Tensor& a) {
    Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    auto n = make_node(std::move(v), a.requires_grad());
    if (n->requires_grad) {
        n->parents = {a.node()};
        auto pa = a.node().get();
        n->backprop = [pa](Node& self) {
            Matrix d = self.value.array() * (1.0 - self.value.array());
            accum(*pa, self.grad.cwiseProduct(d));
        };
    }
    return Tensor(n);
}

Tensor gather_rows(const Tensor& a, std::vector<int> idx) {
    Matrix v(static_cast<long>(idx.size()), a.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && idx[i] < a.rows(), "gather_rows: index out of range");
        v.row(static_cast<long>(i)) = a.value().row(idx[i]);
    }
    return unary(a, std::move(v), [idx = std::move(idx)](Node& self, Node& pa) {
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i) {
            pa.grad.row(idx[i]) += self.grad.row(static_cast<long>(i));
        }
    });
}

Tensor slice_rows(const Tensor& a, long start, long count) {
    require(start >= 0 && count >= 0 && start + count <= a.rows(),
            "slice_rows: range out of bounds");
    Matrix v = a.value().middleRows(start, count);
    return unary(a, std::move(v), [start, count](Node& self, Node& pa) {
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        pa.grad.middleRows(start, count) += self.grad;
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows(), "concat_cols: row counts disagree");
    Matrix v(a.rows(), a.cols() + b.cols());
    v << a.value(), b.value();
    long ac = a.cols();
    return binary(a, b, std::move(v), [ac](Node& self, Node& pa, Node& pb) {
        if (pa.requires_grad) accum(pa, self.grad.leftCols(ac));
        if (pb.requires_grad) accum(pb, self.grad.rightCols(self.grad.cols() - ac));
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    require(!rows.empty(), "stack_rows: empty input");
    long cols = rows[0].cols();
    Matrix v(static_cast<long>(rows.size()), cols);
    bool any_grad = false;
    for (size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].rows() == 1 && rows[i].cols() == cols, "stack_rows: rows must be 1xC");
        v.row(static_cast<long>(i)) = rows[i].value();
        any_grad = any_grad || rows[i].requires_grad();
    }
    auto n = make_node(std::move(v), any_grad);
    if (any_grad) {
        for (const auto& r : rows) n->parents.push_back(r.node());
        std::vector<Node*> raw;
        raw.reserve(rows.size());
        for (const auto& r : rows) raw.push_back(r.node().get());
        n->backprop = [raw = std::move(raw)](Node& self) {
            for (size_t i = 0; i < raw.size(); ++i) {
                if (raw[i]->requires_grad) {
                    raw[i]->ensure_grad();
                    raw[i]->grad += self.grad.row(static_cast<long>(i));
                }
            }
        };
    }
    return Tensor(n);
}

Tensor mean_all(const Tensor& a) {
    double denom = static_cast<double>(a.rows() * a.cols());
    Matrix v(1, 1);
    v(0, 0) = a.value().sum() / denom;
    return unary(a, std::move(v), [denom](Node& self, Node& pa) {
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        pa.grad.array() += self.grad(0, 0) / denom;
    });
}

Tensor sum_all(const Tensor& a) {
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return unary(a, std::move(v), [](Node& self, Node& pa) {
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        pa.grad.array() += self.grad(0, 0);
    });
}

Tensor stop_gradient(const Tensor& a) { return Tensor::constant(a.value()); }

Tensor mse(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shape mismatch");
    Tensor d = sub(a, b);
    return mean_all(cmul(d, d));
}

double mse_value(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shape mismatch");
    return (a - b).squaredNorm() / static_cast<double>(a.rows() * a.cols());
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require(static_cast<long>(labels.size()) == logits.rows(),
            "cross_entropy: one label per row required");
    const Matrix& x = logits.value();
    const long n = x.rows(), c = x.cols();
    Matrix softmax(n, c);
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        require(labels[i] >= 0 && labels[i] < c, "cross_entropy: label out of range");
        double mx = x.row(i).maxCoeff();
        Eigen::ArrayXd e = (x.row(i).array() - mx).exp();
        double z = e.sum();
        softmax.row(i) = (e / z).matrix();
        loss += -(x(i, labels[i]) - mx - std::log(z));
    }
    Matrix v(1, 1);
    v(0, 0) = loss / static_cast<double>(n);
    Tensor out = unary(logits, std::move(v),
                       [softmax = std::move(softmax), labels](Node& self, Node& pa) {
                           if (!pa.requires_grad) return;
                           pa.ensure_grad();
                           Matrix g = softmax;
                           for (long i = 0; i < g.rows(); ++i) g(i, labels[i]) -= 1.0;
                           pa.grad += self.grad(0, 0) / static_cast<double>(g.rows()) * g;
                       });
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const Matrix& targets) {
    const Matrix& x = logits.value();
    require(x.rows() == targets.rows() && x.cols() == targets.cols(),
            "bce_with_logits: shape mismatch");
    // max(x,0) - x*t + log(1 + exp(-|x|)), numerically stable.
    Eigen::ArrayXXd xa = x.array();
    Eigen::ArrayXXd ta = targets.array();
    Eigen::ArrayXXd loss = xa.max(0.0) - xa * ta + (1.0 + (-xa.abs()).exp()).log();
    double denom = static_cast<double>(x.rows() * x.cols());
    Matrix v(1, 1);
    v(0, 0) = loss.sum() / denom;
    Matrix sig = (1.0 / (1.0 + (-xa).exp())).matrix();
    return unary(logits, std::move(v),
                 [sig = std::move(sig), targets, denom](Node& self, Node& pa) {
                     if (!pa.requires_grad) return;
                     pa.ensure_grad();
                     pa.grad += self.grad(0, 0) / denom * (sig - targets);
                 });
}

void backward(const Tensor& root) {
    require(root.rows() == 1 && root.cols() == 1, "backward: root must be 1x1");
    if (!root.requires_grad()) return;

    // Reverse construction order is a valid topological order: parents are
    // always created before children.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) {
                stack.push_back(p.get());
            }
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id > b->id; });

    root.node()->ensure_grad();
    root.node()->grad(0, 0) += 1.0;
    for (Node* n : nodes) {
        if (n->backprop) n->backprop(*n);
    }
}

// --- parameters --------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, Matrix init) {
    require(!has(name), "parameter '" + name + "' already exists");
    Tensor t = Tensor::variable(std::move(init));
    items_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw InvalidInput("parameter '" + name + "' not found");
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return true;
    }
    return false;
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : items_) {
        t.node()->grad.setZero(t.rows(), t.cols());
    }
}

void ParamStore::save(std::ostream& out) const {
    uint64_t count = items_.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : items_) {
        uint64_t len = name.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(name.data(), static_cast<std::streamsize>(len));
        uint64_t r = static_cast<uint64_t>(t.rows()), c = static_cast<uint64_t>(t.cols());
        out.write(reinterpret_cast<const char*>(&r), sizeof(r));
        out.write(reinterpret_cast<const char*>(&c), sizeof(c));
        out.write(reinterpret_cast<const char*>(t.value().data()),
                  static_cast<std::streamsize>(sizeof(double) * r * c));
    }
}

void ParamStore::load(std::istream& in) {
    uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    require(in.good() && count == items_.size(),
            "parameter payload: count does not match model architecture");
    for (auto& [name, t] : items_) {
        uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string got(len, '\0');
        in.read(got.data(), static_cast<std::streamsize>(len));
        require(got == name, "parameter payload: expected '" + name + "', found '" + got + "'");
        uint64_t r = 0, c = 0;
        in.read(reinterpret_cast<char*>(&r), sizeof(r));
        in.read(reinterpret_cast<char*>(&c), sizeof(c));
        require(r == static_cast<uint64_t>(t.rows()) && c == static_cast<uint64_t>(t.cols()),
                "parameter payload: shape mismatch for '" + name + "'");
        in.read(reinterpret_cast<char*>(t.node()->value.data()),
                static_cast<std::streamsize>(sizeof(double) * r * c));
        require(in.good(), "parameter payload: truncated");
    }
}

uint64_t ParamStore::value_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : items_) {
        h = fnv1a(name, h);
        h = fnv1a_bytes(t.value().data(), sizeof(double) * static_cast<size_t>(t.value().size()), h);
    }
    return h;
}

Matrix xavier_init(int rows, int cols, Rng& rng) {
    double s = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-s, s);
    }
    return m;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
    Linear l;
    l.W = store.create(name + ".W", xavier_init(in, out, rng));
    l.b = store.create(name + ".b", Matrix::Zero(1, out));
    return l;
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Node& n = *params_[i].node();
        n.ensure_grad();
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * n.grad;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * n.grad.cwiseProduct(n.grad);
        Matrix mhat = m_[i] / bc1;
        Matrix vhat = v_[i] / bc2;
        n.value.array() -= cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
        n.grad.setZero();
    }
}

}  // namespace aty::nn
