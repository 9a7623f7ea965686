#include "metadapt/tape.hpp"

#include "metadapt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace metadapt {

namespace {

double clamped_log(double p) { return std::log(std::max(p, 1e-12)); }

} // namespace

const char* op_name(Tape::Op op) {
    switch (op) {
    case Tape::Op::Input: return "input";
    case Tape::Op::MatMul: return "matmul";
    case Tape::Op::Add: return "add";
    case Tape::Op::Mul: return "mul";
    case Tape::Op::AddBias: return "add_bias";
    case Tape::Op::Relu: return "relu";
    case Tape::Op::Sum: return "sum";
    case Tape::Op::Mean: return "mean";
    case Tape::Op::Scale: return "scale";
    case Tape::Op::L2NormalizeRows: return "l2_normalize_rows";
    case Tape::Op::L2NormalizeCols: return "l2_normalize_cols";
    case Tape::Op::GradReverse: return "grad_reverse";
    case Tape::Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Tape::Op::BinaryCrossEntropy: return "binary_cross_entropy";
    case Tape::Op::Entropy: return "entropy";
    case Tape::Op::L1Discrepancy: return "l1_discrepancy";
    }
    return "?";
}

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const Tape::Node& Tape::node(NodeId id) const {
    require(id < nodes_.size(), "Tape: node id out of range");
    return nodes_[id];
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const {
    const Matrix& v = value(id);
    require(v.rows == 1 && v.cols == 1, "Tape::scalar: node is not 1x1");
    return v.data[0];
}

NodeId Tape::input(Matrix value) {
    Node n;
    n.op = Op::Input;
    n.arity = 0;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.arity = 2;
    n.value = metadapt::matmul(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.arity = 2;
    n.value = metadapt::add(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.arity = 2;
    n.value = hadamard(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    Node n;
    n.op = Op::AddBias;
    n.a = x;
    n.b = bias;
    n.arity = 2;
    n.value = add_bias_rows(value(x), value(bias));
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.a = x;
    n.arity = 1;
    n.value = metadapt::relu(value(x));
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    require(value(x).size() > 0, "sum: empty input");
    Node n;
    n.op = Op::Sum;
    n.a = x;
    n.arity = 1;
    double acc = 0.0;
    for (double v : value(x).data) acc += v;
    n.value = Matrix(1, 1, acc);
    return push(std::move(n));
}

NodeId Tape::mean(NodeId x) {
    require(value(x).size() > 0, "mean: empty input");
    Node n;
    n.op = Op::Mean;
    n.a = x;
    n.arity = 1;
    double acc = 0.0;
    for (double v : value(x).data) acc += v;
    n.value = Matrix(1, 1, acc / static_cast<double>(value(x).size()));
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = x;
    n.arity = 1;
    n.coeff = c;
    n.value = metadapt::scale(value(x), c);
    return push(std::move(n));
}

NodeId Tape::l2_normalize_rows(NodeId x) {
    const Matrix& v = value(x);
    Node n;
    n.op = Op::L2NormalizeRows;
    n.a = x;
    n.arity = 1;
    n.value = metadapt::l2_normalize_rows(v);
    n.aux = Matrix(v.rows, 1);
    for (std::size_t i = 0; i < v.rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < v.cols; ++j) sq += v(i, j) * v(i, j);
        n.aux(i, 0) = std::max(std::sqrt(sq), 1e-12);
    }
    return push(std::move(n));
}

NodeId Tape::l2_normalize_cols(NodeId x) {
    const Matrix& v = value(x);
    Node n;
    n.op = Op::L2NormalizeCols;
    n.a = x;
    n.arity = 1;
    n.value = metadapt::l2_normalize_cols(v);
    n.aux = Matrix(1, v.cols);
    for (std::size_t j = 0; j < v.cols; ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < v.rows; ++i) sq += v(i, j) * v(i, j);
        n.aux(0, j) = std::max(std::sqrt(sq), 1e-12);
    }
    return push(std::move(n));
}

NodeId Tape::grad_reverse(NodeId x, GradReverseCoeff c) {
    require(c.lambda >= 0.0, "grad_reverse: lambda must be nonnegative");
    Node n;
    n.op = Op::GradReverse;
    n.a = x;
    n.arity = 1;
    n.coeff = c.lambda;
    n.value = value(x); // forward identity, bitwise
    return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Matrix& z = value(logits);
    require(z.rows > 0 && z.cols > 0, "softmax_cross_entropy: empty logits");
    require(labels.size() == z.rows, "softmax_cross_entropy: labels length != rows");
    for (int y : labels)
        require(y >= 0 && static_cast<std::size_t>(y) < z.cols,
                "softmax_cross_entropy: label out of range [0, K)");
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.a = logits;
    n.arity = 1;
    n.aux = softmax_rows(z);
    const std::vector<double> lse = logsumexp_rows(z);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i)
        acc += lse[i] - z(i, static_cast<std::size_t>(labels[i]));
    n.value = Matrix(1, 1, acc / static_cast<double>(z.rows));
    n.labels = std::move(labels);
    return push(std::move(n));
}

NodeId Tape::binary_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Matrix& z = value(logits);
    require(z.cols == 1 && z.rows > 0, "binary_cross_entropy: logits must be n x 1");
    require(labels.size() == z.rows, "binary_cross_entropy: labels length != rows");
    for (int y : labels)
        require(y == 0 || y == 1, "binary_cross_entropy: label must be 0 or 1");
    Node n;
    n.op = Op::BinaryCrossEntropy;
    n.a = logits;
    n.arity = 1;
    n.aux = Matrix(z.rows, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const double zi = z(i, 0);
        const double y = static_cast<double>(labels[i]);
        acc += std::max(zi, 0.0) - zi * y + std::log1p(std::exp(-std::abs(zi)));
        n.aux(i, 0) = 1.0 / (1.0 + std::exp(-zi));
    }
    n.value = Matrix(1, 1, acc / static_cast<double>(z.rows));
    n.labels = std::move(labels);
    return push(std::move(n));
}

NodeId Tape::entropy(NodeId logits) {
    const Matrix& z = value(logits);
    require(z.cols >= 2, "entropy: needs K >= 2 classes");
    require(z.rows > 0, "entropy: empty logits");
    Node n;
    n.op = Op::Entropy;
    n.a = logits;
    n.arity = 1;
    n.aux = softmax_rows(z);
    n.aux2 = Matrix(z.rows, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        double h = 0.0;
        for (std::size_t k = 0; k < z.cols; ++k) {
            const double p = n.aux(i, k);
            h -= p * clamped_log(p);
        }
        n.aux2(i, 0) = h;
        acc += h;
    }
    n.value = Matrix(1, 1, acc / static_cast<double>(z.rows));
    return push(std::move(n));
}

NodeId Tape::l1_discrepancy(NodeId a, NodeId b) {
    const Matrix& za = value(a);
    const Matrix& zb = value(b);
    require(za.same_shape(zb), "l1_discrepancy: shape mismatch");
    require(za.rows > 0 && za.cols > 0, "l1_discrepancy: empty logits");
    Node n;
    n.op = Op::L1Discrepancy;
    n.a = a;
    n.b = b;
    n.arity = 2;
    n.aux = softmax_rows(za);
    n.aux2 = softmax_rows(zb);
    double acc = 0.0;
    for (std::size_t i = 0; i < za.rows; ++i)
        for (std::size_t k = 0; k < za.cols; ++k) acc += std::abs(n.aux(i, k) - n.aux2(i, k));
    acc /= static_cast<double>(za.rows * za.cols);
    n.value = Matrix(1, 1, acc);
    return push(std::move(n));
}

std::vector<Matrix> Tape::backward(NodeId loss) const {
    const Matrix& lv = value(loss);
    require(lv.rows == 1 && lv.cols == 1, "backward: loss node must be scalar (1x1)");

    std::vector<Matrix> adj(nodes_.size());
    std::vector<char> touched(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        adj[i] = Matrix(nodes_[i].value.rows, nodes_[i].value.cols);
    adj[loss](0, 0) = 1.0;
    touched[loss] = 1;

    auto check_nan = [&](NodeId id) {
        for (double v : adj[id].data)
            if (std::isnan(v))
                throw NumericError("backward: NaN adjoint at node " + std::to_string(id) +
                                   " (" + op_name(nodes_[id].op) + ")");
    };

    for (std::size_t idx = loss + 1; idx-- > 0;) {
        if (!touched[idx]) continue;
        check_nan(idx);
        const Node& n = nodes_[idx];
        const Matrix& g = adj[idx];
        if (n.arity >= 1) touched[n.a] = 1;
        if (n.arity >= 2) touched[n.b] = 1;

        switch (n.op) {
        case Op::Input:
            break;
        case Op::MatMul: {
            const Matrix da = matmul_nt(g, nodes_[n.b].value);
            const Matrix db = matmul_tn(nodes_[n.a].value, g);
            for (std::size_t i = 0; i < da.size(); ++i) adj[n.a].data[i] += da.data[i];
            for (std::size_t i = 0; i < db.size(); ++i) adj[n.b].data[i] += db.data[i];
            break;
        }
        case Op::Add:
            for (std::size_t i = 0; i < g.size(); ++i) {
                adj[n.a].data[i] += g.data[i];
                adj[n.b].data[i] += g.data[i];
            }
            break;
        case Op::Mul:
            for (std::size_t i = 0; i < g.size(); ++i) {
                adj[n.a].data[i] += g.data[i] * nodes_[n.b].value.data[i];
                adj[n.b].data[i] += g.data[i] * nodes_[n.a].value.data[i];
            }
            break;
        case Op::AddBias: {
            for (std::size_t i = 0; i < g.size(); ++i) adj[n.a].data[i] += g.data[i];
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) adj[n.b](0, j) += g(i, j);
            break;
        }
        case Op::Relu: {
            const Matrix& x = nodes_[n.a].value;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x.data[i] > 0.0) adj[n.a].data[i] += g.data[i];
            break;
        }
        case Op::Sum: {
            const double gv = g(0, 0);
            for (double& v : adj[n.a].data) v += gv;
            break;
        }
        case Op::Mean: {
            const double gv = g(0, 0) / static_cast<double>(adj[n.a].size());
            for (double& v : adj[n.a].data) v += gv;
            break;
        }
        case Op::Scale:
            for (std::size_t i = 0; i < g.size(); ++i) adj[n.a].data[i] += n.coeff * g.data[i];
            break;
        case Op::L2NormalizeRows: {
            const Matrix& y = n.value;
            for (std::size_t i = 0; i < g.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
                const double inv = 1.0 / n.aux(i, 0);
                for (std::size_t j = 0; j < g.cols; ++j)
                    adj[n.a](i, j) += (g(i, j) - dot * y(i, j)) * inv;
            }
            break;
        }
        case Op::L2NormalizeCols: {
            const Matrix& y = n.value;
            for (std::size_t j = 0; j < g.cols; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < g.rows; ++i) dot += g(i, j) * y(i, j);
                const double inv = 1.0 / n.aux(0, j);
                for (std::size_t i = 0; i < g.rows; ++i)
                    adj[n.a](i, j) += (g(i, j) - dot * y(i, j)) * inv;
            }
            break;
        }
        case Op::GradReverse:
            for (std::size_t i = 0; i < g.size(); ++i) adj[n.a].data[i] += -n.coeff * g.data[i];
            break;
        case Op::SoftmaxCrossEntropy: {
            const double gv = g(0, 0) / static_cast<double>(n.aux.rows);
            for (std::size_t i = 0; i < n.aux.rows; ++i)
                for (std::size_t k = 0; k < n.aux.cols; ++k) {
                    const double onehot =
                        (static_cast<std::size_t>(n.labels[i]) == k) ? 1.0 : 0.0;
                    adj[n.a](i, k) += gv * (n.aux(i, k) - onehot);
                }
            break;
        }
        case Op::BinaryCrossEntropy: {
            const double gv = g(0, 0) / static_cast<double>(n.aux.rows);
            for (std::size_t i = 0; i < n.aux.rows; ++i)
                adj[n.a](i, 0) += gv * (n.aux(i, 0) - static_cast<double>(n.labels[i]));
            break;
        }
        case Op::Entropy: {
            const double gv = g(0, 0) / static_cast<double>(n.aux.rows);
            for (std::size_t i = 0; i < n.aux.rows; ++i) {
                const double h = n.aux2(i, 0);
                for (std::size_t k = 0; k < n.aux.cols; ++k) {
                    const double p = n.aux(i, k);
                    adj[n.a](i, k) += gv * (-p * (clamped_log(p) + h));
                }
            }
            break;
        }
        case Op::L1Discrepancy: {
            const Matrix& p = n.aux;
            const Matrix& q = n.aux2;
            const double gv = g(0, 0) / static_cast<double>(p.rows * p.cols);
            for (std::size_t i = 0; i < p.rows; ++i) {
                double sp = 0.0;
                double sq = 0.0;
                for (std::size_t k = 0; k < p.cols; ++k) {
                    const double d = p(i, k) - q(i, k);
                    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    sp += s * p(i, k);
                    sq += s * q(i, k);
                }
                for (std::size_t k = 0; k < p.cols; ++k) {
                    const double d = p(i, k) - q(i, k);
                    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    adj[n.a](i, k) += gv * p(i, k) * (s - sp);
                    adj[n.b](i, k) += gv * -q(i, k) * (s - sq);
                }
            }
            break;
        }
        }
    }
    return adj;
}

} // namespace metadapt
