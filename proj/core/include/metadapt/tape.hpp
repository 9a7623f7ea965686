#pragma once

#include "metadapt/matrix.hpp"

#include <cstddef>
#include <vector>

namespace metadapt {

using NodeId = std::size_t;

// Coefficient of a gradient-reversal pseudo-op: forward is the identity,
// backward multiplies the incoming adjoint by -lambda. Not a true derivative,
// so the finite-difference checker must be run on the unreversed graph.
struct GradReverseCoeff {
    double lambda = 1.0;
};

// Reverse-mode autodiff tape over dense real matrices.
//
// Nodes are appended in execution order, so ids are already a topological
// order and backward() is a single reverse sweep. A tape is single-owner;
// concurrency is achieved with independent tapes only. Loss-style ops
// (cross-entropy, entropy, discrepancy) are fused scalar reductions to keep
// saturated softmax inputs away from log(0).
class Tape {
public:
    enum class Op {
        Input,
        MatMul,
        Add,
        Mul,
        AddBias,
        Relu,
        Sum,
        Mean,
        Scale,
        L2NormalizeRows,
        L2NormalizeCols,
        GradReverse,
        SoftmaxCrossEntropy,
        BinaryCrossEntropy,
        Entropy,
        L1Discrepancy,
    };

    NodeId input(Matrix value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b); // elementwise, same shape
    NodeId mul(NodeId a, NodeId b); // elementwise, same shape
    NodeId add_bias(NodeId x, NodeId bias);
    NodeId relu(NodeId x);
    NodeId sum(NodeId x);  // -> 1x1
    NodeId mean(NodeId x); // -> 1x1
    NodeId scale(NodeId x, double c);
    NodeId l2_normalize_rows(NodeId x);
    NodeId l2_normalize_cols(NodeId x);

    // Forward value is bitwise identical to x; backward scales the adjoint
    // by -c.lambda.
    NodeId grad_reverse(NodeId x, GradReverseCoeff c);

    // Mean over rows of -log softmax(row)[label]; labels must lie in [0, K).
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);
    // Mean binary cross-entropy with logits over an n x 1 column; labels in {0,1}.
    NodeId binary_cross_entropy(NodeId logits, std::vector<int> labels);
    // Mean over rows of -sum_k p_k log p_k, p = softmax(row). In [0, ln K].
    NodeId entropy(NodeId logits);
    // Mean over rows of (1/K) sum_k |softmax(a)_k - softmax(b)_k|. In [0, 2/K].
    NodeId l1_discrepancy(NodeId a, NodeId b);

    const Matrix& value(NodeId id) const;
    double scalar(NodeId id) const; // value of a 1x1 node
    std::size_t size() const { return nodes_.size(); }

    // Adjoint of every node with respect to a scalar loss node. Nodes not on
    // a path to the loss get an all-zero adjoint of their own shape. Throws
    // NumericError naming the node if a NaN adjoint is encountered.
    std::vector<Matrix> backward(NodeId loss) const;

private:
    struct Node {
        Op op;
        NodeId a = 0;
        NodeId b = 0;
        int arity = 0;
        Matrix value;
        Matrix aux;              // cached softmax / sigmoid for fused losses
        Matrix aux2;             // second softmax for l1_discrepancy
        std::vector<int> labels; // CE / BCE targets
        double coeff = 0.0;      // Scale factor or GradReverse lambda
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
};

const char* op_name(Tape::Op op);

} // namespace metadapt
