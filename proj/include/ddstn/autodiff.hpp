#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ddstn {

/// Tape-style reverse-mode autodiff graph. Nodes are append-only, parents
/// always precede children, and the graph is rebuilt for every training step.
/// Single-threaded per graph.
class Graph;

struct Var {
    Graph* g = nullptr;
    std::size_t id = 0;
};

class Graph {
    enum class Op {
        Leaf,
        Add,
        Sub,
        Mul,
        Scale,        // aux: factor
        AddScalar,    // aux: addend
        Relu,
        Square,
        Sqrt,
        Exp,
        Sum,
        Mean,
        Matmul,
        Transpose,
        AddRowVec,    // mat (n x m) + row (1 x m)
        AddColVec,    // mat (n x m) + col (n x 1)
        AddScalarVar, // mat + scalar tensor (broadcast)
        SumAxis1,     // (n x m) -> (n x 1)
        Conv2dValid,
        MaxPool2,
        Reshape,
        ConcatRows,   // stack k row-compatible matrices vertically
    };

    struct Node {
        Op op;
        std::vector<std::size_t> parents;
        Tensor value;
        double aux = 0.0;
        std::vector<std::size_t> aux_shape;    // Reshape: parent shape
        std::vector<std::size_t> pool_argmax;  // MaxPool2: flat source index per output cell
    };

public:
    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return grads_[v.id]; }

    Var leaf(Tensor t) { return push({Op::Leaf, {}, std::move(t)}); }

    Var add(Var a, Var b) {
        require_same_shape("add", a, b);
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += value(b)[i];
        return push({Op::Add, {a.id, b.id}, std::move(out)});
    }

    Var sub(Var a, Var b) {
        require_same_shape("sub", a, b);
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= value(b)[i];
        return push({Op::Sub, {a.id, b.id}, std::move(out)});
    }

    Var mul(Var a, Var b) {
        require_same_shape("mul", a, b);
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= value(b)[i];
        return push({Op::Mul, {a.id, b.id}, std::move(out)});
    }

    Var scale(Var a, double c) {
        Tensor out = value(a);
        for (double& v : out.values()) v *= c;
        Node n{Op::Scale, {a.id}, std::move(out)};
        n.aux = c;
        return push(std::move(n));
    }

    Var add_scalar(Var a, double c) {
        Tensor out = value(a);
        for (double& v : out.values()) v += c;
        Node n{Op::AddScalar, {a.id}, std::move(out)};
        n.aux = c;
        return push(std::move(n));
    }

    Var relu(Var a) {
        Tensor out = value(a);
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return push({Op::Relu, {a.id}, std::move(out)});
    }

    /// Alias kept for callers thinking in clamp terms.
    Var clamp_min0(Var a) { return relu(a); }

    Var square(Var a) {
        Tensor out = value(a);
        for (double& v : out.values()) v *= v;
        return push({Op::Square, {a.id}, std::move(out)});
    }

    Var sqrt_(Var a) {
        Tensor out = value(a);
        for (double& v : out.values()) v = std::sqrt(v);
        return push({Op::Sqrt, {a.id}, std::move(out)});
    }

    Var exp_(Var a) {
        Tensor out = value(a);
        for (double& v : out.values()) v = std::exp(v);
        return push({Op::Exp, {a.id}, std::move(out)});
    }

    Var sum(Var a) {
        double s = 0.0;
        for (double v : value(a).values()) s += v;
        return push({Op::Sum, {a.id}, Tensor::scalar(s)});
    }

    Var mean(Var a) {
        if (value(a).numel() == 0) throw ContractError("mean of empty tensor");
        double s = 0.0;
        for (double v : value(a).values()) s += v;
        return push({Op::Mean, {a.id}, Tensor::scalar(s / double(value(a).numel()))});
    }

    Var matmul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows()) {
            throw DimensionError("matmul shape mismatch: " + Tensor::shape_str(A.shape()) +
                                 " x " + Tensor::shape_str(B.shape()));
        }
        const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t l = 0; l < k; ++l) {
                const double a_il = A.at(i, l);
                if (a_il == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out.at(i, j) += a_il * B.at(l, j);
            }
        }
        return push({Op::Matmul, {a.id, b.id}, std::move(out)});
    }

    Var transpose(Var a) {
        const Tensor& A = value(a);
        if (A.ndim() != 2) throw DimensionError("transpose requires a matrix");
        Tensor out({A.cols(), A.rows()});
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
        return push({Op::Transpose, {a.id}, std::move(out)});
    }

    Var add_rowvec(Var mat, Var row) {
        const Tensor& M = value(mat);
        const Tensor& r = value(row);
        if (M.ndim() != 2 || r.rows() != 1 || r.cols() != M.cols()) {
            throw DimensionError("add_rowvec shape mismatch: " + Tensor::shape_str(M.shape()) +
                                 " + " + Tensor::shape_str(r.shape()));
        }
        Tensor out = M;
        for (std::size_t i = 0; i < M.rows(); ++i)
            for (std::size_t j = 0; j < M.cols(); ++j) out.at(i, j) += r[j];
        return push({Op::AddRowVec, {mat.id, row.id}, std::move(out)});
    }

    Var add_colvec(Var mat, Var col) {
        const Tensor& M = value(mat);
        const Tensor& c = value(col);
        if (M.ndim() != 2 || c.cols() != 1 || c.rows() != M.rows()) {
            throw DimensionError("add_colvec shape mismatch: " + Tensor::shape_str(M.shape()) +
                                 " + " + Tensor::shape_str(c.shape()));
        }
        Tensor out = M;
        for (std::size_t i = 0; i < M.rows(); ++i)
            for (std::size_t j = 0; j < M.cols(); ++j) out.at(i, j) += c[i];
        return push({Op::AddColVec, {mat.id, col.id}, std::move(out)});
    }

    Var add_scalar_var(Var mat, Var s) {
        if (value(s).numel() != 1) throw ContractError("add_scalar_var expects a 1-element tensor");
        Tensor out = value(mat);
        const double v = value(s)[0];
        for (double& x : out.values()) x += v;
        return push({Op::AddScalarVar, {mat.id, s.id}, std::move(out)});
    }

    Var sum_axis1(Var mat) {
        const Tensor& M = value(mat);
        if (M.ndim() != 2) throw DimensionError("sum_axis1 requires a matrix");
        Tensor out({M.rows(), 1});
        for (std::size_t i = 0; i < M.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < M.cols(); ++j) s += M.at(i, j);
            out[i] = s;
        }
        return push({Op::SumAxis1, {mat.id}, std::move(out)});
    }

    Var conv2d_valid(Var input, Var kernel) {
        const Tensor& I = value(input);
        const Tensor& K = value(kernel);
        if (I.ndim() != 2 || K.ndim() != 2 || K.rows() > I.rows() || K.cols() > I.cols()) {
            throw DimensionError("conv2d_valid: kernel " + Tensor::shape_str(K.shape()) +
                                 " does not fit input " + Tensor::shape_str(I.shape()));
        }
        const std::size_t oh = I.rows() - K.rows() + 1, ow = I.cols() - K.cols() + 1;
        Tensor out({oh, ow});
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double s = 0.0;
                for (std::size_t u = 0; u < K.rows(); ++u)
                    for (std::size_t v = 0; v < K.cols(); ++v)
                        s += I.at(i + u, j + v) * K.at(u, v);
                out.at(i, j) = s;
            }
        return push({Op::Conv2dValid, {input.id, kernel.id}, std::move(out)});
    }

    Var maxpool2(Var a) {
        const Tensor& I = value(a);
        if (I.ndim() != 2 || I.rows() < 2 || I.cols() < 2) {
            throw DimensionError("maxpool2 requires a matrix at least 2x2, got " +
                                 Tensor::shape_str(I.shape()));
        }
        const std::size_t oh = I.rows() / 2, ow = I.cols() / 2;
        Tensor out({oh, ow});
        std::vector<std::size_t> argmax(oh * ow);
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double best = I.at(2 * i, 2 * j);
                std::size_t best_idx = (2 * i) * I.cols() + 2 * j;
                for (std::size_t u = 0; u < 2; ++u)
                    for (std::size_t v = 0; v < 2; ++v) {
                        const double cand = I.at(2 * i + u, 2 * j + v);
                        if (cand > best) {
                            best = cand;
                            best_idx = (2 * i + u) * I.cols() + 2 * j + v;
                        }
                    }
                out.at(i, j) = best;
                argmax[i * ow + j] = best_idx;
            }
        Node n{Op::MaxPool2, {a.id}, std::move(out)};
        n.pool_argmax = std::move(argmax);
        return push(std::move(n));
    }

    Var reshape(Var a, std::vector<std::size_t> new_shape) {
        Node n{Op::Reshape, {a.id}, value(a).reshaped(new_shape)};
        n.aux_shape = value(a).shape();
        return push(std::move(n));
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw ContractError("concat_rows of zero parts");
        const std::size_t cols = value(parts[0]).cols();
        std::size_t rows = 0;
        for (Var p : parts) {
            const Tensor& t = value(p);
            if (t.ndim() != 2 || t.cols() != cols)
                throw DimensionError("concat_rows column mismatch");
            rows += t.rows();
        }
        Tensor out({rows, cols});
        Node n{Op::ConcatRows, {}, Tensor()};
        std::size_t r = 0;
        for (Var p : parts) {
            const Tensor& t = value(p);
            for (std::size_t i = 0; i < t.numel(); ++i) out[r * cols + i] = t[i];
            r += t.rows();
            n.parents.push_back(p.id);
        }
        n.value = std::move(out);
        return push(std::move(n));
    }

    /// Reverse pass from a scalar node. Gradients for every node become
    /// readable through grad(); leaves keep the accumulated partials.
    void backward(Var loss) {
        if (value(loss).numel() != 1)
            throw ContractError("backward requires a scalar loss node, got shape " +
                                Tensor::shape_str(value(loss).shape()));
        grads_.assign(nodes_.size(), Tensor());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            grads_[i] = Tensor(nodes_[i].value.shape());
        grads_[loss.id][0] = 1.0;

        for (std::size_t idx = loss.id + 1; idx-- > 0;) {
            const Node& n = nodes_[idx];
            const Tensor& g = grads_[idx];
            switch (n.op) {
                case Op::Leaf:
                    break;
                case Op::Add:
                    accumulate(n.parents[0], g);
                    accumulate(n.parents[1], g);
                    break;
                case Op::Sub: {
                    accumulate(n.parents[0], g);
                    Tensor& pb = grads_[n.parents[1]];
                    for (std::size_t i = 0; i < g.numel(); ++i) pb[i] -= g[i];
                    break;
                }
                case Op::Mul: {
                    const Tensor& A = nodes_[n.parents[0]].value;
                    const Tensor& B = nodes_[n.parents[1]].value;
                    Tensor& ga = grads_[n.parents[0]];
                    Tensor& gb = grads_[n.parents[1]];
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        ga[i] += g[i] * B[i];
                        gb[i] += g[i] * A[i];
                    }
                    break;
                }
                case Op::Scale: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.aux;
                    break;
                }
                case Op::AddScalar:
                    accumulate(n.parents[0], g);
                    break;
                case Op::Relu: {
                    // subgradient at 0 is 0
                    const Tensor& X = nodes_[n.parents[0]].value;
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        if (X[i] > 0.0) ga[i] += g[i];
                    break;
                }
                case Op::Square: {
                    const Tensor& X = nodes_[n.parents[0]].value;
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += 2.0 * X[i] * g[i];
                    break;
                }
                case Op::Sqrt: {
                    const Tensor& Y = n.value;
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        ga[i] += g[i] * 0.5 / Y[i];
                    break;
                }
                case Op::Exp: {
                    const Tensor& Y = n.value;
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * Y[i];
                    break;
                }
                case Op::Sum: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (double& v : ga.values()) v += g[0];
                    break;
                }
                case Op::Mean: {
                    Tensor& ga = grads_[n.parents[0]];
                    const double c = g[0] / double(ga.numel());
                    for (double& v : ga.values()) v += c;
                    break;
                }
                case Op::Matmul: {
                    const Tensor& A = nodes_[n.parents[0]].value;
                    const Tensor& B = nodes_[n.parents[1]].value;
                    Tensor& ga = grads_[n.parents[0]];
                    Tensor& gb = grads_[n.parents[1]];
                    const std::size_t m = A.rows(), k = A.cols(), nn = B.cols();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < nn; ++j) {
                            const double gij = g.at(i, j);
                            if (gij == 0.0) continue;
                            for (std::size_t l = 0; l < k; ++l) {
                                ga.at(i, l) += gij * B.at(l, j);
                                gb.at(l, j) += A.at(i, l) * gij;
                            }
                        }
                    break;
                }
                case Op::Transpose: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j)
                            ga.at(j, i) += g.at(i, j);
                    break;
                }
                case Op::AddRowVec: {
                    accumulate(n.parents[0], g);
                    Tensor& gr = grads_[n.parents[1]];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g.at(i, j);
                    break;
                }
                case Op::AddColVec: {
                    accumulate(n.parents[0], g);
                    Tensor& gc = grads_[n.parents[1]];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gc[i] += g.at(i, j);
                    break;
                }
                case Op::AddScalarVar: {
                    accumulate(n.parents[0], g);
                    Tensor& gs = grads_[n.parents[1]];
                    for (double v : g.values()) gs[0] += v;
                    break;
                }
                case Op::SumAxis1: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < ga.rows(); ++i)
                        for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g[i];
                    break;
                }
                case Op::Conv2dValid: {
                    const Tensor& I = nodes_[n.parents[0]].value;
                    const Tensor& K = nodes_[n.parents[1]].value;
                    Tensor& gi = grads_[n.parents[0]];
                    Tensor& gk = grads_[n.parents[1]];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) {
                            const double gij = g.at(i, j);
                            if (gij == 0.0) continue;
                            for (std::size_t u = 0; u < K.rows(); ++u)
                                for (std::size_t v = 0; v < K.cols(); ++v) {
                                    gi.at(i + u, j + v) += gij * K.at(u, v);
                                    gk.at(u, v) += gij * I.at(i + u, j + v);
                                }
                        }
                    break;
                }
                case Op::MaxPool2: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        ga[n.pool_argmax[i]] += g[i];
                    break;
                }
                case Op::Reshape: {
                    Tensor& ga = grads_[n.parents[0]];
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                    break;
                }
                case Op::ConcatRows: {
                    std::size_t off = 0;
                    for (std::size_t p : n.parents) {
                        Tensor& gp = grads_[p];
                        for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += g[off + i];
                        off += gp.numel();
                    }
                    break;
                }
            }
        }
    }

private:
    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    void require_same_shape(const char* what, Var a, Var b) const {
        if (!value(a).same_shape(value(b)))
            throw DimensionError(std::string(what) + " shape mismatch: " +
                                 Tensor::shape_str(value(a).shape()) + " vs " +
                                 Tensor::shape_str(value(b).shape()));
    }

    void accumulate(std::size_t id, const Tensor& g) {
        Tensor& dst = grads_[id];
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace ddstn
