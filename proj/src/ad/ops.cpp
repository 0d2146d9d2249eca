#include <algorithm>
#include <cmath>

#include "skelbridge/ad/graph.hpp"

namespace skelbridge::ad {

namespace {

using detail::Node;

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
}

}  // namespace

Value matmul(Value a, Value b) {
  if (a.cols() != b.rows()) throw InvalidShapeError("matmul: inner dimensions differ");
  MatX out = a.val() * b.val();
  return make_op(a.graph(), "matmul", std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0];
    Node* pb = n.parents[1];
    if (pa->requires_grad) pa->grad_ref().noalias() += n.grad * pb->value.transpose();
    if (pb->requires_grad) pb->grad_ref().noalias() += pa->value.transpose() * n.grad;
  });
}

Value add(Value a, Value b) {
  check_same_shape(a, b, "add");
  return make_op(a.graph(), "add", a.val() + b.val(), {a, b}, [](Node& n) {
    for (Node* p : n.parents)
      if (p->requires_grad) p->grad_ref() += n.grad;
  });
}

Value sub(Value a, Value b) {
  check_same_shape(a, b, "sub");
  return make_op(a.graph(), "sub", a.val() - b.val(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() -= n.grad;
  });
}

Value scale(Value a, double c) {
  return make_op(a.graph(), "scale", a.val() * c, {a}, [c](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += c * n.grad;
  });
}

Value relu(Value a) {
  return make_op(a.graph(), "relu", a.val().cwiseMax(0.0), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    p->grad_ref().array() += n.grad.array() * (p->value.array() > 0.0).cast<double>();
  });
}

Value sigmoid(Value a) {
  MatX y = (1.0 + (-a.val().array()).exp()).inverse().matrix();
  return make_op(a.graph(), "sigmoid", std::move(y), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    p->grad_ref().array() += n.grad.array() * n.value.array() * (1.0 - n.value.array());
  });
}

Value row_softmax(Value a) {
  MatX y = a.val();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    auto row = y.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  return make_op(a.graph(), "row_softmax", std::move(y), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.value.row(i));
      pg.row(i).array() +=
          (n.grad.row(i).array() - dot) * n.value.row(i).array();
    }
  });
}

Value row_l2_normalize(Value a) {
  MatX y = a.val();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double norm = y.row(i).norm();
    if (norm < 1e-12)
      throw NumericError("row_l2_normalize: zero-length row " + std::to_string(i));
    y.row(i) /= norm;
  }
  return make_op(a.graph(), "row_l2_normalize", std::move(y), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double norm = p->value.row(i).norm();
      const double dot = n.grad.row(i).dot(n.value.row(i));
      pg.row(i) += (n.grad.row(i) - dot * n.value.row(i)) / norm;
    }
  });
}

Value transpose(Value a) {
  return make_op(a.graph(), "transpose", a.val().transpose(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad.transpose();
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw InvalidInputError("concat_cols: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Value& p : parts) {
    if (p.rows() != rows) throw InvalidShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  MatX out(rows, cols);
  int c = 0;
  for (const Value& p : parts) {
    out.middleCols(c, p.cols()) = p.val();
    c += p.cols();
  }
  return make_op(parts[0].graph(), "concat_cols", std::move(out), parts, [](Node& n) {
    int c = 0;
    for (Node* p : n.parents) {
      const int w = static_cast<int>(p->value.cols());
      if (p->requires_grad) p->grad_ref() += n.grad.middleCols(c, w);
      c += w;
    }
  });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw InvalidInputError("concat_rows: no inputs");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Value& p : parts) {
    if (p.cols() != cols) throw InvalidShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  MatX out(rows, cols);
  int r = 0;
  for (const Value& p : parts) {
    out.middleRows(r, p.rows()) = p.val();
    r += p.rows();
  }
  return make_op(parts[0].graph(), "concat_rows", std::move(out), parts, [](Node& n) {
    int r = 0;
    for (Node* p : n.parents) {
      const int h = static_cast<int>(p->value.rows());
      if (p->requires_grad) p->grad_ref() += n.grad.middleRows(r, h);
      r += h;
    }
  });
}

Value slice_cols(Value a, int start, int count) {
  if (start < 0 || count < 1 || start + count > a.cols())
    throw InvalidShapeError("slice_cols: range out of bounds");
  MatX out = a.val().middleCols(start, count);
  return make_op(a.graph(), "slice_cols", std::move(out), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().middleCols(start, count) += n.grad;
  });
}

Value max_over_rows(Value a) {
  if (a.rows() < 1) throw InvalidShapeError("max_over_rows: empty input");
  const MatX& x = a.val();
  MatX out(1, x.cols());
  std::vector<int> arg(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    int best = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(best, c)) best = static_cast<int>(r);  // ties keep lowest row
    arg[c] = best;
    out(0, c) = x(best, c);
  }
  return make_op(a.graph(), "max_over_rows", std::move(out), {a}, [arg](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    for (std::size_t c = 0; c < arg.size(); ++c) pg(arg[c], c) += n.grad(0, c);
  });
}

Value group_max(Value a, int group_size) {
  if (group_size < 1 || a.rows() % group_size != 0)
    throw InvalidShapeError("group_max: rows not divisible by group size");
  const MatX& x = a.val();
  const int groups = a.rows() / group_size;
  MatX out(groups, x.cols());
  std::vector<int> arg(static_cast<std::size_t>(groups) * x.cols());
  for (int g = 0; g < groups; ++g) {
    const int base = g * group_size;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      int best = base;
      for (int r = base + 1; r < base + group_size; ++r)
        if (x(r, c) > x(best, c)) best = r;
      arg[g * x.cols() + c] = best;
      out(g, c) = x(best, c);
    }
  }
  return make_op(a.graph(), "group_max", std::move(out), {a}, [arg](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    const Eigen::Index cols = n.value.cols();
    for (Eigen::Index g = 0; g < n.value.rows(); ++g)
      for (Eigen::Index c = 0; c < cols; ++c) pg(arg[g * cols + c], c) += n.grad(g, c);
  });
}

Value mean_all(Value a) {
  const double inv = 1.0 / static_cast<double>(a.val().size());
  MatX out = MatX::Constant(1, 1, a.val().sum() * inv);
  return make_op(a.graph(), "mean_all", std::move(out), {a}, [inv](Node& n) {
    Node* p = n.parents[0];
    if (p->requires_grad) p->grad_ref().array() += n.grad(0, 0) * inv;
  });
}

Value sum_all(Value a) {
  MatX out = MatX::Constant(1, 1, a.val().sum());
  return make_op(a.graph(), "sum_all", std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (p->requires_grad) p->grad_ref().array() += n.grad(0, 0);
  });
}

Value gather_rows(Value a, std::vector<int> idx) {
  const int n = a.rows();
  MatX out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw InvalidInputError("gather_rows: index out of range");
    out.row(i) = a.val().row(idx[i]);
  }
  return make_op(a.graph(), "gather_rows", std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    for (std::size_t i = 0; i < idx.size(); ++i) pg.row(idx[i]) += n.grad.row(i);
  });
}

Value grouped_linear(Value x, const std::vector<Value>& weights) {
  const int g = static_cast<int>(weights.size());
  if (g < 1) throw InvalidShapeError("grouped_linear: no weight blocks");
  const int in_w = weights[0].rows();
  const int out_w = weights[0].cols();
  for (const Value& w : weights)
    if (w.rows() != in_w || w.cols() != out_w)
      throw InvalidShapeError("grouped_linear: weight blocks must share one shape");
  if (x.cols() != g * in_w)
    throw InvalidShapeError("grouped_linear: input columns must equal groups * block rows");

  MatX out(x.rows(), g * out_w);
  for (int i = 0; i < g; ++i)
    out.middleCols(i * out_w, out_w).noalias() =
        x.val().middleCols(i * in_w, in_w) * weights[i].val();

  std::vector<Value> parents = {x};
  parents.insert(parents.end(), weights.begin(), weights.end());
  return make_op(x.graph(), "grouped_linear", std::move(out), parents,
                 [g, in_w, out_w](Node& n) {
                   Node* px = n.parents[0];
                   for (int i = 0; i < g; ++i) {
                     Node* pw = n.parents[1 + i];
                     auto gi = n.grad.middleCols(i * out_w, out_w);
                     if (px->requires_grad)
                       px->grad_ref().middleCols(i * in_w, in_w).noalias() +=
                           gi * pw->value.transpose();
                     if (pw->requires_grad)
                       pw->grad_ref().noalias() +=
                           px->value.middleCols(i * in_w, in_w).transpose() * gi;
                   }
                 });
}

Value tile_rows(Value a, int times) {
  if (times < 1) throw InvalidShapeError("tile_rows: times must be >= 1");
  const int m = a.rows();
  MatX out(m * times, a.cols());
  for (int t = 0; t < times; ++t) out.middleRows(t * m, m) = a.val();
  return make_op(a.graph(), "tile_rows", std::move(out), {a}, [times, m](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    MatX& pg = p->grad_ref();
    for (int t = 0; t < times; ++t) pg += n.grad.middleRows(t * m, m);
  });
}

Value repeat_interleave_rows(Value a, int times) {
  if (times < 1) throw InvalidShapeError("repeat_interleave_rows: times must be >= 1");
  const int m = a.rows();
  MatX out(m * times, a.cols());
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < times; ++t) out.row(i * times + t) = a.val().row(i);
  return make_op(a.graph(), "repeat_interleave_rows", std::move(out), {a},
                 [times, m](Node& n) {
                   Node* p = n.parents[0];
                   if (!p->requires_grad) return;
                   MatX& pg = p->grad_ref();
                   for (int i = 0; i < m; ++i)
                     for (int t = 0; t < times; ++t) pg.row(i) += n.grad.row(i * times + t);
                 });
}

Value reshape(Value a, int rows, int cols) {
  if (rows * cols != a.rows() * a.cols())
    throw InvalidShapeError("reshape: element count must be preserved");
  MatX out = Eigen::Map<const MatX>(a.val().data(), rows, cols);
  return make_op(a.graph(), "reshape", std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    p->grad_ref() +=
        Eigen::Map<const MatX>(n.grad.data(), p->value.rows(), p->value.cols());
  });
}

Value mul_elem(Value a, Value b) {
  check_same_shape(a, b, "mul_elem");
  MatX out = a.val().cwiseProduct(b.val());
  return make_op(a.graph(), "mul_elem", std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0];
    Node* pb = n.parents[1];
    if (pa->requires_grad) pa->grad_ref().array() += n.grad.array() * pb->value.array();
    if (pb->requires_grad) pb->grad_ref().array() += n.grad.array() * pa->value.array();
  });
}

Value square(Value a) {
  MatX out = a.val().array().square().matrix();
  return make_op(a.graph(), "square", std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (p->requires_grad)
      p->grad_ref().array() += 2.0 * n.grad.array() * p->value.array();
  });
}

Value sqrt_clamped(Value a) {
  MatX out = a.val().cwiseMax(0.0).cwiseSqrt();
  return make_op(a.graph(), "sqrt_clamped", std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    p->grad_ref().array() += n.grad.array() * 0.5 / n.value.array().max(1e-12);
  });
}

Value row_sum(Value a) {
  MatX out = a.val().rowwise().sum();
  return make_op(a.graph(), "row_sum", std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0];
    if (!p->requires_grad) return;
    p->grad_ref().colwise() += n.grad.col(0);
  });
}

Value interp3(Value target_pos, Value source_pos, Value source_feat) {
  if (target_pos.cols() != 3 || source_pos.cols() != 3)
    throw InvalidShapeError("interp3: positions must have 3 columns");
  if (source_pos.rows() != source_feat.rows())
    throw InvalidShapeError("interp3: source position/feature count mismatch");
  const int t = target_pos.rows();
  const int s = source_pos.rows();
  if (s < 1) throw InvalidInputError("interp3: empty source set");
  const int k = std::min(3, s);

  const MatX& tp = target_pos.val();
  const MatX& sp = source_pos.val();
  const MatX& f = source_feat.val();
  constexpr double kEps = 1e-12;

  // frozen per forward: k nearest sources per target by (d2, index)
  std::vector<int> nbr(static_cast<std::size_t>(t) * k);
  MatX weights(t, k);
  MatX out = MatX::Zero(t, f.cols());
  std::vector<std::pair<double, int>> cand(s);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < s; ++j)
      cand[j] = {(sp.row(j) - tp.row(i)).squaredNorm(), j};
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    double wsum = 0.0;
    for (int j = 0; j < k; ++j) {
      nbr[i * k + j] = cand[j].second;
      weights(i, j) = 1.0 / (cand[j].first + kEps);
      wsum += weights(i, j);
    }
    for (int j = 0; j < k; ++j) {
      weights(i, j) /= wsum;
      out.row(i) += weights(i, j) * f.row(nbr[i * k + j]);
    }
  }

  return make_op(
      target_pos.graph(), "interp3", std::move(out), {target_pos, source_pos, source_feat},
      [k, nbr = std::move(nbr), weights = std::move(weights)](Node& n) {
        Node* ptp = n.parents[0];
        Node* psp = n.parents[1];
        Node* pf = n.parents[2];
        const MatX& tp = ptp->value;
        const MatX& sp = psp->value;
        const MatX& f = pf->value;
        const int t = static_cast<int>(tp.rows());
        for (int i = 0; i < t; ++i) {
          const auto g = n.grad.row(i);
          const double g_dot_out = g.dot(n.value.row(i));
          double wsum = 0.0;  // recover sum of raw reciprocals for the weight Jacobian
          for (int j = 0; j < k; ++j) {
            const int src = nbr[i * k + j];
            const double d2 = (sp.row(src) - tp.row(i)).squaredNorm();
            wsum += 1.0 / (d2 + 1e-12);
          }
          for (int j = 0; j < k; ++j) {
            const int src = nbr[i * k + j];
            const double w = weights(i, j);
            if (pf->requires_grad) pf->grad_ref().row(src) += w * g;
            if (!ptp->requires_grad && !psp->requires_grad) continue;
            const double d2 = (sp.row(src) - tp.row(i)).squaredNorm();
            const double r = 1.0 / (d2 + 1e-12);
            // d out/d d2_j = -r_j^2/wsum * (f_j - out); contract with g
            const double alpha = -(r * r / wsum) * (g.dot(f.row(src)) - g_dot_out);
            const auto diff = tp.row(i) - sp.row(src);
            if (ptp->requires_grad) ptp->grad_ref().row(i) += alpha * 2.0 * diff;
            if (psp->requires_grad) psp->grad_ref().row(src) -= alpha * 2.0 * diff;
          }
        }
      });
}

}  // namespace skelbridge::ad
