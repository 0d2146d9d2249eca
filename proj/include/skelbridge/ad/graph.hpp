#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "skelbridge/common.hpp"

namespace skelbridge::ad {

/// Named dense matrix, the unit of learned state.
struct Tensor {
  MatX value;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(MatX v, bool rg) : value(std::move(v)), requires_grad(rg) {}
};

class Graph;

namespace detail {
struct Node {
  const char* tag = "";
  MatX value;
  MatX grad;  // empty until reached by backward
  bool requires_grad = false;
  std::vector<Node*> parents;
  std::function<void(Node&)> back;
  Graph* graph = nullptr;

  MatX& grad_ref() {
    if (grad.size() == 0) grad = MatX::Zero(value.rows(), value.cols());
    return grad;
  }
};
}  // namespace detail

/// Handle to a node owned by a Graph.
class Value {
 public:
  Value() = default;

  const MatX& val() const { return n_->value; }
  int rows() const { return static_cast<int>(n_->value.rows()); }
  int cols() const { return static_cast<int>(n_->value.cols()); }
  bool requires_grad() const { return n_->requires_grad; }
  const char* tag() const { return n_->tag; }
  Graph& graph() const { return *n_->graph; }

 private:
  friend class Graph;
  friend Value make_op(Graph&, const char*, MatX, std::vector<Value>,
                       std::function<void(detail::Node&)>);
  friend const MatX& value_of(Value v);
  friend detail::Node* node_of(Value v);
  explicit Value(detail::Node* n) : n_(n) {}
  detail::Node* n_ = nullptr;
};

/// Reverse-mode tape. Nodes are stored in creation order, which is a
/// topological order by construction; backward walks it once in reverse.
/// A Graph is confined to a single thread.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value constant(MatX v);
  Value var(MatX v);
  Value leaf(const Tensor& t);
  Value scalar(double v) { return constant(MatX::Constant(1, 1, v)); }
  Value zeros(int rows, int cols) { return constant(MatX::Zero(rows, cols)); }

  /// Gradient of the last backward() w.r.t. the given node; zero if the node
  /// was never reached.
  const MatX& grad(Value v);

  /// Propagates from a 1x1 loss node. Resets all gradients first, so calling
  /// twice yields identical results. Throws InvalidInputError for a
  /// non-scalar loss.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend Value make_op(Graph&, const char*, MatX, std::vector<Value>,
                       std::function<void(detail::Node&)>);
  detail::Node* add_node(const char* tag, MatX value, bool requires_grad);
  std::vector<std::unique_ptr<detail::Node>> nodes_;
};

// ---- op plumbing ---------------------------------------------------------

Value make_op(Graph& g, const char* tag, MatX value, std::vector<Value> parents,
              std::function<void(detail::Node&)> back);
const MatX& value_of(Value v);
detail::Node* node_of(Value v);

// ---- operation catalog --------------------------------------------------

Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value scale(Value a, double c);
Value relu(Value a);
Value sigmoid(Value a);
Value row_softmax(Value a);
Value row_l2_normalize(Value a);
Value transpose(Value a);
Value concat_cols(const std::vector<Value>& parts);
Value concat_rows(const std::vector<Value>& parts);
Value slice_cols(Value a, int start, int count);
Value max_over_rows(Value a);            // (m,n) -> (1,n), argmax tracked
Value group_max(Value a, int group_size);  // (g*k,n) -> (g,n)
Value mean_all(Value a);                 // -> (1,1)
Value sum_all(Value a);                  // -> (1,1)
Value gather_rows(Value a, std::vector<int> idx);
Value grouped_linear(Value x, const std::vector<Value>& weights);
Value tile_rows(Value a, int times);
Value repeat_interleave_rows(Value a, int times);
Value reshape(Value a, int rows, int cols);
Value mul_elem(Value a, Value b);
Value square(Value a);
Value sqrt_clamped(Value a);  // sqrt(max(x,0)); derivative clamped near 0
Value row_sum(Value a);       // (m,n) -> (m,1)

/// Inverse-squared-distance interpolation of source features onto target
/// points over the 3 nearest sources (PointNet++ feature propagation).
/// Neighbor selection is frozen per forward; weights and the distances
/// behind them are differentiated.
Value interp3(Value target_pos, Value source_pos, Value source_feat);

}  // namespace skelbridge::ad
