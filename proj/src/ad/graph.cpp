#include "skelbridge/ad/graph.hpp"

namespace skelbridge::ad {

detail::Node* Graph::add_node(const char* tag, MatX value, bool requires_grad) {
  auto node = std::make_unique<detail::Node>();
  node->tag = tag;
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->graph = this;
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Value Graph::constant(MatX v) {
  if (!v.allFinite()) throw InvalidInputError("constant: non-finite values");
  return Value(add_node("constant", std::move(v), false));
}

Value Graph::var(MatX v) {
  if (!v.allFinite()) throw InvalidInputError("var: non-finite values");
  return Value(add_node("var", std::move(v), true));
}

Value Graph::leaf(const Tensor& t) {
  return Value(add_node(t.requires_grad ? "param" : "constant", t.value, t.requires_grad));
}

const MatX& Graph::grad(Value v) { return node_of(v)->grad_ref(); }

void Graph::backward(Value loss) {
  detail::Node* ln = node_of(loss);
  if (ln->value.rows() != 1 || ln->value.cols() != 1)
    throw InvalidInputError("backward: loss node must be scalar (1x1)");
  for (auto& n : nodes_) n->grad.resize(0, 0);
  ln->grad_ref()(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (!n.back || !n.requires_grad || n.grad.size() == 0) continue;
    n.back(n);
  }
}

Value make_op(Graph& g, const char* tag, MatX value, std::vector<Value> parents,
              std::function<void(detail::Node&)> back) {
  bool rg = false;
  for (const Value& p : parents) rg = rg || p.requires_grad();
  detail::Node* node = g.add_node(tag, std::move(value), rg);
  node->parents.reserve(parents.size());
  for (const Value& p : parents) node->parents.push_back(node_of(p));
  if (rg) node->back = std::move(back);
  return Value(node);
}

const MatX& value_of(Value v) { return v.n_->value; }
detail::Node* node_of(Value v) { return v.n_; }

}  // namespace skelbridge::ad
