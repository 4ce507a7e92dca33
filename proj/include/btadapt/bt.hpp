#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace btadapt::bt {

enum class NodeStatus { Success, Failure, Running };

inline const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Success: return "success";
    case NodeStatus::Failure: return "failure";
    case NodeStatus::Running: return "running";
  }
  return "?";
}

enum class NodeKind { Sequence, Fallback, ReactiveSequence, Condition, Action };

// Supplies truth values for Condition predicates. Unknown ids are a
// configuration error and must throw.
class WorldView {
 public:
  virtual ~WorldView() = default;
  virtual bool evaluate(std::string_view predicate_id) const = 0;
};

// Parameter slot of an Action Node. param_dim == 0 encodes a
// non-parameterized node; such a node may instead carry a fixed target.
struct ActionSlot {
  int index = 0;
  int param_dim = 0;
  std::vector<double> params;               // current theta^i, size == param_dim
  std::string motion_spec;                  // e.g. "relative-linear-motion"
  std::optional<std::array<double, 2>> fixed_target;
};

struct TickResult {
  NodeStatus status = NodeStatus::Failure;
  std::optional<int> active_action;  // set iff status == Running
};

namespace detail {

enum class ActionPhase { Idle, InFlight, Done };

struct Node {
  NodeKind kind = NodeKind::Sequence;
  std::vector<Node> children;
  std::string predicate;  // Condition only
  ActionSlot slot;        // Action only

  // Runtime state. Composites with memory keep a cursor; Action nodes track
  // the externally executed motion.
  bool entered = false;
  std::size_t cursor = 0;
  ActionPhase phase = ActionPhase::Idle;
  NodeStatus phase_result = NodeStatus::Success;

  void reset_runtime() {
    entered = false;
    cursor = 0;
    phase = ActionPhase::Idle;
    for (Node& c : children) c.reset_runtime();
  }
};

}  // namespace detail

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reactive behavior tree with parameterized Action Node slots.
//
// Tick order is depth-first left-to-right. Sequence and Fallback keep a
// cursor so completed children are not re-evaluated; ReactiveSequence
// re-ticks all children from the left every tick and halts a running child
// when an earlier child fails.
//
// Action Nodes run externally: a tick that reaches an idle Action marks it
// in flight and reports it as the active node. The caller executes the
// motion and reports the outcome via mark_action_result(); the next tick
// then advances past it.
class BehaviorTree {
 public:
  BehaviorTree() = default;

  // Chain used throughout the obstacle-avoidance study: a reactive guard over
  // a sequence of n parameterized relative motions plus a fixed final motion
  // to the goal. Stacked parameter dimension is 2n.
  static BehaviorTree chain(int n_param_motions, std::array<double, 2> final_goal) {
    if (n_param_motions < 1 || n_param_motions > 16)
      throw std::invalid_argument("chain: n_param_motions must be in [1,16]");
    detail::Node seq;
    seq.kind = NodeKind::Sequence;
    for (int i = 1; i <= n_param_motions; ++i) {
      detail::Node a;
      a.kind = NodeKind::Action;
      a.slot.index = i;
      a.slot.param_dim = 2;
      a.slot.params.assign(2, 0.0);
      a.slot.motion_spec = "relative-linear-motion";
      seq.children.push_back(std::move(a));
    }
    detail::Node last;
    last.kind = NodeKind::Action;
    last.slot.index = n_param_motions + 1;
    last.slot.param_dim = 0;
    last.slot.motion_spec = "goal-motion";
    last.slot.fixed_target = final_goal;
    seq.children.push_back(std::move(last));

    detail::Node guard;
    guard.kind = NodeKind::Condition;
    guard.predicate = "collision-free";

    detail::Node root;
    root.kind = NodeKind::ReactiveSequence;
    root.children.push_back(std::move(guard));
    root.children.push_back(std::move(seq));

    BehaviorTree t;
    t.root_ = std::move(root);
    t.validate();
    return t;
  }

  // Parses the declarative s-expression form, e.g.
  //   (reactive-sequence
  //     (condition collision-free)
  //     (sequence
  //       (action 1 2 relative-linear-motion)
  //       (action 2 0 goal-motion 0.95 0.05)))
  static BehaviorTree parse(std::string_view text);

  std::string to_text() const { return emit(root_, 0); }

  TickResult tick(const WorldView& world) {
    TickResult r;
    r.status = tick_node(root_, world, r.active_action);
    if (r.status != NodeStatus::Running) r.active_action.reset();
    return r;
  }

  void halt() { root_.reset_runtime(); }

  // Stores the first param_dim components of theta_hat in the slot; extra
  // trailing components are ignored so a fixed-size upper-level action can
  // feed slots of differing dimension.
  void set_slot_params(int index, std::span<const double> theta_hat) {
    detail::Node* n = find_action(root_, index);
    if (n == nullptr) throw std::invalid_argument("set_slot_params: unknown action index");
    ActionSlot& s = n->slot;
    if (std::cmp_less(theta_hat.size(), s.param_dim))
      throw std::invalid_argument("set_slot_params: theta_hat shorter than slot dim");
    s.params.assign(theta_hat.begin(), theta_hat.begin() + s.param_dim);
  }

  // Reports the outcome of an externally executed motion.
  void mark_action_result(int index, NodeStatus result) {
    detail::Node* n = find_action(root_, index);
    if (n == nullptr) throw std::invalid_argument("mark_action_result: unknown action index");
    if (result == NodeStatus::Running)
      throw std::invalid_argument("mark_action_result: result must be terminal");
    n->phase = detail::ActionPhase::Done;
    n->phase_result = result;
  }

  const ActionSlot& slot(int index) const {
    const detail::Node* n = find_action(root_, index);
    if (n == nullptr) throw std::invalid_argument("slot: unknown action index");
    return n->slot;
  }

  // Slot dimensions in action-index order.
  std::vector<int> slot_dims() const {
    std::vector<const detail::Node*> actions;
    collect_actions(root_, actions);
    std::vector<int> dims;
    dims.reserve(actions.size());
    for (const auto* a : actions) dims.push_back(a->slot.param_dim);
    return dims;
  }

  std::vector<int> action_indices() const {
    std::vector<const detail::Node*> actions;
    collect_actions(root_, actions);
    std::vector<int> idx;
    idx.reserve(actions.size());
    for (const auto* a : actions) idx.push_back(a->slot.index);
    return idx;
  }

  // Stacked parameter vector [theta^1, ..., theta^n].
  std::vector<double> stacked_params() const {
    std::vector<const detail::Node*> actions;
    collect_actions(root_, actions);
    std::vector<double> theta;
    for (const auto* a : actions)
      theta.insert(theta.end(), a->slot.params.begin(), a->slot.params.end());
    return theta;
  }

  int stacked_dim() const {
    int m = 0;
    for (int d : slot_dims()) m += d;
    return m;
  }

  int n_actions() const { return static_cast<int>(slot_dims().size()); }

  // Count of Action Nodes currently in flight (at most one by construction).
  int running_actions() const { return count_in_flight(root_); }

 private:
  detail::Node root_;

  void validate() const {
    std::vector<const detail::Node*> actions;
    collect_actions(root_, actions);
    std::vector<int> seen;
    for (const auto* a : actions) {
      if (a->slot.index < 1) throw TreeError("action index must be >= 1");
      if (a->slot.param_dim < 0) throw TreeError("negative param dim");
      for (int s : seen)
        if (s == a->slot.index) throw TreeError("duplicate action index");
      seen.push_back(a->slot.index);
    }
    validate_node(root_);
  }

  static void validate_node(const detail::Node& n) {
    switch (n.kind) {
      case NodeKind::Sequence:
      case NodeKind::Fallback:
      case NodeKind::ReactiveSequence:
        if (n.children.empty()) throw TreeError("composite node needs at least one child");
        for (const auto& c : n.children) validate_node(c);
        break;
      case NodeKind::Condition:
        if (!n.children.empty()) throw TreeError("condition node must be a leaf");
        if (n.predicate.empty()) throw TreeError("condition node needs a predicate id");
        break;
      case NodeKind::Action:
        if (!n.children.empty()) throw TreeError("action node must be a leaf");
        if (static_cast<int>(n.slot.params.size()) != n.slot.param_dim)
          throw TreeError("slot params size must equal param_dim");
        break;
    }
  }

  static NodeStatus tick_node(detail::Node& n, const WorldView& world,
                              std::optional<int>& active) {
    switch (n.kind) {
      case NodeKind::Condition:
        return world.evaluate(n.predicate) ? NodeStatus::Success : NodeStatus::Failure;

      case NodeKind::Action:
        switch (n.phase) {
          case detail::ActionPhase::Idle:
            n.phase = detail::ActionPhase::InFlight;
            [[fallthrough]];
          case detail::ActionPhase::InFlight:
            active = n.slot.index;
            return NodeStatus::Running;
          case detail::ActionPhase::Done:
            return n.phase_result;
        }
        return NodeStatus::Failure;

      case NodeKind::Sequence: {
        if (!n.entered) {
          n.entered = true;
          n.cursor = 0;
        }
        while (n.cursor < n.children.size()) {
          NodeStatus s = tick_node(n.children[n.cursor], world, active);
          if (s == NodeStatus::Running) return NodeStatus::Running;
          if (s == NodeStatus::Failure) {
            n.reset_runtime();
            return NodeStatus::Failure;
          }
          ++n.cursor;
        }
        n.reset_runtime();
        return NodeStatus::Success;
      }

      case NodeKind::Fallback: {
        if (!n.entered) {
          n.entered = true;
          n.cursor = 0;
        }
        while (n.cursor < n.children.size()) {
          NodeStatus s = tick_node(n.children[n.cursor], world, active);
          if (s == NodeStatus::Running) return NodeStatus::Running;
          if (s == NodeStatus::Success) {
            n.reset_runtime();
            return NodeStatus::Success;
          }
          ++n.cursor;
        }
        n.reset_runtime();
        return NodeStatus::Failure;
      }

      case NodeKind::ReactiveSequence: {
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          NodeStatus s = tick_node(n.children[i], world, active);
          if (s == NodeStatus::Running) return NodeStatus::Running;
          if (s == NodeStatus::Failure) {
            // Preempt anything still running to the right of the failed child.
            n.reset_runtime();
            active.reset();
            return NodeStatus::Failure;
          }
        }
        n.reset_runtime();
        return NodeStatus::Success;
      }
    }
    return NodeStatus::Failure;
  }

  static detail::Node* find_action(detail::Node& n, int index) {
    if (n.kind == NodeKind::Action && n.slot.index == index) return &n;
    for (auto& c : n.children)
      if (detail::Node* f = find_action(c, index)) return f;
    return nullptr;
  }
  static const detail::Node* find_action(const detail::Node& n, int index) {
    return find_action(const_cast<detail::Node&>(n), index);
  }

  static void collect_actions(const detail::Node& n,
                              std::vector<const detail::Node*>& out) {
    if (n.kind == NodeKind::Action) out.push_back(&n);
    for (const auto& c : n.children) collect_actions(c, out);
  }

  static int count_in_flight(const detail::Node& n) {
    int k = (n.kind == NodeKind::Action && n.phase == detail::ActionPhase::InFlight) ? 1 : 0;
    for (const auto& c : n.children) k += count_in_flight(c);
    return k;
  }

  static std::string emit(const detail::Node& n, int depth) {
    std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    std::ostringstream os;
    switch (n.kind) {
      case NodeKind::Sequence:
      case NodeKind::Fallback:
      case NodeKind::ReactiveSequence: {
        const char* name = n.kind == NodeKind::Sequence     ? "sequence"
                           : n.kind == NodeKind::Fallback   ? "fallback"
                                                            : "reactive-sequence";
        os << pad << '(' << name << '\n';
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          os << emit(n.children[i], depth + 1);
          os << (i + 1 == n.children.size() ? ")" : "\n");
        }
        break;
      }
      case NodeKind::Condition:
        os << pad << "(condition " << n.predicate << ')';
        break;
      case NodeKind::Action:
        os << pad << "(action " << n.slot.index << ' ' << n.slot.param_dim << ' '
           << n.slot.motion_spec;
        if (n.slot.fixed_target)
          os << ' ' << (*n.slot.fixed_target)[0] << ' ' << (*n.slot.fixed_target)[1];
        os << ')';
        break;
    }
    return os.str();
  }

  // --- declarative text parsing ---

  struct Lexer {
    std::string_view text;
    std::size_t pos = 0;

    void skip_ws() {
      while (pos < text.size() &&
             (text[pos] == ' ' || text[pos] == '\n' || text[pos] == '\t' || text[pos] == '\r'))
        ++pos;
    }
    bool eof() {
      skip_ws();
      return pos >= text.size();
    }
    char peek() {
      skip_ws();
      if (pos >= text.size()) throw TreeError("unexpected end of tree description");
      return text[pos];
    }
    void expect(char c) {
      if (peek() != c)
        throw TreeError(std::string("expected '") + c + "' in tree description");
      ++pos;
    }
    std::string token() {
      skip_ws();
      std::size_t start = pos;
      while (pos < text.size() && text[pos] != '(' && text[pos] != ')' && text[pos] != ' ' &&
             text[pos] != '\n' && text[pos] != '\t' && text[pos] != '\r')
        ++pos;
      if (start == pos) throw TreeError("expected token in tree description");
      return std::string(text.substr(start, pos - start));
    }
  };

  static detail::Node parse_node(Lexer& lx) {
    lx.expect('(');
    std::string head = lx.token();
    detail::Node n;
    if (head == "sequence" || head == "fallback" || head == "reactive-sequence") {
      n.kind = head == "sequence"   ? NodeKind::Sequence
               : head == "fallback" ? NodeKind::Fallback
                                    : NodeKind::ReactiveSequence;
      while (lx.peek() == '(') n.children.push_back(parse_node(lx));
      lx.expect(')');
    } else if (head == "condition") {
      n.kind = NodeKind::Condition;
      n.predicate = lx.token();
      lx.expect(')');
    } else if (head == "action") {
      n.kind = NodeKind::Action;
      try {
        n.slot.index = std::stoi(lx.token());
        n.slot.param_dim = std::stoi(lx.token());
      } catch (const std::exception&) {
        throw TreeError("action node: index and param dim must be integers");
      }
      n.slot.motion_spec = lx.token();
      n.slot.params.assign(static_cast<std::size_t>(std::max(n.slot.param_dim, 0)), 0.0);
      if (lx.peek() != ')') {
        std::array<double, 2> tgt{};
        try {
          tgt[0] = std::stod(lx.token());
          tgt[1] = std::stod(lx.token());
        } catch (const std::exception&) {
          throw TreeError("action node: fixed target must be two reals");
        }
        n.slot.fixed_target = tgt;
      }
      lx.expect(')');
    } else {
      throw TreeError("unknown node kind: " + head);
    }
    return n;
  }
};

inline BehaviorTree BehaviorTree::parse(std::string_view text) {
  Lexer lx{text};
  BehaviorTree t;
  t.root_ = parse_node(lx);
  if (!lx.eof()) throw TreeError("trailing content after tree description");
  t.validate();
  return t;
}

}  // namespace btadapt::bt
