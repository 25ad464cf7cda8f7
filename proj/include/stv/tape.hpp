#ifndef STV_TAPE_HPP
#define STV_TAPE_HPP

#include <functional>
#include <vector>

#include "stv/tensor.hpp"

namespace stv {

// Wengert list: nodes are appended in forward order (inputs always precede
// their consumers) and replayed exactly once, in reverse, by backward().
class Tape {
  public:
    struct Node {
        const char* op;
        std::function<void()> backward;
    };

    void record(const char* op, std::function<void()> backward_fn) {
        nodes_.push_back(Node{op, std::move(backward_fn)});
    }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    const std::vector<Node>& nodes() const { return nodes_; }

  private:
    friend void backward(Tape&, Tensor&);
    std::vector<Node> nodes_;
};

// Ops record onto the innermost active tape of the current thread; with no
// active tape, ops run pure (inference mode).
Tape* active_tape();

class TapeScope {
  public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
// requires-grad leaf (sum semantics over fan-out). Consumes the tape.
void backward(Tape& tape, Tensor& loss);

}  // namespace stv

#endif  // STV_TAPE_HPP
