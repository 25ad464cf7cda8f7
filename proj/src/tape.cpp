#include "stv/tape.hpp"

#include <cstdlib>
#include <thread>

namespace stv {

int worker_threads() {
    static const int n = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("STVISIT_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        return hw;
    }();
    return n;
}

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = prev_; }

void backward(Tape& tape, Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss was not recorded on the tape");
    }
    loss.ensure_grad();
    loss.grad()[0] = 1.0;
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        it->backward();
    }
    tape.clear();
}

}  // namespace stv
