#ifndef CPL_REPL_HPP
#define CPL_REPL_HPP

#include "cpl/session.hpp"

namespace cpl {

// Interactive loop: reads statements from machine.fin, evaluates them in the
// session's persistent scope, echoes bare expressions, prompts on stderr.
// Returns the session's exit status.
int run_repl(Session& session);

}  // namespace cpl

#endif
