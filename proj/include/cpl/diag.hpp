#ifndef CPL_DIAG_HPP
#define CPL_DIAG_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace cpl {

struct SourcePos {
    std::string file;
    int line = 0;
    int column = 0;

    bool valid() const { return line > 0; }
    std::string to_string() const;
};

// Compile-time diagnostic, formatted "file:line:col: severity: message".
struct Diagnostic {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Error;
    SourcePos pos;
    std::string message;

    std::string to_string() const;
};

// Thrown by the front end on an unrecoverable compile error.
struct CompileError : std::runtime_error {
    Diagnostic diag;
    explicit CompileError(Diagnostic d)
        : std::runtime_error(d.to_string()), diag(std::move(d)) {}
};

// A CPL runtime error: trappable by TRAP, message prefix-matched.
// With rtchecks the position is included in the printed message.
struct CplError : std::runtime_error {
    std::string message;   // the bare ERRORMESSAGE text
    SourcePos pos;         // where it was raised, if known
    CplError(std::string msg, SourcePos p = {})
        : std::runtime_error(msg), message(std::move(msg)), pos(std::move(p)) {}
};

// STOP: stops the program unless a TRAP intercepts it (empty ERRORMESSAGE).
struct StopSignal {};

// EXIT name: unwinds to the enclosing LOOP/SUBROUTINE/FUNCTION/MODULE.
struct ExitSignal {
    std::string target;
};

}  // namespace cpl

#endif
