#ifndef CPL_IOSYS_HPP
#define CPL_IOSYS_HPP

#include <cstdio>
#include <functional>
#include <optional>
#include <string>

#include "cpl/value.hpp"

namespace cpl {

// A CPL file descriptor: plain byte file, read-write. Also backs stdin/
// stdout/stderr and in-memory streams used by the REPL and the tests.
struct FileHandle {
    FILE* f = nullptr;
    std::string path;
    bool temp = false;
    bool is_std = false;
    bool writable = true;

    // memory-backed stream
    bool is_mem = false;
    std::string buf;
    size_t mem_pos = 0;

    // pushback / mark-rewind for text parsing
    std::string pushback;
    bool marking = false;
    std::string consumed;

    bool line_start = true;  // for '!' comment-line skipping

    ~FileHandle();
};

FilePtr open_path(const std::string& path, bool truncate);  // OPEN / CREATE
FilePtr make_temp_file();
FilePtr wrap_std_stream(FILE* f, const std::string& name, bool writable);
FilePtr make_mem_file(std::string initial = "");

int fh_getc(FileHandle& h);
void fh_ungetc(FileHandle& h, int c);
void fh_mark(FileHandle& h);
void fh_rewind(FileHandle& h);
void fh_unmark(FileHandle& h);
long fh_tell(FileHandle& h);
void fh_seek(FileHandle& h, long pos);
void fh_write_bytes(FileHandle& h, const char* data, size_t n);
void fh_read_bytes(FileHandle& h, char* data, size_t n);  // throws on short read
void fh_flush(FileHandle& h);
void fh_close(FileHandle& h);
long fh_size(FileHandle& h);
bool fh_eof(FileHandle& h);
bool fh_input_ready(FileHandle& h, double timeout_seconds);

struct Fmt {
    int width = -1;
    int precision = -1;
    bool set() const { return width >= 0 || precision >= 0; }
};

// Hook consulted before default rendering (user SUBROUTINE WRITE(FILE,T)).
using WriteOverride = std::function<bool(const FilePtr&, const Value&, TypePtr)>;

// ---- canonical text grammar ----
std::string render_scalar(const Value& v, const Fmt& fmt);
// Renders any pointer-free value; structure/array elements space-separated,
// POINTER for references. `type` is the static item type (for layout).
void render_value_text(std::string& out, const Value& v, TypePtr type, const Fmt& fmt,
                       const WriteOverride& over, const FilePtr& dest);

// Text parsing (READ). All throw CplError on malformed input / EOF.
Value parse_value_text(FileHandle& h, TypePtr type);
void skip_input_whitespace(FileHandle& h);
std::string read_input_word(FileHandle& h);
void match_literal_text(FileHandle& h, const std::string& lit);

// ---- binary layout (little-endian, packed) ----
std::optional<long> serialized_size(TypePtr t);
void serialize_value(std::string& out, const Value& v, TypePtr t);
Value deserialize_value(const char* data, size_t n, TypePtr t, size_t* used);

void write_binary_value(FileHandle& h, const Value& v, TypePtr t);
Value read_binary_value(FileHandle& h, TypePtr t);

// ---- STORED views ----
// Builds the stored view for a file bound to STORED ARRAY(...) OF t; a
// leading `*` dim derives its upper bound from the file size.
StoredViewData make_stored_view(const FilePtr& file, TypePtr stored_array_type);
Value stored_read(const StoredRef& ref);
void stored_write(const StoredRef& ref, const Value& v);

}  // namespace cpl

#endif
