#include "cpl/iosys.hpp"

#include <poll.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstring>

#include "cpl/arrays.hpp"
#include "cpl/diag.hpp"

namespace cpl {

namespace {

[[noreturn]] void io_error(const std::string& msg) { throw CplError(msg); }

}  // namespace

FileHandle::~FileHandle() {
    if (f && !is_std) std::fclose(f);
    if (temp && !path.empty()) std::remove(path.c_str());
}

FilePtr open_path(const std::string& path, bool truncate) {
    FILE* f = nullptr;
    if (truncate) {
        f = std::fopen(path.c_str(), "w+b");
    } else {
        f = std::fopen(path.c_str(), "r+b");
        if (!f) f = std::fopen(path.c_str(), "w+b");
    }
    if (!f) io_error("cannot open file " + path);
    auto h = std::make_shared<FileHandle>();
    h->f = f;
    h->path = path;
    return h;
}

FilePtr make_temp_file() {
    char tmpl[] = "/tmp/cplXXXXXX";
    int fd = mkstemp(tmpl);
    if (fd < 0) io_error("cannot create temporary file");
    FILE* f = fdopen(fd, "w+b");
    if (!f) io_error("cannot create temporary file");
    auto h = std::make_shared<FileHandle>();
    h->f = f;
    h->path = tmpl;
    h->temp = true;
    return h;
}

FilePtr wrap_std_stream(FILE* f, const std::string& name, bool writable) {
    auto h = std::make_shared<FileHandle>();
    h->f = f;
    h->path = name;
    h->is_std = true;
    h->writable = writable;
    return h;
}

FilePtr make_mem_file(std::string initial) {
    auto h = std::make_shared<FileHandle>();
    h->is_mem = true;
    h->buf = std::move(initial);
    return h;
}

int fh_getc(FileHandle& h) {
    int c;
    if (!h.pushback.empty()) {
        c = (unsigned char)h.pushback.back();
        h.pushback.pop_back();
    } else if (h.is_mem) {
        c = h.mem_pos < h.buf.size() ? (unsigned char)h.buf[h.mem_pos++] : EOF;
    } else {
        c = std::getc(h.f);
    }
    if (c != EOF) {
        if (h.marking) h.consumed += (char)c;
        h.line_start = c == '\n';
    }
    return c;
}

void fh_ungetc(FileHandle& h, int c) {
    if (c == EOF) return;
    h.pushback += (char)c;
    if (h.marking && !h.consumed.empty()) h.consumed.pop_back();
}

void fh_mark(FileHandle& h) {
    h.marking = true;
    h.consumed.clear();
}

void fh_rewind(FileHandle& h) {
    // replay consumed characters (LIFO into pushback)
    for (auto it = h.consumed.rbegin(); it != h.consumed.rend(); ++it)
        h.pushback += *it;
    h.consumed.clear();
    h.marking = false;
}

void fh_unmark(FileHandle& h) {
    h.marking = false;
    h.consumed.clear();
}

long fh_tell(FileHandle& h) {
    if (h.is_mem) return (long)h.mem_pos - (long)h.pushback.size();
    return std::ftell(h.f) - (long)h.pushback.size();
}

void fh_seek(FileHandle& h, long pos) {
    h.pushback.clear();
    h.marking = false;
    h.consumed.clear();
    if (h.is_mem) {
        h.mem_pos = (size_t)std::max(0L, pos);
        return;
    }
    std::fseek(h.f, pos, SEEK_SET);
}

void fh_write_bytes(FileHandle& h, const char* data, size_t n) {
    if (h.is_mem) {
        if (h.mem_pos > h.buf.size()) h.buf.resize(h.mem_pos, '\0');
        if (h.mem_pos + n > h.buf.size()) h.buf.resize(h.mem_pos + n);
        std::memcpy(&h.buf[h.mem_pos], data, n);
        h.mem_pos += n;
        return;
    }
    if (std::fwrite(data, 1, n, h.f) != n) io_error("write failed on " + h.path);
}

void fh_read_bytes(FileHandle& h, char* data, size_t n) {
    size_t got = 0;
    while (got < n && !h.pushback.empty()) {
        data[got++] = h.pushback.back();
        h.pushback.pop_back();
    }
    if (h.is_mem) {
        size_t avail = h.buf.size() - std::min(h.buf.size(), h.mem_pos);
        size_t take = std::min(n - got, avail);
        std::memcpy(data + got, h.buf.data() + h.mem_pos, take);
        h.mem_pos += take;
        got += take;
    } else {
        got += std::fread(data + got, 1, n - got, h.f);
    }
    if (got != n) io_error("unexpected end of file on " + h.path);
}

void fh_flush(FileHandle& h) {
    if (!h.is_mem && h.f) std::fflush(h.f);
}

void fh_close(FileHandle& h) {
    if (h.is_mem) return;
    if (h.f && !h.is_std) {
        std::fclose(h.f);
        h.f = nullptr;
    }
}

long fh_size(FileHandle& h) {
    if (h.is_mem) return (long)h.buf.size();
    long cur = std::ftell(h.f);
    std::fseek(h.f, 0, SEEK_END);
    long size = std::ftell(h.f);
    std::fseek(h.f, cur, SEEK_SET);
    return size;
}

bool fh_eof(FileHandle& h) {
    if (!h.pushback.empty()) return false;
    int c = fh_getc(h);
    if (c == EOF) return true;
    fh_ungetc(h, c);
    return false;
}

bool fh_input_ready(FileHandle& h, double timeout_seconds) {
    if (!h.pushback.empty()) return true;
    if (h.is_mem) return h.mem_pos < h.buf.size();
    int fd = fileno(h.f);
    struct pollfd p{fd, POLLIN, 0};
    int ms = timeout_seconds <= 0 ? 0 : (int)std::lround(timeout_seconds * 1000.0);
    return poll(&p, 1, ms) > 0 && (p.revents & POLLIN);
}

// ---------------- text rendering ----------------

namespace {

std::string shortest_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string shortest_float(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed_format(double v, const Fmt& fmt) {
    char buf[128];
    int w = fmt.width < 0 ? 1 : fmt.width;
    int p = fmt.precision < 0 ? 6 : fmt.precision;
    std::snprintf(buf, sizeof buf, "%*.*f", w, p, v);
    return buf;
}

bool is_pointerish(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return false;
    switch (u->kind) {
        case TypeKind::PointerTo:
        case TypeKind::DynamicPointer:
        case TypeKind::Stored:
        case TypeKind::SubroutineType:
        case TypeKind::FunctionType:
            return true;
        default:
            return false;
    }
}

}  // namespace

std::string render_scalar(const Value& v, const Fmt& fmt) {
    if (auto* b = v.get_if<bool>()) return *b ? "Y" : "N";
    if (auto* c = v.get_if<char>()) return std::string(1, *c);
    if (auto* i = v.get_if<int32_t>()) {
        if (fmt.width >= 0) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%*d", fmt.width, *i);
            return buf;
        }
        return std::to_string(*i);
    }
    if (auto* d = v.get_if<double>())
        return fmt.set() ? fixed_format(*d, fmt) : shortest_double(*d);
    if (auto* s = v.get_if<float>())
        return fmt.set() ? fixed_format(*s, fmt) : shortest_float(*s);
    if (auto* e = v.get_if<EnumValue>()) {
        TypePtr u = unwrap_named(e->type);
        if (u && e->ordinal >= 0 && e->ordinal < (long)u->members.size())
            return u->members[e->ordinal];
        return std::to_string(e->ordinal);
    }
    return "POINTER";
}

void render_value_text(std::string& out, const Value& v, TypePtr type, const Fmt& fmt,
                       const WriteOverride& over, const FilePtr& dest) {
    if (over && type && over(dest, v, type)) return;
    if (auto* view = v.get_if<ViewData>()) {
        if (!view->storage) {
            out += "POINTER";
            return;
        }
        TypePtr et = view->elem;
        bool is_str = et && unwrap_named(et)->kind == TypeKind::Char;
        bool first = true;
        enumerate(view->axes, view->offset, [&](long off) {
            if (!is_str && !first) out += " ";
            first = false;
            render_value_text(out, view->storage->slots[off], et, fmt, over, dest);
        });
        return;
    }
    if (auto* ref = v.get_if<MemRef>()) {
        // structure instance: fields in declaration order
        TypePtr u = ref->type ? unwrap_named(ref->type) : nullptr;
        if (ref->null() || !u) {
            out += "POINTER";
            return;
        }
        if (u->kind == TypeKind::Structure) {
            long off = ref->offset;
            bool first = true;
            for (auto& f : u->fields) {
                if (!first) out += " ";
                first = false;
                long fs = slot_count(f.type).value_or(1);
                TypePtr fu = unwrap_named(f.type);
                if (fu->kind == TypeKind::Structure) {
                    render_value_text(out, Value{MemRef{ref->storage, off, f.type}},
                                      f.type, fmt, over, dest);
                } else if (fu->kind == TypeKind::Array && !fu->dims.empty() &&
                           !fu->dims[0].star && slot_count(f.type)) {
                    ViewData fv = view_of_inline_array(ref->storage, off, f.type);
                    render_value_text(out, Value{fv}, f.type, fmt, over, dest);
                } else {
                    render_value_text(out, ref->storage->slots[off], f.type, fmt, over,
                                      dest);
                }
                off += fs;
            }
            return;
        }
        out += "POINTER";
        return;
    }
    if (v.is<StoredViewData>() || v.is<FilePtr>() || v.is<SubrValue>() ||
        v.is<StoredRef>()) {
        out += "POINTER";
        return;
    }
    out += render_scalar(v, fmt);
}

// ---------------- text parsing ----------------

void skip_input_whitespace(FileHandle& h) {
    bool at_line_start = h.line_start;
    while (true) {
        int c = fh_getc(h);
        if (c == EOF) return;
        if (c == '\n') {
            at_line_start = true;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') continue;
        if (c == '!' && at_line_start) {
            while (c != EOF && c != '\n') c = fh_getc(h);
            at_line_start = true;
            continue;
        }
        fh_ungetc(h, c);
        return;
    }
}

std::string read_input_word(FileHandle& h) {
    skip_input_whitespace(h);
    std::string word;
    while (true) {
        int c = fh_getc(h);
        if (c == EOF) break;
        if (isalnum(c) || c == '_') {
            word += (char)c;
        } else {
            fh_ungetc(h, c);
            break;
        }
    }
    if (word.empty()) io_error("expected a word in input");
    return word;
}

void match_literal_text(FileHandle& h, const std::string& lit) {
    skip_input_whitespace(h);
    for (char want : lit) {
        int c = fh_getc(h);
        if (c == EOF) io_error("unexpected end of input while matching \"" + lit + "\"");
        if ((char)c != want)
            io_error("input does not match literal \"" + lit + "\"");
    }
}

namespace {

std::string read_number_token(FileHandle& h, bool allow_real) {
    skip_input_whitespace(h);
    std::string s;
    int c = fh_getc(h);
    if (c == '+' || c == '-') {
        s += (char)c;
        c = fh_getc(h);
    }
    bool digits = false;
    while (c != EOF && isdigit(c)) {
        s += (char)c;
        digits = true;
        c = fh_getc(h);
    }
    if (allow_real && c == '.') {
        s += '.';
        c = fh_getc(h);
        while (c != EOF && isdigit(c)) {
            s += (char)c;
            digits = true;
            c = fh_getc(h);
        }
    }
    if (allow_real && digits && (c == 'e' || c == 'E')) {
        int e_char = c;
        int c2 = fh_getc(h);
        int sign_char = 0;
        if (c2 == '+' || c2 == '-') {
            sign_char = c2;
            c2 = fh_getc(h);
        }
        if (c2 != EOF && isdigit(c2)) {
            s += (char)e_char;
            if (sign_char) s += (char)sign_char;
            while (c2 != EOF && isdigit(c2)) {
                s += (char)c2;
                c2 = fh_getc(h);
            }
            c = c2;
        } else {
            // not an exponent after all; push everything back
            if (c2 != EOF) fh_ungetc(h, c2);
            if (sign_char) fh_ungetc(h, sign_char);
            fh_ungetc(h, e_char);
            c = EOF;
        }
    }
    if (c != EOF) fh_ungetc(h, c);
    if (!digits) io_error("malformed number in input");
    return s;
}

}  // namespace

Value parse_value_text(FileHandle& h, TypePtr type) {
    TypePtr u = unwrap_named(type);
    if (!u) io_error("cannot READ this type");
    switch (u->kind) {
        case TypeKind::Integer: {
            std::string s = read_number_token(h, false);
            errno = 0;
            long v = std::strtol(s.c_str(), nullptr, 10);
            if (errno || v < INT32_MIN || v > INT32_MAX)
                io_error("integer out of range in input");
            return Value{(int32_t)v};
        }
        case TypeKind::Real: {
            std::string s = read_number_token(h, true);
            return Value{std::strtod(s.c_str(), nullptr)};
        }
        case TypeKind::Single: {
            std::string s = read_number_token(h, true);
            return Value{std::strtof(s.c_str(), nullptr)};
        }
        case TypeKind::Char: {
            skip_input_whitespace(h);
            int c = fh_getc(h);
            if (c == EOF) io_error("unexpected end of input reading CHAR");
            return Value{(char)c};
        }
        case TypeKind::Boolean: {
            std::string w = read_input_word(h);
            char c = w[0];
            if (c == 'T' || c == 'Y' || c == 't' || c == 'y') return Value{true};
            if (c == 'F' || c == 'N' || c == 'f' || c == 'n') return Value{false};
            io_error("cannot read '" + w + "' as BOOLEAN");
        }
        case TypeKind::Enum: {
            std::string w = read_input_word(h);
            for (size_t i = 0; i < u->members.size(); i++)
                if (u->members[i] == w) return Value{EnumValue{u, (long)i}};
            io_error("'" + w + "' is not a member of " + type_to_string(type));
        }
        default:
            io_error("cannot READ a value of type " + type_to_string(type));
    }
}

// ---------------- binary layout ----------------

std::optional<long> serialized_size(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return std::nullopt;
    switch (u->kind) {
        case TypeKind::Boolean: return 4;
        case TypeKind::Char: return 1;
        case TypeKind::Integer: return 4;
        case TypeKind::Single: return 4;
        case TypeKind::Real: return 8;
        case TypeKind::Enum: return 4;
        case TypeKind::Array: {
            auto es = serialized_size(u->elem);
            if (!es) return std::nullopt;
            long n = 1;
            for (auto& d : u->dims) {
                if (!d.known) return std::nullopt;
                n *= std::max(0L, d.length());
            }
            return n * *es;
        }
        case TypeKind::Structure: {
            long total = 0;
            for (auto& f : u->fields) {
                auto fs = serialized_size(f.type);
                if (!fs) return std::nullopt;
                total += *fs;
            }
            return total;
        }
        default:
            return std::nullopt;
    }
}

namespace {

void put_le32(std::string& out, uint32_t v) {
    out += (char)(v & 0xff);
    out += (char)((v >> 8) & 0xff);
    out += (char)((v >> 16) & 0xff);
    out += (char)((v >> 24) & 0xff);
}

void put_le64(std::string& out, uint64_t v) {
    put_le32(out, (uint32_t)(v & 0xffffffffu));
    put_le32(out, (uint32_t)(v >> 32));
}

uint32_t get_le32(const unsigned char* p) {
    return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) |
           ((uint32_t)p[3] << 24);
}

uint64_t get_le64(const unsigned char* p) {
    return (uint64_t)get_le32(p) | ((uint64_t)get_le32(p + 4) << 32);
}

void serialize_scalar(std::string& out, const Value& v, TypePtr t) {
    TypePtr u = unwrap_named(t);
    switch (u->kind) {
        case TypeKind::Boolean: put_le32(out, v.get_if<bool>() && v.as<bool>() ? 1 : 0); break;
        case TypeKind::Char: out += v.get_if<char>() ? v.as<char>() : '\0'; break;
        case TypeKind::Integer:
            put_le32(out, (uint32_t)(v.get_if<int32_t>() ? v.as<int32_t>() : 0));
            break;
        case TypeKind::Single: {
            float f = v.get_if<float>() ? v.as<float>() : 0.0f;
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_le32(out, bits);
            break;
        }
        case TypeKind::Real: {
            double d = v.get_if<double>() ? v.as<double>() : 0.0;
            uint64_t bits;
            std::memcpy(&bits, &d, 8);
            put_le64(out, bits);
            break;
        }
        case TypeKind::Enum:
            put_le32(out, (uint32_t)(v.get_if<EnumValue>() ? v.as<EnumValue>().ordinal : 0));
            break;
        default:
            io_error("cannot serialize type " + type_to_string(t));
    }
}

}  // namespace

void serialize_value(std::string& out, const Value& v, TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) io_error("cannot serialize this value");
    switch (u->kind) {
        case TypeKind::Array: {
            auto* view = v.get_if<ViewData>();
            if (!view || !view->storage) io_error("cannot serialize an unbound array");
            enumerate(view->axes, view->offset, [&](long off) {
                TypePtr et = unwrap_named(view->elem);
                if (et->kind == TypeKind::Structure) {
                    serialize_value(out, Value{MemRef{view->storage, off, view->elem}},
                                    view->elem);
                } else if (et->kind == TypeKind::Array) {
                    ViewData ev = view_of_inline_array(view->storage, off, view->elem);
                    serialize_value(out, Value{ev}, view->elem);
                } else {
                    serialize_scalar(out, view->storage->slots[off], view->elem);
                }
            });
            return;
        }
        case TypeKind::Structure: {
            auto* ref = v.get_if<MemRef>();
            if (!ref || ref->null()) io_error("cannot serialize an unbound structure");
            long off = ref->offset;
            for (auto& f : u->fields) {
                long fs = slot_count(f.type).value_or(1);
                TypePtr fu = unwrap_named(f.type);
                if (fu->kind == TypeKind::Structure) {
                    serialize_value(out, Value{MemRef{ref->storage, off, f.type}}, f.type);
                } else if (fu->kind == TypeKind::Array && slot_count(f.type)) {
                    ViewData fv = view_of_inline_array(ref->storage, off, f.type);
                    serialize_value(out, Value{fv}, f.type);
                } else {
                    serialize_scalar(out, ref->storage->slots[off], f.type);
                }
                off += fs;
            }
            return;
        }
        default:
            serialize_scalar(out, v, t);
            return;
    }
}

Value deserialize_value(const char* data, size_t n, TypePtr t, size_t* used) {
    TypePtr u = unwrap_named(t);
    const unsigned char* p = (const unsigned char*)data;
    auto need = [&](size_t k) {
        if (n < k) io_error("short read");
    };
    switch (u->kind) {
        case TypeKind::Boolean: need(4); *used = 4; return Value{get_le32(p) != 0};
        case TypeKind::Char: need(1); *used = 1; return Value{(char)p[0]};
        case TypeKind::Integer: need(4); *used = 4; return Value{(int32_t)get_le32(p)};
        case TypeKind::Single: {
            need(4);
            *used = 4;
            uint32_t bits = get_le32(p);
            float f;
            std::memcpy(&f, &bits, 4);
            return Value{f};
        }
        case TypeKind::Real: {
            need(8);
            *used = 8;
            uint64_t bits = get_le64(p);
            double d;
            std::memcpy(&d, &bits, 8);
            return Value{d};
        }
        case TypeKind::Enum: {
            need(4);
            *used = 4;
            return Value{EnumValue{u, (long)(int32_t)get_le32(p)}};
        }
        case TypeKind::Array: {
            std::vector<std::pair<long, long>> bounds;
            for (auto& d : u->dims) {
                if (!d.known) io_error("cannot read array with run-time bounds");
                bounds.push_back({d.lo, d.hi});
            }
            ViewData view = make_view(u->elem, bounds);
            size_t off = 0;
            enumerate(view.axes, view.offset, [&](long slot) {
                size_t k = 0;
                TypePtr et = unwrap_named(u->elem);
                if (et->kind == TypeKind::Structure || et->kind == TypeKind::Array) {
                    Value sub = deserialize_value(data + off, n - off, u->elem, &k);
                    // copy into place
                    if (auto* sv = sub.get_if<ViewData>()) {
                        long i = slot;
                        enumerate(sv->axes, sv->offset, [&](long so) {
                            view.storage->slots[i++] = sv->storage->slots[so];
                        });
                    } else if (auto* sr = sub.get_if<MemRef>()) {
                        long cnt = slot_count(u->elem).value_or(1);
                        for (long j = 0; j < cnt; j++)
                            view.storage->slots[slot + j] =
                                sr->storage->slots[sr->offset + j];
                    }
                } else {
                    Value sub = deserialize_value(data + off, n - off, u->elem, &k);
                    view.storage->slots[slot] = sub;
                }
                off += k;
            });
            *used = off;
            return Value{view};
        }
        case TypeKind::Structure: {
            long slots = slot_count(u).value_or(0);
            StoragePtr st = allocate_storage(u, 1);
            (void)slots;
            size_t off = 0;
            long slot = 0;
            for (auto& f : u->fields) {
                size_t k = 0;
                TypePtr fu = unwrap_named(f.type);
                Value sub = deserialize_value(data + off, n - off, f.type, &k);
                if (fu->kind == TypeKind::Structure) {
                    auto* sr = sub.get_if<MemRef>();
                    long cnt = slot_count(f.type).value_or(1);
                    for (long j = 0; j < cnt; j++)
                        st->slots[slot + j] = sr->storage->slots[sr->offset + j];
                } else if (fu->kind == TypeKind::Array && slot_count(f.type)) {
                    auto* sv = sub.get_if<ViewData>();
                    long i = slot;
                    enumerate(sv->axes, sv->offset, [&](long so) {
                        st->slots[i++] = sv->storage->slots[so];
                    });
                } else {
                    st->slots[slot] = sub;
                }
                off += k;
                slot += slot_count(f.type).value_or(1);
            }
            *used = off;
            return Value{MemRef{st, 0, t}};
        }
        default:
            io_error("cannot deserialize type " + type_to_string(t));
    }
}

void write_binary_value(FileHandle& h, const Value& v, TypePtr t) {
    std::string bytes;
    serialize_value(bytes, v, t);
    fh_write_bytes(h, bytes.data(), bytes.size());
}

Value read_binary_value(FileHandle& h, TypePtr t) {
    auto size = serialized_size(t);
    if (!size) io_error("cannot read type " + type_to_string(t) + " in binary");
    std::string bytes((size_t)*size, '\0');
    fh_read_bytes(h, bytes.data(), bytes.size());
    size_t used = 0;
    return deserialize_value(bytes.data(), bytes.size(), t, &used);
}

// ---------------- STORED views ----------------

StoredViewData make_stored_view(const FilePtr& file, TypePtr stored_array_type) {
    TypePtr u = unwrap_named(stored_array_type);
    if (u && u->kind == TypeKind::Stored) u = unwrap_named(u->target);
    StoredViewData v;
    v.file = file;
    if (!u) io_error("invalid STORED type");
    if (u->kind != TypeKind::Array) {
        // a stored scalar/structure: one-element view with no axes
        v.elem = u;
        v.elem_size = serialized_size(u).value_or(0);
        if (!v.elem_size) io_error("STORED type must have fixed size");
        return v;
    }
    v.elem = u->elem;
    auto es = serialized_size(u->elem);
    if (!es) io_error("STORED element type must have fixed size");
    v.elem_size = *es;
    long stride = 1;
    v.axes.resize(u->dims.size());
    for (int k = (int)u->dims.size() - 1; k >= 0; k--) {
        const ArrayDim& d = u->dims[k];
        if (d.star) {
            if (k != 0) io_error("only the leading STORED dimension may be *");
            long total = file ? fh_size(*file) / v.elem_size : 0;
            long below = stride;  // elements per record
            long count = below > 0 ? total / below : 0;
            v.axes[k] = {0, count - 1, stride};
            v.auto_extend = true;
        } else {
            if (!d.known) io_error("STORED bounds must be compile-time constants");
            v.axes[k] = {d.lo, d.hi, stride};
        }
        stride *= std::max(0L, v.axes[k].length());
    }
    long off = 0;
    for (auto& ax : v.axes) off += ax.lo * ax.stride;
    v.offset = -off;
    return v;
}

Value stored_read(const StoredRef& ref) {
    if (!ref.file) io_error("stored reference is not bound to a file");
    auto size = serialized_size(ref.type);
    if (!size) io_error("stored element has no fixed size");
    if (ref.byte_offset + *size > fh_size(*ref.file))
        io_error("read past the end of stored file " + ref.file->path);
    fh_seek(*ref.file, ref.byte_offset);
    std::string bytes((size_t)*size, '\0');
    fh_read_bytes(*ref.file, bytes.data(), bytes.size());
    size_t used = 0;
    return deserialize_value(bytes.data(), bytes.size(), ref.type, &used);
}

void stored_write(const StoredRef& ref, const Value& v) {
    if (!ref.file) io_error("stored reference is not bound to a file");
    long size = fh_size(*ref.file);
    if (ref.byte_offset > size) {
        // zero-fill the gap
        fh_seek(*ref.file, size);
        std::string zeros((size_t)(ref.byte_offset - size), '\0');
        fh_write_bytes(*ref.file, zeros.data(), zeros.size());
    }
    fh_seek(*ref.file, ref.byte_offset);
    std::string bytes;
    serialize_value(bytes, v, ref.type);
    fh_write_bytes(*ref.file, bytes.data(), bytes.size());
}

}  // namespace cpl
