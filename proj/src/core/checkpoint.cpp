#include "checkpoint.hpp"

#include <cstring>

#include "util.hpp"

namespace hamlet {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    explicit Reader(const std::string& b) : bytes(b) {}
    void need(std::size_t n) const {
        if (bytes.size() - pos < n) throw DataError("checkpoint: truncated container");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

template <class Fn>
void scan_checkpoint(const std::string& path, Fn&& on_tensor) {
    const std::string bytes = read_file(path);
    Reader r(bytes);
    if (r.raw(4) != "HMLT") throw DataError("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != 1) throw DataError("checkpoint: unsupported version in " + path);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.raw(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != 0) throw DataError("checkpoint: unsupported dtype for " + name);
        const std::uint8_t ndim = r.u8();
        std::vector<std::size_t> shape;
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            numel *= shape.back();
        }
        on_tensor(name, shape, r.raw(numel * 4));
    }
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::string out = "HMLT";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw ConfigError("checkpoint: tensor name too long");
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(0);  // dtype float32
        out.push_back(static_cast<char>(t.ndim()));
        for (std::size_t d : t.shape()) put_u64(out, d);
        for (double x : t.data()) {
            const float f = static_cast<float>(x);
            char buf[4];
            std::memcpy(buf, &f, 4);
            out.append(buf, 4);
        }
    }
    write_file(path, out);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::vector<std::pair<std::string, Tensor>> result;
    scan_checkpoint(path, [&](const std::string& name, const std::vector<std::size_t>& shape,
                              const std::string& payload) {
        std::vector<double> vals(payload.size() / 4);
        for (std::size_t i = 0; i < vals.size(); ++i) {
            float f;
            std::memcpy(&f, payload.data() + i * 4, 4);
            vals[i] = static_cast<double>(f);
        }
        result.emplace_back(name, Tensor::from_data(shape, std::move(vals)));
    });
    return result;
}

std::map<std::string, std::string> checkpoint_payloads(const std::string& path) {
    std::map<std::string, std::string> out;
    scan_checkpoint(path, [&](const std::string& name, const std::vector<std::size_t>&,
                              const std::string& payload) { out[name] = payload; });
    return out;
}

bool verify_frozen(const std::string& before_path, const std::string& after_path) {
    const auto before = checkpoint_payloads(before_path);
    const auto after = checkpoint_payloads(after_path);
    bool any = false;
    for (const auto& [name, payload] : before) {
        if (name.rfind("backbone.", 0) != 0) continue;
        any = true;
        auto it = after.find(name);
        if (it == after.end())
            throw DataError("verify_frozen: tensor missing from the after checkpoint: " + name);
        if (it->second != payload) return false;
    }
    for (const auto& [name, payload] : after)
        if (name.rfind("backbone.", 0) == 0 && !before.count(name))
            throw DataError("verify_frozen: tensor missing from the before checkpoint: " + name);
    if (!any) throw DataError("verify_frozen: no backbone tensors present");
    return true;
}

}  // namespace hamlet
