#pragma once

// Classical side channel between the trusted server and each party.
//
// The cipher is a splitmix64 keystream XOR. It has no integrity protection
// and is not meant to be secure; whether the eavesdropper can read
// plaintext is decided by adversary configuration, never by attacking it.
//
// Plaintext framing (all integers little-endian):
//
//   u32 field_count
//   repeated field_count times:
//     u32 length
//     u8  bytes[length]

#include <cstddef>
#include <cstdint>
#include <optional>
#include <algorithm>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "qauth/errors.hpp"
#include "qauth/rng.hpp"

namespace qauth {

using Bytes = std::vector<std::uint8_t>;

enum class Party : std::uint32_t { Server = 0, Alice = 1, Bob = 2 };

constexpr const char* to_string(Party p) noexcept {
    switch (p) {
        case Party::Server: return "Tr";
        case Party::Alice: return "Alice";
        case Party::Bob: return "Bob";
    }
    return "?";
}

struct SecretKey {
    std::uint64_t value = 0;

    friend bool operator==(const SecretKey&, const SecretKey&) = default;
};

// Keystream word `counter` for (key, nonce). Word i is the (i+1)-th output of
// a splitmix64 generator seeded with key ^ nonce.
constexpr std::uint64_t keystream_word(SecretKey key, std::uint64_t nonce, std::uint64_t counter) noexcept {
    return mix64(key.value ^ nonce ^ ((counter + 1) * kGoldenGamma));
}

// XORs `data` with the keystream. Applying it twice with the same key and
// nonce restores the input.
inline Bytes keystream_transform(SecretKey key, std::uint64_t nonce, std::span<const std::uint8_t> data) {
    Bytes out(data.begin(), data.end());
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i % 8 == 0) word = keystream_word(key, nonce, i / 8);
        out[i] ^= static_cast<std::uint8_t>(word >> (8 * (i % 8)));
    }
    return out;
}

struct ClassicalMessage {
    Party sender = Party::Server;
    Party receiver = Party::Server;
    std::uint64_t nonce = 0;
    bool encrypted = true;
    Bytes ciphertext;
};

// Append-only record of every classical message in a run. The eavesdropper
// gets a read-only view of it.
class ChannelTranscript {
public:
    ChannelTranscript() {
        messages_.reserve(8);
        used_nonces_.reserve(8);
    }

    // Encrypts and appends; returns the entry index.
    std::size_t send(Party from, Party to, SecretKey key, std::uint64_t nonce, std::span<const std::uint8_t> plaintext) {
        const NonceUse use{key.value, from, to, nonce};
        if (std::find(used_nonces_.begin(), used_nonces_.end(), use) != used_nonces_.end()) {
            throw Error("nonce reused for the same key and direction");
        }
        used_nonces_.push_back(use);
        messages_.push_back({from, to, nonce, true, keystream_transform(key, nonce, plaintext)});
        return messages_.size() - 1;
    }

    // Appends a message sent in the clear.
    std::size_t send_clear(Party from, Party to, std::span<const std::uint8_t> plaintext) {
        messages_.push_back({from, to, 0, false, Bytes(plaintext.begin(), plaintext.end())});
        return messages_.size() - 1;
    }

    // Decrypts entry `index` with `key`. A wrong key yields garbage, not an
    // error; the caller's decoder is what rejects it.
    Bytes receive(std::size_t index, SecretKey key) const {
        const ClassicalMessage& m = messages_.at(index);
        if (!m.encrypted) return m.ciphertext;
        return keystream_transform(key, m.nonce, m.ciphertext);
    }

    std::span<const ClassicalMessage> messages() const noexcept { return messages_; }
    std::size_t size() const noexcept { return messages_.size(); }

private:
    std::vector<ClassicalMessage> messages_;
    using NonceUse = std::tuple<std::uint64_t, Party, Party, std::uint64_t>;
    // A run sends a handful of messages, so a linear scan beats a tree.
    std::vector<NonceUse> used_nonces_;
};

// Little-endian field builder for message plaintexts. Fields are appended
// in place; finish() patches the leading field count.
class FieldWriter {
public:
    FieldWriter() {
        out_.reserve(64);
        put_u32(out_, 0);
    }

    FieldWriter& field(std::span<const std::uint8_t> bytes) {
        put_u32(out_, static_cast<std::uint32_t>(bytes.size()));
        out_.insert(out_.end(), bytes.begin(), bytes.end());
        ++count_;
        return *this;
    }
    FieldWriter& u8(std::uint8_t v) { return field(std::span(&v, 1)); }
    FieldWriter& u32(std::uint32_t v) {
        put_u32(out_, 4);
        put_u32(out_, v);
        ++count_;
        return *this;
    }
    FieldWriter& u64(std::uint64_t v) {
        put_u32(out_, 8);
        put_u64(out_, v);
        ++count_;
        return *this;
    }

    Bytes finish() const {
        Bytes out = out_;
        for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(count_ >> (8 * i));
        return out;
    }

    static void put_u32(Bytes& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    static void put_u64(Bytes& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

private:
    Bytes out_;
    std::uint32_t count_ = 0;
};

// A field inside a framed buffer; valid while the buffer is.
using FieldView = std::span<const std::uint8_t>;

// Splits a framed plaintext into fields. Returns nullopt unless the framing
// consumes the buffer exactly.
inline std::optional<std::vector<FieldView>> parse_fields(std::span<const std::uint8_t> data,
                                                          std::size_t max_fields = 64) {
    auto read_u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[at + i]) << (8 * i);
        return v;
    };
    if (data.size() < 4) return std::nullopt;
    const std::uint32_t count = read_u32(0);
    if (count > max_fields) return std::nullopt;

    std::vector<FieldView> fields;
    fields.reserve(count);
    std::size_t pos = 4;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (data.size() - pos < 4) return std::nullopt;
        const std::uint32_t len = read_u32(pos);
        pos += 4;
        if (data.size() - pos < len) return std::nullopt;
        fields.push_back(data.subspan(pos, len));
        pos += len;
    }
    if (pos != data.size()) return std::nullopt;
    return fields;
}

inline std::optional<std::uint32_t> as_u32(FieldView field) {
    if (field.size() != 4) return std::nullopt;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(field[i]) << (8 * i);
    return v;
}

inline std::optional<std::uint8_t> as_u8(FieldView field) {
    if (field.size() != 1) return std::nullopt;
    return field[0];
}

}  // namespace qauth
