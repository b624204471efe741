#include "zsxm/core.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

namespace zsxm {

std::string_view to_string(Modality m) {
    return m == Modality::Sketch ? "sketch" : "image";
}

Modality parse_modality(std::string_view tag) {
    std::string lower(tag);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "sketch") return Modality::Sketch;
    if (lower == "image") return Modality::Image;
    throw Error(Errc::unknown_modality, "unknown modality tag '" + std::string(tag) + "'");
}

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::missing_file: return "missing file";
        case Errc::dimension_mismatch: return "dimension mismatch";
        case Errc::unknown_modality: return "unknown modality";
        case Errc::non_finite: return "non-finite value";
        case Errc::empty_store: return "empty store";
        case Errc::unknown_class: return "unknown class";
        case Errc::invalid_split: return "invalid split";
        case Errc::parse_error: return "parse error";
        case Errc::missing_class: return "missing class";
        case Errc::duplicate_class: return "duplicate class";
        case Errc::invalid_argument: return "invalid argument";
        case Errc::corrupt_checkpoint: return "corrupt checkpoint";
        case Errc::variant_mismatch: return "variant mismatch";
        case Errc::diverged: return "diverged";
        case Errc::empty_gallery: return "empty gallery";
        case Errc::io_error: return "i/o error";
    }
    return "error";
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

// xoshiro256** seeded through splitmix64.
Rng::Rng(std::uint64_t seed) {
    for (auto& s : state_) s = splitmix64(seed);
}

std::uint64_t Rng::next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next();
        if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t x = base ^ (stream * 0xd1b54a32d192ed03ULL);
    splitmix64(x);
    return splitmix64(x);
}

}  // namespace zsxm
