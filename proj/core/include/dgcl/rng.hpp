#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dgcl {

// mt19937_64 engine with hand-rolled uniform/normal transforms, so draws do
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    // Independent stream keyed by a root seed and a path of tags.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                        // [0, 1)
    double normal();                         // N(0, 1)
    std::uint64_t below(std::uint64_t n);    // uniform in [0, n)

    std::vector<std::size_t> permutation(std::size_t n);
    // k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> choose(std::size_t n, std::size_t k);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dgcl
