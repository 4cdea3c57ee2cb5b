// Orchestrates k copies of the two-state busy beaver and a mixed breed,
// printing (floor(o2), N) and the resulting dimension.

#include <iostream>

#include "godngod/godngod.hpp"

int main() {
    using namespace godngod;
    const Machine bb2 = parse_machine("1 0 -> 1 R 2\n1 1 -> 1 L 2\n2 0 -> 1 L 1\n2 1 -> 1 R 0\n", "bb2");
    const Machine bb3 = parse_machine("1 0 -> 1 R 2\n1 1 -> 1 R 0\n2 0 -> 1 L 2\n2 1 -> 0 R 3\n3 0 -> 1 L 3\n3 1 -> 1 L 1\n", "bb3");

    for (std::size_t k = 1; k <= 4; ++k) {
        Breed b;
        b.members.assign(k, bb2);
        const RunResult r = orchestrate(b, 1, 1000);
        std::cout << k << " x bb2: N=" << r.n_steps << " floor(o2)=" << r.o2_floor << " dimension="
                  << (r.dimension ? format_double(*r.dimension) : "undefined") << "\n";
    }

    Breed mixed;
    mixed.members = {bb2, bb3, bb3};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RunResult r = orchestrate(mixed, seed, 1000);
        std::cout << "bb2+2 x bb3 seed " << seed << ": N=" << r.n_steps << " o2=" << r.o2_mean << " ("
                  << to_string(r.termination) << ")\n";
    }
}
