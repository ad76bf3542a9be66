// Placeholder CLI; subcommands are filled in as the library lands.
#include <cstdio>

int main() {
    std::puts("agx: no subcommand");
    return 2;
}
