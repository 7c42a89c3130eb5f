// Command-line entry point; subcommands are wired in as stages land.

#include <cstdio>

int main() {
    std::puts("logatlas: subcommands not wired yet");
    return 0;
}
