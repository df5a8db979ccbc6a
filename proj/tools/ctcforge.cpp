#include "ctcforge/cli.hpp"

int main(int argc, char** argv) { return ctcforge::cli::run(argc, argv); }
