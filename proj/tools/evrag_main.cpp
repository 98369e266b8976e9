#include "evrag/cli.hpp"

int main(int argc, char** argv) { return evrag::cli::cli_main(argc, argv); }
