#include "kwc/cli_io.hpp"

int main(int argc, char** argv) { return kwc::cli::run(argc, argv); }
