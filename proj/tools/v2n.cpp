#include "v2n/cli.hpp"

int main(int argc, char** argv) { return v2n::cli::dispatch(argc, argv); }
