#include "tsld/cli/app.hpp"

int main(int argc, char** argv) { return tsld::cli::main(argc, argv); }
