#include "mmgl/cli/commands.hpp"

int main(int argc, char** argv) { return mmgl::cli::run(argc, argv); }
