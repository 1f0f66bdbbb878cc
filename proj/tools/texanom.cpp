#include "texanom/cli.hpp"

int main(int argc, char** argv) { return texanom::cli::run(argc, argv); }
