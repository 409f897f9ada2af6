#include <cover/cli.hpp>

int main(int argc, char** argv) { return cover::cli_main(argc, argv); }
