#include "cli.hpp"

int main(int argc, char** argv) { return memekit::cli::dispatch(argc, argv); }
