#include "mflab/cli.hpp"

int main(int argc, char** argv) { return mflab::cli::dispatch(argc, argv); }
