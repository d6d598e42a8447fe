#include "scribble/commands.hpp"

int main(int argc, char** argv)
{
    return scribble::run_cli(argc, argv);
}
