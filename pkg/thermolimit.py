# thermolimit.py - Command-line entry point
"""Run `python thermolimit.py --help` for the command list."""

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
