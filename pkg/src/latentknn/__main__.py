"""
Entry point for running latentknn as a module.

Usage:
    python -m latentknn <command> [options]
"""

import sys

from latentknn.cli import main

if __name__ == "__main__":
    sys.exit(main())
