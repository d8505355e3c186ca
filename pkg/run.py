#!/usr/bin/env python3
"""
Quick launcher for latentknn.

Usage:
    python run.py <command> [options]
"""

import sys
from pathlib import Path

# Add src to path for development
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from latentknn.cli import main

if __name__ == "__main__":
    sys.exit(main())
